#include "flowrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace flowrec {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'F', 'L', 'O', 'W', 'R', 'E', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorCode::parse_error, "checkpoint truncated");
  return value;
}

std::uint32_t kind_code(LayerKind kind) {
  switch (kind) {
    case LayerKind::attention: return 0;
    case LayerKind::gcn: return 1;
    case LayerKind::mean_aggregator: return 2;
  }
  return 0;
}

}  // namespace

void write_checkpoint(std::ostream& out, const GacnModel& model) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, kind_code(model.spec.kind));
  const std::uint32_t flags = (model.spec.use_diffusion ? 1u : 0u) | (model.spec.use_fp ? 2u : 0u) |
                              (model.spec.use_bi ? 4u : 0u);
  put<std::uint32_t>(out, flags);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.widths.size()));
  for (int w : model.spec.widths) put<std::int32_t>(out, w);
  put<double>(out, model.velocity_scale);
  put<double>(out, model.length_scale);
  put<std::int32_t>(out, model.knn);
  const auto params = parameters(model);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value->rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value->cols()));
    out.write(reinterpret_cast<const char*>(p.value->data()),
              static_cast<std::streamsize>(sizeof(double) * p.value->size()));
  }
}

GacnModel read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::parse_error, "not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::parse_error, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelSpec spec;
  const auto kind = get<std::uint32_t>(in);
  if (kind > 2) fail(ErrorCode::parse_error, "bad layer kind in checkpoint");
  spec.kind = kind == 0 ? LayerKind::attention : kind == 1 ? LayerKind::gcn : LayerKind::mean_aggregator;
  const auto flags = get<std::uint32_t>(in);
  spec.use_diffusion = flags & 1u;
  spec.use_fp = flags & 2u;
  spec.use_bi = flags & 4u;
  const auto nwidths = get<std::uint32_t>(in);
  if (nwidths < 2 || nwidths > 1024) fail(ErrorCode::parse_error, "bad width count in checkpoint");
  spec.widths.clear();
  for (std::uint32_t i = 0; i < nwidths; ++i) spec.widths.push_back(get<std::int32_t>(in));

  GacnModel model = init_glorot(spec, 0);
  model.velocity_scale = get<double>(in);
  model.length_scale = get<double>(in);
  model.knn = get<std::int32_t>(in);

  std::map<std::string, Matrix*> slots;
  for (auto& p : parameters(model)) slots[p.name] = p.value;
  const auto count = get<std::uint32_t>(in);
  if (count != slots.size()) fail(ErrorCode::parse_error, "checkpoint tensor count mismatch");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) fail(ErrorCode::parse_error, "tensor name too long");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    const auto it = slots.find(name);
    if (!in || it == slots.end()) fail(ErrorCode::parse_error, "unexpected tensor '" + name + "'");
    Matrix& m = *it->second;
    if (m.rows() != rows || m.cols() != cols) {
      fail(ErrorCode::parse_error, "tensor '" + name + "' has the wrong shape");
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) fail(ErrorCode::parse_error, "checkpoint truncated in '" + name + "'");
  }
  return model;
}

void save_checkpoint(const GacnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  write_checkpoint(out, model);
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

GacnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace flowrec
