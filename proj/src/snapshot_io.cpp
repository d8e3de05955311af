#include "flowrec/snapshot_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace flowrec {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) {
      c.remove_suffix(1);
    }
  }
  return cells;
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
  fail(ErrorCode::parse_error, source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

FlowSnapshot read_snapshot_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) parse_fail(source, 1, "empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_commas(line);
  const std::vector<std::string_view> required{"x", "z", "u_x", "u_z"};
  std::string missing;
  for (std::size_t c = 0; c < required.size(); ++c) {
    if (c >= header.size() || header[c] != required[c]) {
      if (!missing.empty()) missing += ",";
      missing += required[c];
    }
  }
  if (!missing.empty()) parse_fail(source, 1, "missing columns: " + missing);
  const bool has_mask = header.size() >= 5 && header[4] == "mask";
  if (header.size() > 5 || (header.size() == 5 && !has_mask)) {
    parse_fail(source, 1, "unexpected header column");
  }
  const std::size_t ncols = has_mask ? 5 : 4;

  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (cells.size() != ncols) {
      parse_fail(source, line_no, "expected " + std::to_string(ncols) + " cells, got " +
                                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double v = 0.0;
      const auto* first = cells[c].data();
      const auto* last = first + cells[c].size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last || cells[c].empty()) {
        parse_fail(source, line_no, "non-numeric cell '" + std::string(cells[c]) + "'");
      }
      if (!std::isfinite(v)) {
        parse_fail(source, line_no, "non-finite cell '" + std::string(cells[c]) + "'");
      }
      values.push_back(v);
    }
    if (has_mask) {
      if (cells[4] == "0") {
        mask.push_back(0);
      } else if (cells[4] == "1") {
        mask.push_back(1);
      } else {
        parse_fail(source, line_no, "mask must be 0 or 1");
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(values.size() / 4);
  FlowSnapshot snap;
  snap.points.resize(n, 2);
  snap.velocities.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    snap.points(i, 0) = values[4 * i];
    snap.points(i, 1) = values[4 * i + 1];
    snap.velocities(i, 0) = values[4 * i + 2];
    snap.velocities(i, 1) = values[4 * i + 3];
  }
  snap.mask = std::move(mask);
  snap.domain_tag = source;
  validate_snapshot(snap);
  return snap;
}

void write_snapshot_csv(std::ostream& out, const FlowSnapshot& snapshot) {
  validate_snapshot(snapshot);
  const bool has_mask = !snapshot.mask.empty();
  out << "x,z,u_x,u_z" << (has_mask ? ",mask" : "") << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < snapshot.size(); ++i) {
    out << snapshot.points(i, 0) << ',' << snapshot.points(i, 1) << ','
        << snapshot.velocities(i, 0) << ',' << snapshot.velocities(i, 1);
    if (has_mask) out << ',' << static_cast<int>(snapshot.mask[i]);
    out << '\n';
  }
}

FlowSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  auto snap = read_snapshot_csv(in, path.string());
  snap.domain_tag = path.stem().string();
  return snap;
}

void save_snapshot(const FlowSnapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  write_snapshot_csv(out, snapshot);
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

}  // namespace flowrec
