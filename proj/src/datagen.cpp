#include "flowrec/datagen.hpp"

#include "flowrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

namespace flowrec {

double DomainSpec::height_at(double cad) const {
  const double t = (cad - cad_start) / (cad_end - cad_start);
  return height_start + t * (height_end - height_start);
}

bool DomainSpec::contains(double x, double z, double cad) const {
  if (x < 0.0 || x > width || z < 0.0 || z > height_at(cad)) return false;
  return std::none_of(obstacles.begin(), obstacles.end(),
                      [&](const Rect& r) { return r.contains(x, z); });
}

void DomainSpec::validate() const {
  if (!(width > 0.0)) fail(ErrorCode::invalid_argument, "domain width must be positive");
  if (cad_end == cad_start) fail(ErrorCode::invalid_argument, "domain CAD range is empty");
  if (!(height_start > 0.0) || !(height_end > 0.0)) {
    fail(ErrorCode::invalid_argument, "domain height must be positive over the CAD range");
  }
  const double top = std::max(height_start, height_end);
  for (const auto& r : obstacles) {
    if (r.x0 < 0.0 || r.x1 > width || r.z0 < 0.0 || r.z1 > top || r.x0 >= r.x1 || r.z0 >= r.z1) {
      fail(ErrorCode::invalid_argument, "obstacle lies outside the domain bounding box");
    }
  }
}

void SpectrumSpec::validate() const {
  if (n_modes < 1) fail(ErrorCode::invalid_argument, "spectrum needs at least one mode");
  if (!(k_min > 0.0) || k_min > k_max) {
    fail(ErrorCode::invalid_argument, "spectrum needs 0 < k_min <= k_max");
  }
  if (!(variation >= 0.0 && variation <= 1.0)) {
    fail(ErrorCode::invalid_argument, "spectrum variation must lie in [0, 1]");
  }
  if (!(turbulence >= 0.0 && turbulence <= 1.0)) {
    fail(ErrorCode::invalid_argument, "spectrum turbulence must lie in [0, 1]");
  }
  if (turbulence > 0.0 && (!(turbulence_k_min > 0.0) || turbulence_k_min > turbulence_k_max)) {
    fail(ErrorCode::invalid_argument, "spectrum needs 0 < turbulence_k_min <= turbulence_k_max");
  }
}

StreamFunctionField::StreamFunctionField(const SpectrumSpec& spectrum) {
  spectrum.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto add_modes = [&](std::uint64_t seed, double rms, double k_min, double k_max) {
    if (rms == 0.0) return;
    Rng rng(seed);
    const auto first = modes_.size();
    double energy = 0.0;
    for (int m = 0; m < spectrum.n_modes; ++m) {
      const double k = uniform(rng, k_min, k_max);
      const double dir = uniform(rng, 0.0, two_pi);
      Mode mode;
      mode.kx = k * std::cos(dir);
      mode.kz = k * std::sin(dir);
      mode.phi = uniform(rng, 0.0, two_pi);
      mode.theta = uniform(rng, 0.0, two_pi);
      mode.a = std::pow(k, -spectrum.decay);
      energy += mode.a * mode.a * k * k / 4.0;
      modes_.push_back(mode);
    }
    // Mean of |u|^2 over phases is sum a^2 k^2 / 4; rescale to the target RMS.
    const double norm = rms / std::sqrt(energy);
    for (auto m = first; m < modes_.size(); ++m) modes_[m].a *= norm;
  };
  const double v = spectrum.variation;
  const double t = spectrum.turbulence;
  const double large = spectrum.amplitude * std::sqrt(1.0 - t * t);
  add_modes(spectrum.seed, large * std::sqrt(1.0 - v * v), spectrum.k_min, spectrum.k_max);
  add_modes(spectrum.variation_seed, large * v, spectrum.k_min, spectrum.k_max);
  add_modes(mix_seed(spectrum.variation_seed, 0x7475726275ULL), spectrum.amplitude * t,
            spectrum.turbulence_k_min, spectrum.turbulence_k_max);
}

std::array<double, 2> StreamFunctionField::velocity(double x, double z) const {
  double ux = 0.0;
  double uz = 0.0;
  for (const auto& m : modes_) {
    const double ax = m.kx * x + m.phi;
    const double az = m.kz * z + m.theta;
    ux += m.a * m.kz * std::sin(ax) * std::cos(az);
    uz -= m.a * m.kx * std::cos(ax) * std::sin(az);
  }
  return {ux, uz};
}

std::array<double, 4> StreamFunctionField::velocity_gradient(double x, double z) const {
  std::array<double, 4> g{0.0, 0.0, 0.0, 0.0};
  for (const auto& m : modes_) {
    const double ax = m.kx * x + m.phi;
    const double az = m.kz * z + m.theta;
    const double sx = std::sin(ax), cx = std::cos(ax);
    const double sz = std::sin(az), cz = std::cos(az);
    g[0] += m.a * m.kz * m.kx * cx * cz;
    g[1] -= m.a * m.kz * m.kz * sx * sz;
    g[2] += m.a * m.kx * m.kx * sx * sz;
    g[3] -= m.a * m.kx * m.kz * cx * cz;
  }
  return g;
}

double StreamFunctionField::divergence(double x, double z) const {
  const auto g = velocity_gradient(x, z);
  return g[0] + g[3];
}

FlowSnapshot synth_flow(const DomainSpec& domain, double cad, const SpectrumSpec& spectrum,
                        int n_points, double jitter, std::uint64_t seed, std::optional<Rect> window) {
  domain.validate();
  if (n_points < 4) fail(ErrorCode::invalid_argument, "synth_flow needs n_points >= 4");
  if (!(jitter >= 0.0 && jitter < 1.0)) fail(ErrorCode::invalid_argument, "jitter must lie in [0, 1)");
  const double top = domain.height_at(cad);
  if (!(top > 0.0)) {
    fail(ErrorCode::invalid_argument, "domain is degenerate at cad " + std::to_string(cad));
  }
  Rect region = window.value_or(Rect{0.0, 0.0, domain.width, top});
  region.x0 = std::max(region.x0, 0.0);
  region.z0 = std::max(region.z0, 0.0);
  region.x1 = std::min(region.x1, domain.width);
  region.z1 = std::min(region.z1, top);
  if (!(region.x1 > region.x0) || !(region.z1 > region.z0)) {
    fail(ErrorCode::invalid_argument, "sampling window is empty at cad " + std::to_string(cad));
  }

  const double w = region.x1 - region.x0;
  const double h = region.z1 - region.z0;
  const int nx = std::max(2, static_cast<int>(std::lround(std::sqrt(n_points * w / h))));
  const int nz = std::max(2, static_cast<int>(std::lround(static_cast<double>(n_points) / nx)));
  const double dx = w / nx;
  const double dz = h / nz;

  const StreamFunctionField field(spectrum);
  Rng rng(seed);
  std::vector<std::array<double, 2>> pts;
  pts.reserve(static_cast<std::size_t>(nx) * nz);
  for (int iz = 0; iz < nz; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      // Draw both offsets unconditionally so the stream does not depend on obstacles.
      const double ox = jitter * (uniform01(rng) - 0.5);
      const double oz = jitter * (uniform01(rng) - 0.5);
      const double x = region.x0 + (ix + 0.5 + ox) * dx;
      const double z = region.z0 + (iz + 0.5 + oz) * dz;
      if (domain.contains(x, z, cad)) pts.push_back({x, z});
    }
  }
  if (pts.size() < 2) fail(ErrorCode::invalid_argument, "fewer than 2 points survive clipping");

  FlowSnapshot snap;
  snap.cad = cad;
  snap.points.resize(static_cast<Eigen::Index>(pts.size()), 2);
  snap.velocities.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    snap.points(i, 0) = pts[i][0];
    snap.points(i, 1) = pts[i][1];
    const auto u = field.velocity(pts[i][0], pts[i][1]);
    snap.velocities(i, 0) = u[0];
    snap.velocities(i, 1) = u[1];
  }
  return snap;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(SizeClass size) {
  return size == SizeClass::panel ? "panel" : "slice";
}

std::vector<const DatasetEntry*> Dataset::select(Split split) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

std::vector<const DatasetEntry*> Dataset::select(Split split, SizeClass size) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split && e.size_class == size) out.push_back(&e);
  }
  return out;
}

Dataset make_dataset(const DomainSpec& domain, const std::vector<double>& cad_list,
                     const SpectrumSpec& spectrum, int per_cad_count, const DatasetSizes& sizes,
                     std::uint64_t seed) {
  domain.validate();
  if (cad_list.empty() || per_cad_count < 1) {
    fail(ErrorCode::invalid_argument, "make_dataset needs CAD values and a positive count");
  }
  if (sizes.train_ratio < 0.0 || sizes.val_ratio < 0.0 || sizes.train_ratio + sizes.val_ratio > 1.0) {
    fail(ErrorCode::invalid_argument, "split ratios must be nonnegative and sum to at most 1");
  }
  Rng rng(mix_seed(seed, 0));
  Dataset ds;
  std::uint64_t counter = 0;
  auto field_for = [&](std::uint64_t index) {
    SpectrumSpec s = spectrum;
    s.variation_seed = mix_seed(spectrum.seed ^ seed, 2 * index + 1);
    return s;
  };

  const double side = sizes.panel_side;
  for (double cad : cad_list) {
    const double top = domain.height_at(cad);
    if (top < side || domain.width < side) {
      fail(ErrorCode::invalid_argument, "panel does not fit the chamber at cad " + std::to_string(cad));
    }
    for (int c = 0; c < per_cad_count; ++c) {
      const double x0 = uniform(rng, 0.0, domain.width - side);
      const double z0 = uniform(rng, 0.0, top - side);
      const int n = sizes.panel_min_points +
                    static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(
                                                            sizes.panel_max_points - sizes.panel_min_points + 1)));
      const auto idx = counter++;
      DatasetEntry e;
      e.snapshot = synth_flow(domain, cad, field_for(idx), n, sizes.jitter, mix_seed(seed, 2 * idx + 2),
                              Rect{x0, z0, x0 + side, z0 + side});
      e.snapshot.domain_tag = "panel-" + std::to_string(idx);
      e.size_class = SizeClass::panel;
      e.area = side * side;
      ds.entries.push_back(std::move(e));
    }
  }

  const std::size_t n_panels = ds.entries.size();
  std::vector<std::size_t> order(n_panels);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(sizes.train_ratio * n_panels));
  const auto n_val = std::min(n_panels - n_train,
                              static_cast<std::size_t>(std::llround(sizes.val_ratio * n_panels)));
  for (std::size_t i = 0; i < n_panels; ++i) {
    ds.entries[order[i]].split = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
  }

  const double panel_area = side * side;
  for (int s = 0; s < sizes.slice_count; ++s) {
    const double cad = cad_list[uniform_index(rng, cad_list.size())];
    const double top = domain.height_at(cad);
    const double max_factor = std::min(sizes.slice_max_area_factor, domain.width * top / panel_area);
    const double lo = std::min(sizes.slice_min_area_factor, max_factor);
    const double factor = uniform(rng, lo, max_factor);
    const double height = factor * panel_area / domain.width;
    const double z0 = uniform(rng, 0.0, std::max(0.0, top - height));
    const int n = std::clamp(static_cast<int>(std::lround(factor * sizes.slice_points_per_panel_area)),
                             sizes.slice_min_points, sizes.slice_max_points);
    const auto idx = counter++;
    DatasetEntry e;
    e.snapshot = synth_flow(domain, cad, field_for(idx), n, sizes.jitter, mix_seed(seed, 2 * idx + 2),
                            Rect{0.0, z0, domain.width, z0 + height});
    e.snapshot.domain_tag = "slice-" + std::to_string(idx);
    e.split = Split::test;
    e.size_class = SizeClass::slice;
    e.area = factor * panel_area;
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

void write_manifest(std::ostream& out, const std::vector<std::string>& paths, const Dataset& dataset) {
  if (paths.size() != dataset.entries.size()) {
    fail(ErrorCode::shape_mismatch, "manifest needs one path per dataset entry");
  }
  out << "path,split,size_class,cad,n_points\n" << std::setprecision(17);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& e = dataset.entries[i];
    out << paths[i] << ',' << to_string(e.split) << ',' << to_string(e.size_class) << ','
        << e.snapshot.cad << ','
        << e.snapshot.size() << '\n';
  }
}

}  // namespace flowrec
