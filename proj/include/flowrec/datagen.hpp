#pragma once

#include "flowrec/graph.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace flowrec {

struct Rect {
  double x0 = 0.0;
  double z0 = 0.0;
  double x1 = 0.0;
  double z1 = 0.0;

  bool contains(double x, double z) const { return x >= x0 && x <= x1 && z >= z0 && z <= z1; }
  double area() const { return (x1 - x0) * (z1 - z0); }
};

/// Rectangular chamber [0, width] x [0, height_at(cad)] whose top wall moves
/// linearly with crank angle, with optional solid cut-outs.
struct DomainSpec {
  double width = 1.0;
  double cad_start = -120.0;
  double cad_end = -60.0;
  double height_start = 1.0;
  double height_end = 0.6;
  std::vector<Rect> obstacles;

  double height_at(double cad) const;
  /// Inside the chamber at `cad` and outside every obstacle.
  bool contains(double x, double z, double cad) const;
  void validate() const;
};

struct SpectrumSpec {
  int n_modes = 24;
  double k_min = 8.0;
  double k_max = 48.0;
  double decay = 1.0;      // mode amplitude ~ |k|^-decay before normalization
  double amplitude = 1.0;  // RMS speed of the continuous field [m/s]
  std::uint64_t seed = 0;
  // Fraction of the RMS carried by a second, independent set of modes drawn
  // from variation_seed. The rest comes from the modes of `seed`. Datasets
  // share `seed` across snapshots and vary variation_seed, so variation = 1
  // makes every snapshot an independent field.
  double variation = 1.0;
  std::uint64_t variation_seed = 0;
  // Fraction of the RMS carried by small-scale modes in [turbulence_k_min,
  // turbulence_k_max], also drawn per snapshot. The two sets above share the
  // remaining (1 - t^2) of the energy.
  double turbulence = 0.0;
  double turbulence_k_min = 64.0;
  double turbulence_k_max = 128.0;

  void validate() const;
};

/// Random streamfunction psi = sum a_m sin(kx x + phi) sin(kz z + theta) with
/// analytic velocities u_x = d psi/dz, u_z = -d psi/dx. The energy split
/// between the shared and the varying mode sets is (1 - v^2) : v^2.
class StreamFunctionField {
 public:
  explicit StreamFunctionField(const SpectrumSpec& spectrum);

  std::array<double, 2> velocity(double x, double z) const;
  /// {du_x/dx, du_x/dz, du_z/dx, du_z/dz}
  std::array<double, 4> velocity_gradient(double x, double z) const;
  double divergence(double x, double z) const;

 private:
  struct Mode {
    double a, kx, kz, phi, theta;
  };
  std::vector<Mode> modes_;
};

/// Jittered grid of about n_points nodes over `window` (default: the whole
/// chamber) clipped to the chamber at `cad`, velocities from the field of
/// `spectrum`. jitter in [0, 1) is the displacement range in cell widths.
FlowSnapshot synth_flow(const DomainSpec& domain, double cad, const SpectrumSpec& spectrum,
                        int n_points, double jitter, std::uint64_t seed,
                        std::optional<Rect> window = std::nullopt);

enum class Split { train, val, test };
enum class SizeClass { panel, slice };

std::string_view to_string(Split split);
std::string_view to_string(SizeClass size);

struct DatasetEntry {
  FlowSnapshot snapshot;
  Split split = Split::train;
  SizeClass size_class = SizeClass::panel;
  double area = 0.0;
};

struct DatasetSizes {
  double panel_side = 0.25;
  int panel_min_points = 1000;
  int panel_max_points = 4000;
  double train_ratio = 0.7;
  double val_ratio = 0.2;  // the remainder of the panels goes to test
  int slice_count = 0;
  double slice_min_area_factor = 4.0;
  double slice_max_area_factor = 16.0;
  int slice_points_per_panel_area = 2000;
  int slice_min_points = 8000;
  int slice_max_points = 32000;
  double jitter = 0.5;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::vector<const DatasetEntry*> select(Split split) const;
  std::vector<const DatasetEntry*> select(Split split, SizeClass size) const;
};

/// per_cad_count panels per crank angle, split train/val/test by the given
/// ratios, plus slice_count larger test windows spanning the chamber width.
Dataset make_dataset(const DomainSpec& domain, const std::vector<double>& cad_list,
                     const SpectrumSpec& spectrum, int per_cad_count, const DatasetSizes& sizes,
                     std::uint64_t seed);

/// `path,split,size_class,cad,n_points`
void write_manifest(std::ostream& out, const std::vector<std::string>& paths, const Dataset& dataset);

}  // namespace flowrec
