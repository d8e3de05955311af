#pragma once

#include "flowrec/model.hpp"

#include <filesystem>
#include <iosfwd>

namespace flowrec {

// Binary checkpoint, little-endian, version 1:
//
//   char[8]  magic "FLOWRECK"
//   u32      version
//   u32      layer kind (0 attention, 1 gcn, 2 mean_aggregator)
//   u32      flags (bit 0 diffusion, bit 1 feature propagation, bit 2 indicator)
//   u32      width count W, then W x i32 widths
//   f64      velocity scale
//   f64      length scale
//   i32      k of the k-NN graph
//   u32      tensor count T, then T records of
//              u32 name length, name bytes, u32 rows, u32 cols,
//              rows * cols x f64 values in row-major order
//
// Tensor records follow the order of parameters(model).

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const GacnModel& model);
GacnModel read_checkpoint(std::istream& in);

void save_checkpoint(const GacnModel& model, const std::filesystem::path& path);
GacnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace flowrec
