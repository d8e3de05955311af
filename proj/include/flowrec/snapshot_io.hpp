#pragma once

#include "flowrec/graph.hpp"

#include <filesystem>
#include <iosfwd>

namespace flowrec {

// Snapshot CSV: header `x,z,u_x,u_z` with an optional fifth `mask` column,
// one node per row, row order = node index.

FlowSnapshot read_snapshot_csv(std::istream& in, const std::string& source = "<stream>");
void write_snapshot_csv(std::ostream& out, const FlowSnapshot& snapshot);

FlowSnapshot load_snapshot(const std::filesystem::path& path);
void save_snapshot(const FlowSnapshot& snapshot, const std::filesystem::path& path);

}  // namespace flowrec
