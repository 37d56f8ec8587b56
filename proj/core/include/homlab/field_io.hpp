#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "homlab/grid.hpp"

namespace homlab {

/// Flat dump of grid data with an arbitrary number of components per entry.
///
/// Binary layout (little endian), version 1:
///   char[4]  "HLFD"
///   u32      version
///   u32      dim
///   u32      location (0 = node, 1 = cell)
///   u32      components per entry
///   i32[3]   cells per axis
///   u8[4]    periodic flags (last byte padding)
///   f64[3]   origin
///   f64[3]   extent
///   u64      entry count
///   f64[count * components] values, entry-major
///
/// CSV layout: header "index,x0,..,x{dim-1},v0,..", one row per entry with
/// the node or cell-center coordinates.
struct FieldDump {
  Grid grid;
  Location location = Location::node;
  int components = 1;
  std::vector<double> values;
};

void write_binary(const std::filesystem::path& path, const FieldDump& dump);
FieldDump read_binary(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const FieldDump& dump,
               std::span<const std::string> component_names = {});

FieldDump to_dump(const ScalarField& f);
FieldDump to_dump(const VectorField& f);
FieldDump to_dump(const MatrixField& f);
ScalarField scalar_from_dump(const FieldDump& d);

}  // namespace homlab
