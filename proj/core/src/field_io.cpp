#include "homlab/field_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

constexpr char kMagic[4] = {'H', 'L', 'F', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated field dump");
  return v;
}

}  // namespace

void write_binary(const std::filesystem::path& path, const FieldDump& dump) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  const Grid& g = dump.grid;
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  put<std::uint32_t>(os, dump.location == Location::node ? 0u : 1u);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(dump.components));
  for (int a = 0; a < kMaxDim; ++a) put<std::int32_t>(os, g.spec().cells[a]);
  for (int a = 0; a < kMaxDim; ++a) put<std::uint8_t>(os, g.spec().periodic[a] ? 1 : 0);
  put<std::uint8_t>(os, 0);
  for (int a = 0; a < kMaxDim; ++a) put<double>(os, g.spec().origin[a]);
  for (int a = 0; a < kMaxDim; ++a) put<double>(os, g.spec().extent[a]);
  const std::uint64_t count = dump.values.size() / dump.components;
  put<std::uint64_t>(os, count);
  os.write(reinterpret_cast<const char*>(dump.values.data()),
           static_cast<std::streamsize>(dump.values.size() * sizeof(double)));
  if (!os) throw ConfigError("failed writing " + path.string());
}

FieldDump read_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ConfigError(path.string() + ": not a field dump");
  if (get<std::uint32_t>(is) != kVersion) throw ConfigError(path.string() + ": unsupported version");
  GridSpec spec;
  spec.dim = static_cast<int>(get<std::uint32_t>(is));
  FieldDump d;
  d.location = get<std::uint32_t>(is) == 0 ? Location::node : Location::cell;
  d.components = static_cast<int>(get<std::uint32_t>(is));
  for (int a = 0; a < kMaxDim; ++a) spec.cells[a] = get<std::int32_t>(is);
  for (int a = 0; a < kMaxDim; ++a) spec.periodic[a] = get<std::uint8_t>(is) != 0;
  get<std::uint8_t>(is);
  for (int a = 0; a < kMaxDim; ++a) spec.origin[a] = get<double>(is);
  for (int a = 0; a < kMaxDim; ++a) spec.extent[a] = get<double>(is);
  d.grid = Grid(spec);
  const auto count = get<std::uint64_t>(is);
  const std::size_t expected = d.location == Location::node ? d.grid.num_nodes() : d.grid.num_cells();
  if (count != expected) throw ConfigError(path.string() + ": entry count does not match grid");
  d.values.resize(count * d.components);
  is.read(reinterpret_cast<char*>(d.values.data()),
          static_cast<std::streamsize>(d.values.size() * sizeof(double)));
  if (!is) throw ConfigError(path.string() + ": truncated payload");
  return d;
}

void write_csv(const std::filesystem::path& path, const FieldDump& dump,
               std::span<const std::string> component_names) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  const Grid& g = dump.grid;
  os << "index";
  for (int a = 0; a < g.dim(); ++a) os << ",x" << a;
  for (int c = 0; c < dump.components; ++c) {
    if (static_cast<std::size_t>(c) < component_names.size())
      os << ',' << component_names[c];
    else
      os << ",v" << c;
  }
  os << '\n' << std::setprecision(17);
  const std::size_t count = dump.values.size() / dump.components;
  for (std::size_t i = 0; i < count; ++i) {
    const Vec p = dump.location == Location::node ? g.node_point(i) : g.cell_center(i);
    os << i;
    for (int a = 0; a < g.dim(); ++a) os << ',' << p[a];
    for (int c = 0; c < dump.components; ++c) os << ',' << dump.values[i * dump.components + c];
    os << '\n';
  }
}

FieldDump to_dump(const ScalarField& f) { return FieldDump{f.grid, f.location, 1, f.values}; }

FieldDump to_dump(const VectorField& f) {
  return FieldDump{f.grid, Location::cell, f.points_per_cell * f.grid.dim(), f.values};
}

FieldDump to_dump(const MatrixField& f) {
  const auto p = f.packed();
  return FieldDump{f.grid(), Location::cell, static_cast<int>(f.stride()),
                   std::vector<double>(p.begin(), p.end())};
}

ScalarField scalar_from_dump(const FieldDump& d) {
  if (d.components != 1) throw ConfigError("dump is not a scalar field");
  return ScalarField{d.grid, d.location, d.values};
}

}  // namespace homlab
