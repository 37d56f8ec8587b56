#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "homlab/analysis.hpp"
#include "homlab/cell.hpp"
#include "homlab/oracle1d.hpp"
#include "homlab/strip.hpp"
#include "homlab/whitney.hpp"

namespace homlab {

/// Named bottom-data families, all normalized to sup |f| = 1.
struct BoundaryFamily {
  /// "cosine", "step_smoothed" or "trig".
  std::string family = "cosine";
  /// cosine: cos(2 pi frequency x_0).
  int frequency = 1;
  /// step_smoothed: tanh(sin(2 pi x_0) / width), rescaled.
  double width = 0.1;
  /// trig: sum of `modes` random Fourier terms with frequencies up to
  /// max_frequency and amplitudes ~ N(0,1)/|k|.
  int modes = 16;
  int max_frequency = 16;
  std::uint64_t seed = 1;
};

/// Builds f(x) for a point with N = dim-1 horizontal coordinates; periodic
/// with period x_extent.
PointFunction make_boundary_function(const BoundaryFamily& b, int dim, double x_extent);

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  CoefficientSpec coefficients;
  /// Original A_inf entry when it references a homogenized matrix.
  std::string a_inf_ref;
  int cell_resolution = 128;
  /// Strip cells per unit length; 0 picks the coarsest admissible value.
  int cells_per_unit = 0;
  double t_top = 2.0;
  bool lateral_periodic = true;
  BoundaryFamily boundary;
  std::vector<double> radii{0.0625, 0.125, 0.25, 0.5, 1.0};
  Tent dkp_tent{{}, 0.5};
  /// Also assemble K' = 1..K and record the DKP total per depth.
  bool dkp_sweep = true;
  Tent budget_tent{{0.5, 0.5, 0.0}, 1.0};
  SolveOptions solver;
  bool dump_fields = false;

  // convergence
  oracle1d::Profile1D profile{{1.0, 3.0}, {{0.0, 0.0}, {1.0, 1.0}}};
  std::vector<double> eps_list{0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
  std::vector<int> strip_cells{64, 128, 256};

  /// Canonical JSON text of the input (for the manifest hash).
  std::string canonical;
};

/// Throws ConfigError with a path-qualified message on malformed input.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  std::filesystem::path out = "out";
  /// Defaults to <out>/cache.
  std::filesystem::path cache_dir;
  bool deterministic = false;
  /// Progress messages; null silences them.
  std::ostream* log = nullptr;
};

struct CellRun {
  std::map<std::string, CorrectorSet> correctors;
  std::map<std::string, SymMat> abar;
  /// label -> (cache key, loaded from cache)
  std::map<std::string, std::pair<std::string, bool>> cache;
};

/// Solves (or loads) correctors for every template; writes Abar.json into
/// each cache entry and a combined <out>/abar.json.
CellRun run_cell(const ExperimentConfig& cfg, const RunOptions& opts);

/// Copy of the coefficient spec with A_inf resolved against the homogenized
/// matrices.
CoefficientSpec resolved_spec(const ExperimentConfig& cfg, const std::map<std::string, SymMat>& abar);

/// Strip grid for the config: explicit resolution or the coarsest one that
/// resolves the finest period.
Grid strip_grid(const ExperimentConfig& cfg, const CoefficientSpec& spec, const WhitneyLayout& layout);

BoundaryData boundary_data(const ExperimentConfig& cfg);

struct SolveSummary {
  int iterations = 0;
  double residual = 0.0;
  double energy = 0.0;
  /// Maximum principle defect divided by osc(f).
  double kappa_rel = 0.0;
};

struct PipelineSummary {
  int cells_per_unit = 0;
  std::size_t nodes = 0;
  SolveSummary u, ubar, z;
  CarlesonReport carleson_u, carleson_ubar;
  DkpReport dkp;
  std::vector<DkpSlab> dkp_per_generation;
  /// (K', total) for K' = 1..K when the sweep is enabled.
  std::vector<std::pair<int, double>> dkp_by_depth;
  double dkp_slope = 0.0;
  double dkp_correlation = 0.0;
  ErrorBudget budget;
  std::vector<BoxBudget> budget_rows;
  /// ||z_solved - (u - u2s)||_L2 / ||u - u2s||_L2 and the absolute value.
  double z_consistency = 0.0;
  double z_consistency_abs = 0.0;
  /// max |u2s - f| over bottom nodes.
  double trace_defect = 0.0;
  double seconds = 0.0;
};

/// cell -> field -> solve (A and Abar) -> analysis; writes summary.json,
/// manifest.json and CSV reports into opts.out.
PipelineSummary run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts);

/// Solves u for A and writes the Carleson report only.
CarlesonReport run_carleson(const ExperimentConfig& cfg, const RunOptions& opts);

/// Assembles A (and the depth sweep) and writes the DKP report only.
PipelineSummary run_dkp(const ExperimentConfig& cfg, const RunOptions& opts);

struct StripRateRow {
  int cells = 0;
  double h = 0.0;
  double l2_error = 0.0;
  double rate = 0.0;
  double kappa_rel = 0.0;
};

struct ConvergenceSummary {
  std::vector<oracle1d::ErrorRow> oracle;
  double oracle_slope = 0.0;
  std::vector<StripRateRow> strip;
  double strip_rate = 0.0;
};

/// Manufactured strip problem: A = Id, u = cos(2 pi x) e^{-2 pi t} on
/// [0,1) x [0,1] with exact top data, continuous L2 error of the Q1 solution.
std::vector<StripRateRow> strip_manufactured(const std::vector<int>& cells, const SolveOptions& s);

/// Oracle error curve and strip rates; writes oracle.csv and strip.csv.
ConvergenceSummary run_convergence(const ExperimentConfig& cfg, const RunOptions& opts);

/// Least-squares slope and correlation of y against x.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace homlab
