#include "homlab/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "homlab/errors.hpp"
#include "homlab/field_io.hpp"

#ifndef HOMLAB_VERSION
#define HOMLAB_VERSION "unknown"
#endif

namespace homlab {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

SymMat parse_matrix(const json& j, int dim, const std::string& where) {
  if (j.is_number()) return SymMat::identity(dim, j.get<double>());
  if (!j.is_array() || j.size() != static_cast<std::size_t>(dim)) bad(where, "expected a number or a dim x dim matrix");
  std::vector<double> full;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != static_cast<std::size_t>(dim)) bad(where, "matrix rows must have dim entries");
    for (const auto& v : row) {
      if (!v.is_number()) bad(where, "matrix entries must be numbers");
      full.push_back(v.get<double>());
    }
  }
  return SymMat::from_full(dim, full);
}

std::vector<SymMat> parse_pieces(const json& t, int dim, const std::string& where) {
  std::vector<SymMat> out;
  if (t.contains("values")) {
    for (const auto& v : t.at("values")) out.push_back(parse_matrix(v, dim, where + ".values"));
  } else if (t.contains("matrices")) {
    for (const auto& v : t.at("matrices")) out.push_back(parse_matrix(v, dim, where + ".matrices"));
  } else {
    bad(where, "needs 'values' or 'matrices'");
  }
  if (out.empty()) bad(where, "needs at least one piece");
  return out;
}

TemplateDef parse_template(const json& t, int dim, double lambda, double upper, std::uint64_t seed,
                           const std::string& where) {
  if (!t.is_object() || !t.contains("type")) bad(where, "template needs a 'type'");
  const std::string type = t.at("type").get<std::string>();
  TemplateDef def;
  def.dim = dim;
  if (type == "random_checkerboard") {
    return random_checkerboard(dim, t.value("divisions", 4), t.value("lower", lambda),
                               t.value("upper", upper), t.value("seed", seed));
  }
  def.kind = parse_template_kind(type);
  switch (def.kind) {
    case TemplateDef::Kind::constant:
      def.matrix = parse_matrix(t.contains("matrix") ? t.at("matrix") : t.at("value"), dim, where);
      break;
    case TemplateDef::Kind::laminate:
      def.axis = t.value("axis", 0);
      if (def.axis < 0 || def.axis >= dim) bad(where, "laminate axis out of range");
      def.pieces = parse_pieces(t, dim, where);
      break;
    case TemplateDef::Kind::checkerboard: {
      def.divisions = t.value("divisions", 2);
      const auto p = parse_pieces(t, dim, where);
      if (p.size() != 2) bad(where, "checkerboard needs exactly two values");
      def.even = p[0];
      def.odd = p[1];
      break;
    }
    case TemplateDef::Kind::smooth:
      def.mean = t.at("mean").get<double>();
      def.amplitude = t.at("amplitude").get<double>();
      break;
    case TemplateDef::Kind::table: {
      def.divisions = t.value("divisions", 2);
      def.pieces = parse_pieces(t, dim, where);
      std::size_t expect = 1;
      for (int a = 0; a < dim; ++a) expect *= static_cast<std::size_t>(def.divisions);
      if (def.pieces.size() != expect) bad(where, "table needs divisions^dim entries");
      break;
    }
  }
  if (def.divisions < 1) bad(where, "divisions must be positive");
  return def;
}

Tent parse_tent(const json& j, const std::string& where) {
  Tent t;
  if (j.contains("x")) {
    const auto& x = j.at("x");
    if (!x.is_array() || x.size() > kMaxDim - 1) bad(where, "tent x must be an array of horizontal coordinates");
    for (std::size_t a = 0; a < x.size(); ++a) t.x[a] = x[a].get<double>();
  }
  t.R = j.value("R", t.R);
  if (!(t.R > 0.0)) bad(where, "tent R must be positive");
  return t;
}

double parse_p(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    bad("schedule.p", "expected a number or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ExperimentConfig c;
  c.canonical = j.dump();
  try {
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    CoefficientSpec& s = c.coefficients;
    s.dim = j.value("dim", 2);
    if (s.dim < 2 || s.dim > kMaxDim) bad("dim", "must be 2 or 3");
    s.lambda = j.value("lambda", 1.0);
    s.upper = j.value("upper", 1.0);
    s.K = j.value("K", 1);
    s.x_extent = j.value("x_extent", 1.0);
    if (j.contains("schedule")) {
      const auto& sj = j.at("schedule");
      s.schedule.mode = parse_schedule_mode(sj.value("mode", std::string("theorem")));
      if (sj.contains("p")) s.schedule.p = parse_p(sj.at("p"));
      s.schedule.c = sj.value("c", 1.0);
      s.schedule.custom_exponent = sj.value("exponent", 1.0);
    }
    if (!j.contains("templates") || !j.at("templates").is_object() || j.at("templates").empty())
      bad("templates", "at least one template is required");
    std::uint64_t tseed = c.seed;
    for (const auto& [label, t] : j.at("templates").items())
      s.templates[label] = parse_template(t, s.dim, s.lambda, s.upper, tseed++, "templates." + label);

    const auto& aj = j.at("assignment");
    if (aj.is_string()) {
      s.assignment.first = aj.get<std::string>();
    } else {
      const auto rule = aj.value("rule", std::string("single"));
      if (rule == "single") {
        s.assignment.first = aj.at("template").get<std::string>();
      } else if (rule == "alternating") {
        const auto& ts = aj.at("templates");
        if (!ts.is_array() || ts.size() != 2) bad("assignment.templates", "alternating needs two labels");
        s.assignment.rule = Assignment::Rule::alternating;
        s.assignment.first = ts[0].get<std::string>();
        s.assignment.second = ts[1].get<std::string>();
      } else {
        bad("assignment.rule", "unknown rule '" + rule + "'");
      }
    }
    for (const auto* l : {&s.assignment.first, &s.assignment.second}) {
      if (l->empty() && l == &s.assignment.second && s.assignment.rule == Assignment::Rule::single) continue;
      if (!s.templates.contains(*l)) bad("assignment", "unknown template '" + *l + "'");
    }

    const json& ainf = j.contains("A_inf") ? j.at("A_inf") : json(1.0);
    if (ainf.is_string()) {
      c.a_inf_ref = ainf.get<std::string>();
      if (c.a_inf_ref.rfind("abar:", 0) != 0) bad("A_inf", "string form must be 'abar:<label>'");
      if (!s.templates.contains(c.a_inf_ref.substr(5))) bad("A_inf", "unknown template in '" + c.a_inf_ref + "'");
      s.A_inf = SymMat::identity(s.dim);
    } else {
      s.A_inf = parse_matrix(ainf, s.dim, "A_inf");
    }

    if (j.contains("cell")) c.cell_resolution = j.at("cell").value("resolution", c.cell_resolution);
    if (c.cell_resolution < 4) bad("cell.resolution", "must be at least 4");
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      if (g.contains("cells") && !(g.at("cells").is_string() && g.at("cells") == "auto"))
        c.cells_per_unit = g.at("cells").get<int>();
      c.t_top = g.value("t_top", c.t_top);
    }
    if (j.contains("boundary")) {
      const auto& b = j.at("boundary");
      c.boundary.family = b.value("family", c.boundary.family);
      c.boundary.frequency = b.value("frequency", c.boundary.frequency);
      c.boundary.width = b.value("width", c.boundary.width);
      c.boundary.modes = b.value("modes", c.boundary.modes);
      c.boundary.max_frequency = b.value("max_frequency", c.boundary.max_frequency);
      c.boundary.seed = b.value("seed", c.boundary.seed);
      const auto lat = b.value("lateral", std::string("periodic"));
      if (lat != "periodic" && lat != "dirichlet") bad("boundary.lateral", "periodic or dirichlet");
      c.lateral_periodic = lat == "periodic";
      if (c.boundary.family != "cosine" && c.boundary.family != "step_smoothed" && c.boundary.family != "trig")
        bad("boundary.family", "unknown family '" + c.boundary.family + "'");
    }
    if (j.contains("tents")) c.radii = j.at("tents").value("radii", c.radii);
    if (j.contains("dkp")) {
      const auto& d = j.at("dkp");
      if (d.contains("tent")) c.dkp_tent = parse_tent(d.at("tent"), "dkp.tent");
      c.dkp_sweep = d.value("sweep", c.dkp_sweep);
    }
    if (j.contains("budget") && j.at("budget").contains("tent"))
      c.budget_tent = parse_tent(j.at("budget").at("tent"), "budget.tent");
    if (j.contains("solver")) {
      const auto& sj = j.at("solver");
      c.solver.tol = sj.value("tol", c.solver.tol);
      c.solver.max_iterations = sj.value("max_iterations", c.solver.max_iterations);
      c.solver.preconditioner = parse_preconditioner(sj.value("preconditioner", std::string("spectral")));
    }
    c.dump_fields = j.value("dump_fields", false);
    if (j.contains("convergence")) {
      const auto& cj = j.at("convergence");
      c.eps_list = cj.value("eps", c.eps_list);
      c.strip_cells = cj.value("strip_cells", c.strip_cells);
      if (cj.contains("profile")) {
        const auto& pj = cj.at("profile");
        c.profile.a = pj.at("a").get<std::vector<double>>();
        c.profile.f.clear();
        for (const auto& node : pj.at("f")) c.profile.f.emplace_back(node.at(0).get<double>(), node.at(1).get<double>());
        c.profile.validate();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  for (double R : c.radii)
    if (!(R > 0.0)) bad("tents.radii", "radii must be positive");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

PointFunction make_boundary_function(const BoundaryFamily& b, int dim, double L) {
  const int n_h = dim - 1;
  if (b.family == "cosine") {
    const double k = 2.0 * std::numbers::pi * b.frequency / L;
    return [k](const Vec& p) { return std::cos(k * p[0]); };
  }
  if (b.family == "step_smoothed") {
    const double w = b.width;
    const double norm = std::tanh(1.0 / w);
    return [w, norm, L](const Vec& p) { return std::tanh(std::sin(2.0 * std::numbers::pi * p[0] / L) / w) / norm; };
  }
  if (b.family != "trig") throw ConfigError("unknown boundary family '" + b.family + "'");
  struct Term {
    std::array<int, kMaxDim - 1> k{};
    double amp = 0.0, phase = 0.0;
  };
  std::mt19937_64 rng(b.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(n_h == 1 ? 1 : -b.max_frequency, b.max_frequency);
  std::vector<Term> terms;
  while (static_cast<int>(terms.size()) < b.modes) {
    Term t;
    double norm2 = 0.0;
    for (int a = 0; a < n_h; ++a) {
      t.k[a] = freq(rng);
      norm2 += t.k[a] * t.k[a];
    }
    if (norm2 == 0.0) continue;
    t.amp = normal(rng) / std::sqrt(norm2);
    t.phase = uniform(rng);
    terms.push_back(t);
  }
  auto raw = [terms, L, n_h](const Vec& p) {
    double s = 0.0;
    for (const auto& t : terms) {
      double arg = t.phase;
      for (int a = 0; a < n_h; ++a) arg += 2.0 * std::numbers::pi * t.k[a] * p[a] / L;
      s += t.amp * std::cos(arg);
    }
    return s;
  };
  // Normalize by the maximum of |f|: coarse sampling at 64 points per
  // shortest wavelength, then pattern search around the best sample.
  const int per_axis = std::max(256, 64 * b.max_frequency);
  Vec best{};
  double peak = -1.0;
  const long total = n_h == 1 ? per_axis : static_cast<long>(per_axis) * per_axis;
  for (long m = 0; m < total; ++m) {
    Vec p{};
    p[0] = L * static_cast<double>(m % per_axis) / per_axis;
    if (n_h == 2) p[1] = L * static_cast<double>(m / per_axis) / per_axis;
    const double v = std::abs(raw(p));
    if (v > peak) {
      peak = v;
      best = p;
    }
  }
  for (double step = L / per_axis; step > 1e-14 * L; step *= 0.5) {
    for (bool moved = true; moved;) {
      moved = false;
      for (int a = 0; a < n_h; ++a) {
        for (double s : {-step, step}) {
          Vec p = best;
          p[a] += s;
          const double v = std::abs(raw(p));
          if (v > peak) {
            peak = v;
            best = p;
            moved = true;
          }
        }
      }
    }
  }
  if (peak == 0.0) throw ConfigError("trigonometric boundary data vanishes");
  return [raw, peak](const Vec& p) { return raw(p) / peak; };
}

namespace {

std::ostream& log_line(const RunOptions& o) {
  static std::ostringstream sink;
  if (o.log) return *o.log;
  sink.str({});
  return sink;
}

json matrix_json(const SymMat& m) {
  json rows = json::array();
  for (int i = 0; i < m.dim(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.dim(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << std::setprecision(17);
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_manifest(const ExperimentConfig& cfg, const RunOptions& opts, const CellRun* cells,
                    const std::string& command) {
  json m;
  m["command"] = command;
  m["name"] = cfg.name;
  m["config_hash"] = fnv_hex(cfg.canonical);
  m["config"] = json::parse(cfg.canonical);
  m["deterministic"] = opts.deterministic;
  m["version"] = HOMLAB_VERSION;
  m["compiler"] = __VERSION__;
  if (cells) {
    json keys = json::object();
    for (const auto& [label, kc] : cells->cache) keys[label] = {{"key", kc.first}, {"from_cache", kc.second}};
    m["cache_keys"] = keys;
  }
  m["notes"] = {"coefficient below t = 2^-K is the homogenized matrix of the box template",
                "horizontal axes are periodic with period x_extent unless boundary.lateral = dirichlet"};
  write_json(opts.out / "manifest.json", m);
}

double osc_bottom(const Grid& g, const PointFunction& f) {
  const int d = g.dim();
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    if (g.node_multi(n)[d - 1] != 0) continue;
    const double v = f(g.node_point(n));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

SolveSummary summarize(const SolveReport& r, double osc) {
  return {r.iterations, r.residual, r.energy, osc > 0.0 ? r.max_principle_violation / osc : 0.0};
}

json solve_json(const SolveSummary& s) {
  return {{"iterations", s.iterations}, {"residual", s.residual}, {"energy", s.energy}, {"kappa_rel", s.kappa_rel}};
}

void write_carleson_csv(const std::filesystem::path& p, const CarlesonReport& r, int dim) {
  auto os = open_csv(p);
  for (int a = 0; a + 1 < dim; ++a) os << 'x' << a << ',';
  os << "R,raw,normalized,sub_band,clipped\n";
  for (const auto& row : r.rows) {
    for (int a = 0; a + 1 < dim; ++a) os << row.tent.x[a] << ',';
    os << row.tent.R << ',' << row.raw << ',' << row.normalized << ',' << row.sub_band << ','
       << (row.clipped ? 1 : 0) << '\n';
  }
}

void write_dkp_csv(const std::filesystem::path& p, const DkpReport& r) {
  auto os = open_csv(p);
  os << "k,t_lo,t_hi,value\n";
  for (const auto& s : r.slabs) os << s.k << ',' << std::ldexp(1.0, s.k) << ',' << std::ldexp(1.0, s.k + 1) << ',' << s.value << '\n';
}

void dump_scalar(const ExperimentConfig& cfg, const RunOptions& o, const std::string& name, const ScalarField& f) {
  if (!cfg.dump_fields) return;
  write_binary(o.out / (name + ".bin"), to_dump(f));
}

}  // namespace

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double vx = n * sxx - sx * sx, vy = n * syy - sy * sy, cxy = n * sxy - sx * sy;
  const double slope = vx > 0 ? cxy / vx : 0.0;
  const double corr = vx > 0 && vy > 0 ? cxy / std::sqrt(vx * vy) : 0.0;
  return {slope, corr};
}

CellRun run_cell(const ExperimentConfig& cfg, const RunOptions& opts) {
  std::filesystem::create_directories(opts.out);
  const auto cache_root = opts.cache_dir.empty() ? opts.out / "cache" : opts.cache_dir;
  CellRun run;
  CellOptions co;
  co.resolution = cfg.cell_resolution;
  co.cg.rel_tol = cfg.solver.tol;
  co.preconditioner = cfg.solver.preconditioner;
  json all = json::object();
  for (const auto& [label, def] : cfg.coefficients.templates) {
    const std::string key = cache_key(def, co.resolution);
    const auto dir = cache_root / key;
    bool cached = false;
    CorrectorSet cs;
    if (std::filesystem::exists(dir / "Abar.json")) {
      cs = load_corrector_set(dir, def);
      cached = true;
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      cs = solve_cell(PeriodicTemplate{label, def}, co);
      save_corrector_set(cs, dir);
      log_line(opts) << "cell " << label << ": solved at " << co.resolution << " in "
                     << seconds_since(t0) << " s\n";
    }
    cs.label = label;
    run.abar[label] = cs.abar;
    run.cache[label] = {key, cached};
    const auto& dg = cs.diagnostics;
    const int d = cs.dim();
    all[label] = {{"Abar", matrix_json(cs.abar)},
                  {"cache_key", key},
                  {"from_cache", cached},
                  {"abar_asymmetry", dg.abar_asymmetry},
                  {"ellipticity_slack", dg.ellipticity_slack},
                  {"phi_sup", std::vector<double>(dg.phi_sup.begin(), dg.phi_sup.begin() + d)},
                  {"sigma_sup", std::vector<double>(dg.sigma_sup.begin(), dg.sigma_sup.begin() + d)},
                  {"div_residual", std::vector<double>(dg.div_residual.begin(), dg.div_residual.begin() + d)}};
    run.correctors.emplace(label, std::move(cs));
  }
  write_json(opts.out / "abar.json", all);
  return run;
}

CoefficientSpec resolved_spec(const ExperimentConfig& cfg, const std::map<std::string, SymMat>& abar) {
  CoefficientSpec s = cfg.coefficients;
  if (!cfg.a_inf_ref.empty()) {
    const auto label = cfg.a_inf_ref.substr(5);
    const auto it = abar.find(label);
    if (it == abar.end()) throw ConfigError("A_inf references '" + label + "' without a homogenized matrix");
    s.A_inf = it->second;
  }
  s.validate();
  return s;
}

Grid strip_grid(const ExperimentConfig& cfg, const CoefficientSpec& spec, const WhitneyLayout& layout) {
  int cells = cfg.cells_per_unit;
  if (cells <= 0) {
    const double h = required_spacing(spec, layout);
    cells = std::isfinite(h) ? static_cast<int>(std::ceil(1.0 / h - 1e-9)) : 64;
    cells = std::max(cells, 16);
  }
  return make_strip_grid(spec.dim, spec.x_extent, cfg.t_top, cells, cfg.lateral_periodic);
}

BoundaryData boundary_data(const ExperimentConfig& cfg) {
  BoundaryData bc;
  bc.f = make_boundary_function(cfg.boundary, cfg.coefficients.dim, cfg.coefficients.x_extent);
  if (!cfg.lateral_periodic) {
    bc.lateral = BoundaryData::Lateral::dirichlet;
    bc.lateral_value = bc.f;
  }
  return bc;
}

namespace {

struct Stage {
  CellRun cells;
  CoefficientSpec spec;
  WhitneyLayout layout;
  Grid grid;
  MatrixField A;
};

Stage prepare(const ExperimentConfig& cfg, const RunOptions& opts) {
  Stage s;
  s.cells = run_cell(cfg, opts);
  s.spec = resolved_spec(cfg, s.cells.abar);
  s.layout = make_layout(s.spec);
  s.grid = strip_grid(cfg, s.spec, s.layout);
  log_line(opts) << "strip grid: " << s.grid.num_nodes() << " nodes, h = " << s.grid.h(0) << '\n';
  s.A = assemble_A(s.spec, s.layout, s.grid, s.cells.abar);
  return s;
}

void dkp_stage(const ExperimentConfig& cfg, const Stage& s, PipelineSummary& out) {
  out.dkp = dkp_carleson_integral(s.A, cfg.dkp_tent);
  out.dkp_per_generation = out.dkp.generations(s.spec.K);
  out.dkp_by_depth.clear();
  if (cfg.dkp_sweep) {
    std::vector<double> ks, totals;
    for (int K = 1; K <= s.spec.K; ++K) {
      double total = out.dkp.total;
      if (K != s.spec.K) {
        CoefficientSpec sk = s.spec;
        sk.K = K;
        const WhitneyLayout lk = make_layout(sk);
        const MatrixField ak = assemble_A(sk, lk, s.grid, s.cells.abar);
        total = dkp_carleson_integral(ak, cfg.dkp_tent).total;
      }
      out.dkp_by_depth.emplace_back(K, total);
      ks.push_back(K);
      totals.push_back(total);
    }
    if (ks.size() >= 2) std::tie(out.dkp_slope, out.dkp_correlation) = linear_fit(ks, totals);
  }
}

json dkp_json(const PipelineSummary& s) {
  json per = json::array(), slabs = json::array(), depth = json::array();
  for (const auto& g : s.dkp_per_generation) per.push_back(g.value);
  for (const auto& g : s.dkp.slabs) slabs.push_back({{"k", g.k}, {"value", g.value}});
  for (const auto& [K, v] : s.dkp_by_depth) depth.push_back({{"K", K}, {"total", v}});
  return {{"dkp_total", s.dkp.total},
          {"dkp_per_generation", per},
          {"dkp_slabs", slabs},
          {"dkp_by_depth", depth},
          {"dkp_slope", s.dkp_slope},
          {"dkp_correlation", s.dkp_correlation}};
}

json radius_json(const CarlesonReport& r) {
  json a = json::array();
  for (const auto& [R, v] : r.per_radius) a.push_back({{"R", R}, {"max_normalized", v}});
  return a;
}

}  // namespace

PipelineSummary run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Stage s = prepare(cfg, opts);
  PipelineSummary out;
  out.cells_per_unit = static_cast<int>(std::lround(1.0 / s.grid.h(0)));
  out.nodes = s.grid.num_nodes();
  const MatrixField Abar = assemble_Abar(s.spec, s.grid, s.cells.abar);
  const BoundaryData bc = boundary_data(cfg);
  const double osc = osc_bottom(s.grid, bc.f);

  const SolveReport u = dirichlet_solve(s.A, bc, cfg.solver);
  log_line(opts) << "u: " << u.iterations << " iterations, residual " << u.residual << '\n';
  const SolveReport ubar = dirichlet_solve(Abar, bc, cfg.solver);
  log_line(opts) << "ubar: " << ubar.iterations << " iterations, residual " << ubar.residual << '\n';
  out.u = summarize(u, osc);
  out.ubar = summarize(ubar, osc);

  const double band = std::ldexp(1.0, -s.spec.K);
  out.carleson_u = carleson_sup(u.u, cfg.radii, band);
  out.carleson_ubar = carleson_sup(ubar.u, cfg.radii, band);

  dkp_stage(cfg, s, out);

  const ExpansionContext ctx{&s.spec, &s.layout, &s.cells.correctors};
  const ScalarField u2s = two_scale_expand(ubar.u, ctx);
  out.budget = error_budget(u.u, ubar.u, u2s, s.A, Abar, ctx, cfg.budget_tent, &out.budget_rows);

  const VectorField F = expansion_flux(s.A, Abar, u2s, ubar.u);
  const SolveReport zs = solve_error_equation(s.A, F, cfg.solver);
  out.z = summarize(zs, 0.0);
  double diff = 0.0, norm = 0.0;
  for (std::size_t n = 0; n < s.grid.num_nodes(); ++n) {
    const double zsub = u.u[n] - u2s[n];
    diff += (zs.u[n] - zsub) * (zs.u[n] - zsub);
    norm += zsub * zsub;
  }
  const double vol = s.grid.cell_volume();
  out.z_consistency_abs = std::sqrt(diff * vol);
  out.z_consistency = norm > 0.0 ? std::sqrt(diff / norm) : out.z_consistency_abs;
  const int d = s.grid.dim();
  for (std::size_t n = 0; n < s.grid.num_nodes(); ++n)
    if (s.grid.node_multi(n)[d - 1] == 0)
      out.trace_defect = std::max(out.trace_defect, std::abs(u2s[n] - bc.f(s.grid.node_point(n))));
  out.seconds = seconds_since(t0);

  // Reports.
  write_carleson_csv(opts.out / "carleson_u.csv", out.carleson_u, d);
  write_carleson_csv(opts.out / "carleson_ubar.csv", out.carleson_ubar, d);
  write_dkp_csv(opts.out / "dkp.csv", out.dkp);
  {
    auto os = open_csv(opts.out / "budget.csv");
    os << "box,k";
    for (int a = 0; a + 1 < d; ++a) os << ",j" << a;
    os << ",eps,eta,bulk,layer\n";
    for (const auto& r : out.budget_rows) {
      const auto& b = s.layout.boxes[r.box];
      os << r.box << ',' << b.k;
      for (int a = 0; a + 1 < d; ++a) os << ',' << b.j[a];
      os << ',' << b.eps << ',' << b.eta << ',' << r.bulk << ',' << r.layer << '\n';
    }
  }
  dump_scalar(cfg, opts, "u", u.u);
  dump_scalar(cfg, opts, "ubar", ubar.u);
  dump_scalar(cfg, opts, "u2s", u2s);
  if (cfg.dump_fields) {
    ScalarField z = u.u;
    for (std::size_t n = 0; n < z.size(); ++n) z[n] -= u2s[n];
    dump_scalar(cfg, opts, "z", z);
  }

  json sum = {{"name", cfg.name},
              {"carleson_sup_u", out.carleson_u.sup},
              {"carleson_sup_ubar", out.carleson_ubar.sup},
              {"carleson_ratio_u", out.carleson_u.ratio},
              {"carleson_ratio_ubar", out.carleson_ubar.ratio},
              {"carleson_per_radius_u", radius_json(out.carleson_u)},
              {"carleson_per_radius_ubar", radius_json(out.carleson_ubar)},
              {"z_energy", out.budget.z_energy},
              {"z_energy_weighted", out.budget.z_energy_weighted},
              {"z_mass", out.budget.z_mass},
              {"z_consistency", out.z_consistency},
              {"z_consistency_abs", out.z_consistency_abs},
              {"budget_bulk", out.budget.bulk},
              {"budget_layer", out.budget.layer},
              {"budget_total", out.budget.total},
              {"budget_flux_sq", out.budget.flux_sq},
              {"budget_boxes", out.budget.boxes},
              {"trace_defect", out.trace_defect},
              {"solve_u", solve_json(out.u)},
              {"solve_ubar", solve_json(out.ubar)},
              {"solve_z", solve_json(out.z)},
              {"cells_per_unit", out.cells_per_unit},
              {"nodes", out.nodes},
              {"sub_resolution_band", band},
              {"extension_below_band", "homogenized"}};
  sum.update(dkp_json(out));
  json abar = json::object();
  for (const auto& [l, m] : s.cells.abar) abar[l] = matrix_json(m);
  sum["abar"] = abar;
  if (!opts.deterministic) sum["seconds"] = out.seconds;
  write_json(opts.out / "summary.json", sum);
  write_manifest(cfg, opts, &s.cells, "pipeline");
  return out;
}

CarlesonReport run_carleson(const ExperimentConfig& cfg, const RunOptions& opts) {
  Stage s = prepare(cfg, opts);
  const BoundaryData bc = boundary_data(cfg);
  const SolveReport u = dirichlet_solve(s.A, bc, cfg.solver);
  const CarlesonReport rep = carleson_sup(u.u, cfg.radii, std::ldexp(1.0, -s.spec.K));
  write_carleson_csv(opts.out / "carleson_u.csv", rep, s.grid.dim());
  write_json(opts.out / "summary.json", {{"name", cfg.name},
                                         {"carleson_sup_u", rep.sup},
                                         {"carleson_ratio_u", rep.ratio},
                                         {"carleson_per_radius_u", radius_json(rep)},
                                         {"solve_u", solve_json(summarize(u, osc_bottom(s.grid, bc.f)))}});
  write_manifest(cfg, opts, &s.cells, "carleson");
  return rep;
}

PipelineSummary run_dkp(const ExperimentConfig& cfg, const RunOptions& opts) {
  Stage s = prepare(cfg, opts);
  PipelineSummary out;
  out.cells_per_unit = static_cast<int>(std::lround(1.0 / s.grid.h(0)));
  out.nodes = s.grid.num_nodes();
  dkp_stage(cfg, s, out);
  write_dkp_csv(opts.out / "dkp.csv", out.dkp);
  json sum = {{"name", cfg.name}};
  sum.update(dkp_json(out));
  write_json(opts.out / "summary.json", sum);
  write_manifest(cfg, opts, &s.cells, "dkp");
  return out;
}

std::vector<StripRateRow> strip_manufactured(const std::vector<int>& cells, const SolveOptions& so) {
  const double k = 2.0 * std::numbers::pi;
  auto exact = [k](const Vec& p) { return std::cos(k * p[0]) * std::exp(-k * p[1]); };
  std::vector<StripRateRow> rows;
  for (int n : cells) {
    const Grid g = make_strip_grid(2, 1.0, 1.0, n, true);
    const MatrixField A(g, SymMat::identity(2));
    BoundaryData bc;
    bc.f = exact;
    bc.top = BoundaryData::Top::dirichlet_exact;
    bc.top_value = exact;
    const SolveReport r = dirichlet_solve(A, bc, so);
    // Continuous L2 error of the Q1 solution with 3x3 Gauss points per cell.
    const double q = std::sqrt(0.6);
    const double xs[3] = {0.5 * (1 - q), 0.5, 0.5 * (1 + q)};
    const double ws[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    std::array<std::size_t, 4> nodes{};
    double err = 0.0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      g.cell_nodes(c, nodes);
      const Index m = g.cell_multi(c);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double x = xs[i], y = xs[j];
          const double uh = r.u[nodes[0]] * (1 - x) * (1 - y) + r.u[nodes[1]] * x * (1 - y) +
                            r.u[nodes[2]] * (1 - x) * y + r.u[nodes[3]] * x * y;
          const Vec p{(m[0] + x) * g.h(0), (m[1] + y) * g.h(1), 0.0};
          const double e = uh - exact(p);
          err += ws[i] * ws[j] * e * e * g.cell_volume();
        }
      }
    }
    StripRateRow row;
    row.cells = n;
    row.h = g.h(0);
    row.l2_error = std::sqrt(err);
    row.kappa_rel = r.max_principle_violation / 2.0;
    row.rate = rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : std::log(rows.back().l2_error / row.l2_error) / std::log(rows.back().h / row.h);
    rows.push_back(row);
  }
  return rows;
}

ConvergenceSummary run_convergence(const ExperimentConfig& cfg, const RunOptions& opts) {
  std::filesystem::create_directories(opts.out);
  ConvergenceSummary s;
  s.oracle = oracle1d::l2_error_curve(cfg.profile, cfg.eps_list);
  s.oracle_slope = oracle1d::fitted_slope(s.oracle);
  s.strip = strip_manufactured(cfg.strip_cells, cfg.solver);
  std::vector<double> lx, ly;
  for (const auto& r : s.strip) {
    lx.push_back(std::log(r.h));
    ly.push_back(std::log(r.l2_error));
  }
  s.strip_rate = linear_fit(lx, ly).first;
  {
    auto os = open_csv(opts.out / "oracle.csv");
    os << "eps,error,slope\n";
    for (const auto& r : s.oracle) os << r.eps << ',' << r.error << ',' << r.slope << '\n';
  }
  {
    auto os = open_csv(opts.out / "strip.csv");
    os << "cells,h,l2_error,rate,kappa_rel\n";
    for (const auto& r : s.strip) os << r.cells << ',' << r.h << ',' << r.l2_error << ',' << r.rate << ',' << r.kappa_rel << '\n';
  }
  write_json(opts.out / "summary.json", {{"name", cfg.name},
                                         {"oracle_slope", s.oracle_slope},
                                         {"abar_1d", oracle1d::abar(cfg.profile)},
                                         {"strip_rate", s.strip_rate}});
  write_manifest(cfg, opts, nullptr, "convergence");
  return s;
}

}  // namespace homlab
