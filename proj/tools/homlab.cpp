#include <CLI11.hpp>

#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include "homlab/errors.hpp"
#include "homlab/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::string cache;
  bool deterministic = false;
  bool quiet = false;
};

using Runner = std::function<void(const homlab::ExperimentConfig&, const homlab::RunOptions&)>;

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, Common& c) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("--config", c.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--cache", c.cache, "corrector cache directory (default <out>/cache)");
  sub->add_flag("--deterministic", c.deterministic, "omit wall-clock fields from the reports");
  sub->add_flag("-q,--quiet", c.quiet, "suppress progress messages");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homlab: periodic homogenization and Carleson experiments on the upper half-space"};
  app.require_subcommand(1);
  Common c;
  const std::pair<const char*, const char*> commands[] = {
      {"cell", "solve cell problems and write abar.json"},
      {"pipeline", "cell, field, solves and all reports"},
      {"convergence", "1-D oracle and strip manufactured-solution rates"},
      {"carleson", "solve for u and write the Carleson report"},
      {"dkp", "assemble the field and write the DKP report"},
  };
  for (const auto& [name, help] : commands) add_command(app, name, help, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : homlab::ConfigError::exit_code;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = homlab::load_config(c.config);
    homlab::RunOptions opts;
    opts.out = c.out;
    if (!c.cache.empty()) opts.cache_dir = c.cache;
    opts.deterministic = c.deterministic;
    opts.log = c.quiet ? nullptr : &std::cerr;
    if (cmd == "cell") {
      homlab::run_cell(cfg, opts);
    } else if (cmd == "pipeline") {
      const auto s = homlab::run_pipeline(cfg, opts);
      std::cout << "carleson_sup_u " << s.carleson_u.sup << "\ncarleson_ratio_u " << s.carleson_u.ratio
                << "\ndkp_total " << s.dkp.total << "\nz_energy " << s.budget.z_energy << '\n';
    } else if (cmd == "convergence") {
      const auto s = homlab::run_convergence(cfg, opts);
      std::cout << "oracle_slope " << s.oracle_slope << "\nstrip_rate " << s.strip_rate << '\n';
    } else if (cmd == "carleson") {
      const auto r = homlab::run_carleson(cfg, opts);
      std::cout << "carleson_sup_u " << r.sup << "\ncarleson_ratio_u " << r.ratio << '\n';
    } else {
      const auto s = homlab::run_dkp(cfg, opts);
      std::cout << "dkp_total " << s.dkp.total << "\ndkp_slope " << s.dkp_slope << '\n';
    }
    std::cout << "wrote " << c.out << '\n';
    return 0;
  } catch (const homlab::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return homlab::ConfigError::exit_code;
  } catch (const homlab::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return homlab::SolverError::exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
