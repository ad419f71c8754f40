#pragma once

// Command-line front end: evaluate, coverage, sweep, regress.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdboot/config.hpp"
#include "tdboot/harness.hpp"

namespace tdboot {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;

namespace detail {

struct CliOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::size_t> repeats;
  std::string in;
  double nominal = 0.95;
  std::string method = "quantile";
};

inline ExperimentConfig resolve_config(const CliOptions& o) {
  if (o.config.empty()) throw ConfigInvalid("--config is required");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.repeats) cfg.repeats = *o.repeats;
  validate(cfg);
  return cfg;
}

/// Writes through `write` to --out, or stdout when --out is empty.
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigInvalid("cannot open output '" + path + "'");
  write(out);
  if (!out) throw ConfigInvalid("write to '" + path + "' failed");
}

}  // namespace detail

/// Returns 0 on success, 1 on configuration or usage errors, 2 on a diverged run.
inline int cli_main(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Online bootstrap inference for TD and GTD policy evaluation", "tdboot"};
  app.require_subcommand(1);
  detail::CliOptions o;
  app.add_option("--config", o.config, "experiment config (JSON)");
  app.add_option("--out", o.out, "output path (default stdout)");
  app.add_option("--seed", o.seed, "override the config seed");
  app.add_option("--jobs", o.jobs, "parallel worker count")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "one run; writes the CI trace");
  auto* coverage = app.add_subcommand("coverage", "repeated runs; writes coverage per checkpoint");
  coverage->add_option("--repeats", o.repeats, "number of repeats (overrides config)");
  auto* sweep = app.add_subcommand("sweep", "coverage over the alpha0_grid and eta_grid of the config");
  sweep->add_option("--repeats", o.repeats, "number of repeats (overrides config)");
  auto* regress = app.add_subcommand("regress", "log-log fit of coverage error against t");
  regress->add_option("--in", o.in, "coverage csv")->required();
  regress->add_option("--nominal", o.nominal, "nominal coverage level");
  regress->add_option("--method", o.method, "quantile or se")->check(CLI::IsMember({"quantile", "se"}));
  regress->add_option("--repeats", o.repeats, "repeats behind the csv (default: csv column)");
  for (auto* sub : {evaluate, coverage, sweep, regress}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*evaluate) {
      const Experiment ex = build_experiment(detail::resolve_config(o));
      const Trace trace = run_policy_eval(ex);
      detail::emit(o.out, [&](std::ostream& os) { write_trace_csv(os, trace); });
    } else if (*coverage) {
      const Experiment ex = build_experiment(detail::resolve_config(o));
      const auto result = run_coverage(ex, ex.config.repeats, o.jobs);
      detail::emit(o.out, [&](std::ostream& os) { write_coverage_csv(os, result.records); });
    } else if (*sweep) {
      const ExperimentConfig cfg = detail::resolve_config(o);
      const auto rows = run_sensitivity(cfg, cfg.alpha0_grid, cfg.eta_grid, o.jobs);
      detail::emit(o.out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
    } else if (*regress) {
      std::ifstream in(o.in);
      if (!in) throw ConfigInvalid("cannot open '" + o.in + "'");
      auto records = read_coverage_csv(in);
      if (o.repeats)
        for (auto& r : records) r.repeats = *o.repeats;
      const CiMethod m = o.method == "se" ? CiMethod::se : CiMethod::quantile;
      const RegressionFit fit = coverage_error_regression(records, m, o.nominal);
      nlohmann::ordered_json j;
      j["method"] = o.method;
      j["nominal"] = o.nominal;
      j["floor"] = records.empty() ? 0.0 : coverage_error_floor(records.front().repeats);
      j["slope"] = fit.slope;
      j["intercept"] = fit.intercept;
      detail::emit(o.out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }
  } catch (const DivergedRun& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const NonFinite& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace tdboot
