#pragma once

// Experiment orchestration: single evaluation runs with CI traces,
// Monte-Carlo coverage studies, step-size sweeps, coverage-error regression
// and the CSV writers for each.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tdboot/bootstrap.hpp"
#include "tdboot/config.hpp"
#include "tdboot/env.hpp"
#include "tdboot/lsa.hpp"
#include "tdboot/observations.hpp"

namespace tdboot {

/// State handed to checkpoint callbacks.
struct CheckpointView {
  std::uint64_t checkpoint;  ///< in budget units (steps or episodes)
  std::uint64_t steps;
  const LsaState& main;
  const BootstrapEnsemble& ensemble;
};

struct DriveOptions {
  /// Overrides the configured B when set.
  std::optional<std::size_t> replicates;
  /// When set, every consumed transition is appended here.
  std::vector<Transition>* record = nullptr;
};

/// Runs the main iterate and the ensemble over one seeded data stream and
/// calls `on_checkpoint` at each configured checkpoint. Returns the number of
/// transitions consumed.
inline std::uint64_t drive(const Experiment& ex, std::uint64_t seed,
                           const std::function<void(const CheckpointView&)>& on_checkpoint,
                           const DriveOptions& opts = {}) {
  const auto& cfg = ex.config;
  TrajectorySampler sampler(ex.mdp, ex.behavior, derive_seed(seed, kSamplerStream));
  LsaState main(ex.param_dim());
  BootstrapEnsemble ens(opts.replicates.value_or(cfg.B), ex.param_dim(), cfg.weight_kind,
                        derive_seed(seed, kWeightStream));

  auto run = [&]<class Obs>(ObservationBuilder<Obs>& builder) {
    std::size_t next_cp = 0;
    const auto& cps = ex.config.checkpoints;
    while (next_cp < cps.size()) {
      const Transition tr = sampler.next();
      if (opts.record) opts.record->push_back(tr);
      const Obs& obs = builder.build(tr);
      const double alpha = ex.schedule(main.t() + 1);
      try {
        main.step(obs, alpha);
        ens.step(obs, alpha);
      } catch (const NonFinite& e) {
        throw DivergedRun(std::string("seed ") + std::to_string(seed) + ": " + e.what());
      }
      const std::uint64_t progress = cfg.episode_budget() ? sampler.episodes_completed() : sampler.steps();
      while (next_cp < cps.size() && progress >= cps[next_cp]) {
        on_checkpoint({cps[next_cp], sampler.steps(), main, ens});
        ++next_cp;
      }
    }
  };

  if (cfg.task == Task::td) {
    ObservationBuilder<TdObservation> builder(ex.features, ex.mdp.gamma(), ex.mdp.r_max(), cfg.task, ex.target,
                                              ex.behavior);
    run(builder);
  } else {
    ObservationBuilder<GtdObservation> builder(ex.features, ex.mdp.gamma(), ex.mdp.r_max(), cfg.task, ex.target,
                                               ex.behavior);
    run(builder);
  }
  return sampler.steps();
}

struct TraceRow {
  std::uint64_t t = 0;
  double estimate = 0.0;
  ConfidenceInterval quantile;
  ConfidenceInterval se;
  std::optional<double> true_value;
};

struct Trace {
  std::vector<TraceRow> rows;
  std::uint64_t transitions = 0;
};

inline Trace run_policy_eval(const Experiment& ex, std::uint64_t seed) {
  Trace trace;
  const double level = ex.config.ci_level;
  trace.transitions = drive(ex, seed, [&](const CheckpointView& v) {
    const auto& bar = v.main.theta_bar();
    trace.rows.push_back({v.checkpoint, dot(ex.functional, bar), quantile_ci(bar, v.ensemble, level, ex.functional),
                          se_ci(bar, v.ensemble, level, ex.functional), ex.true_value});
  });
  return trace;
}

inline Trace run_policy_eval(const Experiment& ex) { return run_policy_eval(ex, ex.config.seed); }

struct MethodStats {
  double coverage = 0.0;
  double mean_width = 0.0;
};

struct CoverageRecord {
  std::uint64_t t = 0;
  MethodStats quantile;
  MethodStats se;
  double mean_abs_error = 0.0;
  std::size_t repeats = 0;

  const MethodStats& method(CiMethod m) const { return m == CiMethod::quantile ? quantile : se; }
};

struct CoverageResult {
  std::vector<CoverageRecord> records;
  std::uint64_t transitions = 0;
};

/// Runs `jobs(i)` for i in [0, n) on up to `workers` threads. The first
/// exception by index is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Aggregates per-repeat traces into coverage records. Every trace must have
/// the same checkpoints and carry a true value.
inline std::vector<CoverageRecord> summarize_coverage(const std::vector<Trace>& traces) {
  if (traces.empty()) return {};
  const std::size_t n_cp = traces.front().rows.size();
  std::vector<CoverageRecord> out(n_cp);
  const double r = static_cast<double>(traces.size());
  for (std::size_t k = 0; k < n_cp; ++k) {
    auto& rec = out[k];
    rec.t = traces.front().rows[k].t;
    rec.repeats = traces.size();
    for (const auto& tr : traces) {
      const auto& row = tr.rows.at(k);
      if (!row.true_value) throw ConfigInvalid("coverage needs a computable true value");
      const double truth = *row.true_value;
      rec.quantile.coverage += row.quantile.contains(truth) ? 1.0 : 0.0;
      rec.se.coverage += row.se.contains(truth) ? 1.0 : 0.0;
      rec.quantile.mean_width += row.quantile.width();
      rec.se.mean_width += row.se.width();
      rec.mean_abs_error += std::abs(row.estimate - truth);
    }
    rec.quantile.coverage /= r;
    rec.se.coverage /= r;
    rec.quantile.mean_width /= r;
    rec.se.mean_width /= r;
    rec.mean_abs_error /= r;
  }
  return out;
}

/// Repeat i uses seed master_seed + i; results are merged in repeat order.
inline CoverageResult run_coverage(const Experiment& ex, std::size_t repeats, std::size_t jobs = 1) {
  if (repeats < 1) throw ConfigInvalid("repeats must be at least 1");
  if (!ex.true_value) throw ConfigInvalid("coverage needs a computable true value");
  std::vector<Trace> traces(repeats);
  parallel_for(repeats, jobs, [&](std::size_t i) { traces[i] = run_policy_eval(ex, ex.config.seed + i); });
  CoverageResult out{summarize_coverage(traces), 0};
  for (const auto& t : traces) out.transitions += t.transitions;
  return out;
}

struct SweepRow {
  std::string param_name;
  double param_value = 0.0;
  std::uint64_t t = 0;
  CiMethod method = CiMethod::quantile;
  double coverage = 0.0;
  double mean_width = 0.0;
};

/// Coverage study per grid point: alpha0 values with the configured eta, then
/// eta values with the configured alpha0. All points share the master seed.
inline std::vector<SweepRow> run_sensitivity(const ExperimentConfig& cfg, const std::vector<double>& alpha0_grid,
                                             const std::vector<double>& eta_grid, std::size_t jobs = 1) {
  if (alpha0_grid.empty() && eta_grid.empty()) throw ConfigInvalid("sweep needs a nonempty alpha0 or eta grid");
  std::vector<SweepRow> rows;
  auto sweep = [&](const std::string& name, const std::vector<double>& grid) {
    for (double value : grid) {
      ExperimentConfig point = cfg;
      (name == "alpha0" ? point.alpha0 : point.eta) = value;
      const Experiment ex = build_experiment(point);
      const auto cov = run_coverage(ex, cfg.repeats, jobs);
      for (const auto& rec : cov.records)
        for (CiMethod m : {CiMethod::quantile, CiMethod::se})
          rows.push_back({name, value, rec.t, m, rec.method(m).coverage, rec.method(m).mean_width});
    }
  };
  for (double a : alpha0_grid) StepSchedule{a, cfg.eta}.validate();
  for (double e : eta_grid) StepSchedule{cfg.alpha0, e}.validate();
  sweep("alpha0", alpha0_grid);
  sweep("eta", eta_grid);
  return rows;
}

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline double coverage_error_floor(std::size_t repeats) { return 1.0 / (10.0 * static_cast<double>(repeats)); }

/// Least squares of log(|coverage - nominal| + 1/(10 R)) on log t.
inline RegressionFit coverage_error_regression(std::span<const std::uint64_t> t, std::span<const double> coverage,
                                               double nominal, std::size_t repeats) {
  if (t.size() != coverage.size()) throw DimensionMismatch("checkpoint and coverage lengths differ");
  if (t.size() < 3) throw InsufficientPoints("need at least 3 checkpoints, got " + std::to_string(t.size()));
  if (repeats < 1) throw InsufficientPoints("repeats must be positive");
  const double floor = coverage_error_floor(repeats);
  const std::size_t n = t.size();
  double mx = 0.0, my = 0.0;
  Vector x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (t[i] == 0) throw OutOfRange("checkpoint 0 has no logarithm");
    x[i] = std::log(static_cast<double>(t[i]));
    y[i] = std::log(std::abs(coverage[i] - nominal) + floor);
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw InsufficientPoints("checkpoints must not all coincide");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

inline RegressionFit coverage_error_regression(const std::vector<CoverageRecord>& records, CiMethod method,
                                               double nominal) {
  std::vector<std::uint64_t> t;
  std::vector<double> cov;
  for (const auto& r : records) {
    t.push_back(r.t);
    cov.push_back(r.method(method).coverage);
  }
  return coverage_error_regression(t, cov, nominal, records.empty() ? 1 : records.front().repeats);
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "t,estimate,q_lo,q_hi,se_lo,se_hi,true_value\n";
  for (const auto& r : trace.rows) {
    out << r.t << ',' << format_real(r.estimate) << ',' << format_real(r.quantile.lower) << ','
        << format_real(r.quantile.upper) << ',' << format_real(r.se.lower) << ',' << format_real(r.se.upper) << ','
        << (r.true_value ? format_real(*r.true_value) : std::string()) << '\n';
  }
}

inline void write_coverage_csv(std::ostream& out, const std::vector<CoverageRecord>& records) {
  out << "t,method,coverage,mean_width,mean_abs_error,repeats\n";
  for (const auto& r : records)
    for (CiMethod m : {CiMethod::quantile, CiMethod::se}) {
      out << r.t << ',' << to_string(m) << ',' << format_real(r.method(m).coverage) << ','
          << format_real(r.method(m).mean_width) << ',' << format_real(r.mean_abs_error) << ',' << r.repeats << '\n';
    }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "param_name,param_value,t,method,coverage,mean_width\n";
  for (const auto& r : rows) {
    out << r.param_name << ',' << format_real(r.param_value) << ',' << r.t << ',' << to_string(r.method) << ','
        << format_real(r.coverage) << ',' << format_real(r.mean_width) << '\n';
  }
}

/// Parses a cov.csv back into records (inverse of write_coverage_csv).
inline std::vector<CoverageRecord> read_coverage_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "t,method,coverage,mean_width,mean_abs_error,repeats") {
    throw ConfigInvalid("not a coverage csv (bad header)");
  }
  std::map<std::uint64_t, CoverageRecord> by_t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ConfigInvalid("coverage csv line " + std::to_string(lineno) + ": expected 6 columns");
    try {
      auto& rec = by_t[std::stoull(cells[0])];
      rec.t = std::stoull(cells[0]);
      MethodStats& ms = cells[1] == "quantile" ? rec.quantile
                        : cells[1] == "se"     ? rec.se
                                               : throw ConfigInvalid("unknown method '" + cells[1] + "'");
      ms.coverage = std::stod(cells[2]);
      ms.mean_width = std::stod(cells[3]);
      rec.mean_abs_error = std::stod(cells[4]);
      rec.repeats = std::stoull(cells[5]);
    } catch (const std::logic_error&) {
      throw ConfigInvalid("coverage csv line " + std::to_string(lineno) + ": bad number");
    }
  }
  std::vector<CoverageRecord> out;
  for (auto& [_, rec] : by_t) out.push_back(rec);
  return out;
}

}  // namespace tdboot
