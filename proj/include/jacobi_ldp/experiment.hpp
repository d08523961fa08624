#ifndef JACOBI_LDP_EXPERIMENT_HPP
#define JACOBI_LDP_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "equilibrium.hpp"
#include "grid_measure.hpp"
#include "json.hpp"
#include "ldp.hpp"
#include "manifest.hpp"
#include "sampler.hpp"

namespace jacobi_ldp {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNonConvergence = 3, kInsufficientStatistics = 4 };

/// Runs fn(0), ..., fn(count - 1) on up to `threads` workers. Results must be
/// stored by index; the first exception is rethrown after all workers stop.
template <class Fn>
void run_jobs(std::size_t count, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  if (workers == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(workers, count); ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

namespace experiment_detail {

using json = nlohmann::ordered_json;

inline std::string real_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return csv_real(v);
}

inline std::string real_or_inf(const ExtendedReal& v) { return real_or_inf(v.to_double()); }

inline json json_real(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

inline json limits_json(const LimitParams& lp) {
  return {{"rho", lp.rho()}, {"kappa", lp.kappa()}, {"lambda", lp.lambda()}};
}

inline json equilibrium_json(const EquilibriumSolution& sol) {
  const auto [lo, hi] = sol.support_hull();
  return {{"status", to_string(sol.status)},
          {"cells", sol.mu0.cells()},
          {"B", sol.B},
          {"D", sol.D},
          {"kkt_residual", json_real(sol.kkt_residual)},
          {"discrete_gap", sol.discrete_gap},
          {"iterations", sol.iterations},
          {"support_threshold", sol.support_threshold()},
          {"support_hull", {lo, hi}}};
}

inline json chain_json(const ChainSettings& s, const ChainDiagnostics& d) {
  return {{"burn_in", s.burn_in},
          {"thinning", s.thinning},
          {"initial_step", s.initial_step},
          {"target_acceptance", s.target_acceptance},
          {"stream", s.stream},
          {"acceptance_rate", d.acceptance_rate},
          {"final_step", d.final_step},
          {"sweeps_run", d.sweeps_run},
          {"max_resync_drift", d.max_resync_drift}};
}

inline json params_json(int big_n, const FiniteParams& p) {
  return {{"N", big_n}, {"n", p.n()}, {"kappaN", p.kappa_n()}, {"lambdaN", p.lambda_n()}};
}

inline std::string region_text(const Region& r) { return config_detail::format_region(r); }

}  // namespace experiment_detail

/// Solves for mu0 and writes equilibrium.csv and summary.json.
inline int run_equilibrium_command(const ExperimentConfig& cfg, RunRecorder& rec) {
  using namespace experiment_detail;
  const LimitParams lp = cfg.limits();
  const EquilibriumSolution sol =
      rec.stage("equilibrium", [&] { return solve_equilibrium(lp, cfg.eq_cells, cfg.eq_tol, cfg.eq_max_iters); });

  CsvTable table({"node", "lower", "upper", "weight", "density", "cdf", "veff", "support"});
  const auto cdf = sol.mu0.cdf_at_upper_edges();
  const UniformGrid& g = sol.mu0.grid();
  for (std::size_t i = 0; i < sol.mu0.cells(); ++i) {
    table.add_row({csv_real(g.node(i)), csv_real(g.lower(i)), csv_real(g.upper(i)), csv_real(sol.mu0.weight(i)),
                   csv_real(sol.mu0.weight(i) / g.width()), csv_real(cdf[i]), real_or_inf(sol.veff_table[i].value),
                   sol.support_mask[i] ? "1" : "0"});
  }
  rec.write("equilibrium.csv", table.text());

  json summary;
  summary["command"] = "equilibrium";
  summary["limits"] = limits_json(lp);
  summary["equilibrium"] = equilibrium_json(sol);
  summary["converged"] = sol.converged();
  rec.write_json("summary.json", summary);
  return sol.converged() ? kOk : kNonConvergence;
}

/// Samples P_N at sample.N; writes samples, a pooled histogram with the mu0
/// overlay, and per-sample Kolmogorov distances to mu0.
inline int run_sample_command(const ExperimentConfig& cfg, RunRecorder& rec) {
  using namespace experiment_detail;
  const LimitParams lp = cfg.limits();
  const ScalingFamily fam = cfg.family();
  const FiniteParams p = fam.params_at(cfg.sample_N);
  const ChainSettings s = cfg.chain.resolve(p.n(), cfg.seed, 0);
  rec.note_stream("sample", s.stream);

  const EquilibriumSolution sol =
      rec.stage("equilibrium", [&] { return solve_equilibrium(lp, cfg.eq_cells, cfg.eq_tol, cfg.eq_max_iters); });

  CsvTable samples({"sample", "index", "x"});
  CsvTable distances({"sample", "kolmogorov"});
  const UniformGrid bins(cfg.hist_cells);
  std::vector<std::size_t> counts(cfg.hist_cells, 0);
  double distance_sum = 0.0;
  std::optional<ChainDiagnostics> diag;
  std::size_t k = 0;
  if (cfg.sample_count > 0) {
    diag = rec.stage("sampling", [&] {
      return stream_chain(p, s, cfg.sample_count, [&](std::span<const double> x) {
        const Configuration c(std::vector<double>(x.begin(), x.end()));
        for (std::size_t i = 0; i < c.size(); ++i) {
          samples.add_row({std::to_string(k), std::to_string(i), csv_real(c[i])});
          ++counts[bins.cell_of(c[i])];
        }
        const double d = kolmogorov_distance(c, sol.mu0);
        distance_sum += d;
        distances.add_row({std::to_string(k), csv_real(d)});
        ++k;
      });
    });
  }
  const double total = static_cast<double>(cfg.sample_count) * p.n();
  CsvTable hist({"lower", "upper", "count", "empirical_density", "mu0_density"});
  for (std::size_t b = 0; b < bins.cells(); ++b) {
    const double mass = sol.mu0.cdf(bins.upper(b)) - sol.mu0.cdf(bins.lower(b));
    hist.add_row({csv_real(bins.lower(b)), csv_real(bins.upper(b)), std::to_string(counts[b]),
                  csv_real(total > 0 ? counts[b] / (total * bins.width()) : 0.0), csv_real(mass / bins.width())});
  }
  rec.write("samples.csv", samples.text());
  rec.write("histogram.csv", hist.text());
  rec.write("kolmogorov.csv", distances.text());

  json summary;
  summary["command"] = "sample";
  summary["limits"] = limits_json(lp);
  summary["params"] = params_json(cfg.sample_N, p);
  summary["count"] = cfg.sample_count;
  summary["chain"] = diag ? chain_json(s, *diag) : json{{"stream", s.stream}, {"sweeps_run", 0}};
  summary["mean_kolmogorov_distance"] =
      cfg.sample_count > 0 ? json(distance_sum / static_cast<double>(cfg.sample_count)) : json(nullptr);
  summary["equilibrium"] = equilibrium_json(sol);
  rec.write_json("summary.json", summary);
  return sol.converged() ? kOk : kNonConvergence;
}

namespace experiment_detail {

struct PerN {
  OutlierEstimate estimate;
  ChainSettings settings;
  ChainDiagnostics diagnostics;
  std::optional<GammaEstimate> gamma;
  std::optional<SandwichCheck> sandwich;
};

// One outlier estimate (and optionally a gamma estimate) at N with the given
// stream pair.
inline PerN estimate_at(const ExperimentConfig& cfg, const ScalingFamily& fam, int big_n, std::size_t trials,
                        std::uint64_t stream) {
  PerN out;
  const FiniteParams p = fam.params_at(big_n);
  out.settings = cfg.chain.resolve(p.n(), cfg.seed, 2 * stream);
  if (cfg.region.empty()) {
    out.estimate = estimate_outlier_probability(fam, big_n, cfg.region, trials, out.settings);
  } else {
    detail::BatchMeans acc(trials);
    out.diagnostics = stream_chain(p, out.settings, trials, [&](std::span<const double> x) {
      acc.add(cfg.region.contains_any(x) ? 1.0 : 0.0);
    });
    out.estimate = detail::finish_outlier_estimate(big_n, acc);
  }
  if (cfg.gamma_samples > 0) {
    const ChainSettings gs = cfg.chain.resolve(p.n() - 1, cfg.seed, 2 * stream + 1);
    out.gamma = estimate_gamma(fam, big_n, cfg.region, cfg.gamma_samples, cfg.quad_cells, gs);
    out.sandwich = check_sandwich(out.estimate, *out.gamma, p.n());
  }
  return out;
}

inline std::vector<std::string> gamma_fields(const PerN& r) {
  const GammaEstimate& g = *r.gamma;
  const SandwichCheck& c = *r.sandwich;
  return {std::to_string(g.samples), real_or_inf(g.log_gamma_X), real_or_inf(g.log_gamma_full),
          csv_real(g.log_gamma_full_std_err), real_or_inf(g.log_gamma_full / g.N), csv_real(g.ratio),
          csv_real(g.ratio_std_err), csv_real(c.lower_bound), csv_real(c.upper_bound), c.lower_ok ? "1" : "0",
          c.upper_ok ? "1" : "0", c.ok() ? "1" : "0"};
}

inline const std::vector<std::string> kGammaHeader = {
    "gamma_samples", "log_gamma_X", "log_gamma_full", "log_gamma_full_std_err", "log_gamma_full_per_N",
    "ratio",         "ratio_std_err", "lower_bound",  "upper_bound",           "lower_ok",
    "upper_ok",      "sandwich_ok"};

}  // namespace experiment_detail

/// Per-N outlier probabilities, optional gamma ratios with sandwich checks,
/// and the rate fit against -2 rho inf_X V_eff.
inline int run_ldp_command(const ExperimentConfig& cfg, RunRecorder& rec, int threads) {
  using namespace experiment_detail;
  const LimitParams lp = cfg.limits();
  const ScalingFamily fam = cfg.family();
  const EquilibriumSolution sol =
      rec.stage("equilibrium", [&] { return solve_equilibrium(lp, cfg.eq_cells, cfg.eq_tol, cfg.eq_max_iters); });

  std::vector<PerN> results(cfg.sizes.size());
  rec.stage("estimation", [&] {
    run_jobs(cfg.sizes.size(), threads, [&](std::size_t i) {
      results[i] = estimate_at(cfg, fam, cfg.sizes[i], cfg.trials_at(i), i);
    });
    return 0;
  });
  for (std::size_t i = 0; i < results.size(); ++i) {
    rec.note_stream("N=" + std::to_string(cfg.sizes[i]) + " outlier", results[i].settings.stream);
    if (cfg.gamma_samples > 0) rec.note_stream("N=" + std::to_string(cfg.sizes[i]) + " gamma", 2 * i + 1);
  }

  std::vector<std::string> header = {"N", "n", "kappaN", "lambdaN", "trials", "hits", "p_hat", "std_err", "ess",
                                     "log_p_hat", "acceptance_rate"};
  if (cfg.gamma_samples > 0) header.insert(header.end(), kGammaHeader.begin(), kGammaHeader.end());
  CsvTable table(header);
  std::vector<OutlierEstimate> estimates;
  json per_n = json::array();
  bool sandwich_all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const PerN& r = results[i];
    const FiniteParams p = fam.params_at(cfg.sizes[i]);
    const OutlierEstimate& e = r.estimate;
    estimates.push_back(e);
    std::vector<std::string> row = {std::to_string(e.N),        std::to_string(p.n()),       csv_real(p.kappa_n()),
                                    csv_real(p.lambda_n()),     std::to_string(e.trials),    std::to_string(e.hits),
                                    csv_real(e.p_hat),          csv_real(e.std_err),         csv_real(e.ess),
                                    real_or_inf(std::log(e.p_hat)), csv_real(r.diagnostics.acceptance_rate)};
    json item = params_json(e.N, p);
    item["trials"] = e.trials;
    item["hits"] = e.hits;
    item["p_hat"] = e.p_hat;
    item["std_err"] = e.std_err;
    item["ess"] = e.ess;
    item["acceptance_rate"] = r.diagnostics.acceptance_rate;
    if (r.gamma) {
      const auto extra = gamma_fields(r);
      row.insert(row.end(), extra.begin(), extra.end());
      item["log_gamma_full_per_N"] = json_real(r.gamma->log_gamma_full / e.N);
      item["ratio"] = r.gamma->ratio;
      item["sandwich_ok"] = r.sandwich->ok();
      if (r.gamma->warning) item["gamma_warning"] = *r.gamma->warning;
      sandwich_all = sandwich_all && r.sandwich->ok();
    }
    table.add_row(row);
    per_n.push_back(item);
  }
  rec.write("estimates.csv", table.text());

  const RateEstimate fit = fit_rate(estimates, cfg.region, sol, lp);
  std::string verdict;
  if (fit.region_meets_support) {
    verdict = "no_decay_expected";
  } else if (!fit.fitted()) {
    verdict = "fit_refused";
  } else {
    verdict = fit.relative_error() <= 0.25 ? "slope_within_tolerance" : "slope_outside_tolerance";
  }
  std::string used;
  for (int n : fit.used_N) used += (used.empty() ? "" : " ") + std::to_string(n);
  CsvTable fit_table({"quantity", "value"});
  fit_table.add_row({"status", fit.fitted() ? "fitted" : "refused"});
  fit_table.add_row({"fitted_slope", csv_real(fit.fitted_slope)});
  fit_table.add_row({"slope_std_err", csv_real(fit.slope_std_err)});
  fit_table.add_row({"intercept", csv_real(fit.intercept)});
  fit_table.add_row({"inf_veff", real_or_inf(fit.inf_veff)});
  fit_table.add_row({"theoretical_rate", real_or_inf(fit.theoretical_rate)});
  fit_table.add_row({"relative_error", fit.fitted() ? real_or_inf(fit.relative_error()) : "nan"});
  fit_table.add_row({"used_N", used});
  fit_table.add_row({"verdict", verdict});
  rec.write("fit.csv", fit_table.text());

  json summary;
  summary["command"] = "ldp";
  summary["limits"] = limits_json(lp);
  summary["region"] = region_text(cfg.region);
  summary["equilibrium"] = equilibrium_json(sol);
  summary["per_N"] = per_n;
  json f;
  f["status"] = fit.fitted() ? "fitted" : "refused";
  f["message"] = fit.message;
  f["fitted_slope"] = fit.fitted_slope;
  f["slope_std_err"] = fit.slope_std_err;
  f["intercept"] = fit.intercept;
  f["inf_veff"] = json_real(fit.inf_veff);
  f["theoretical_rate"] = json_real(fit.theoretical_rate);
  f["relative_error"] = fit.fitted() ? json_real(fit.relative_error()) : json(nullptr);
  f["region_meets_support"] = fit.region_meets_support;
  f["used_N"] = fit.used_N;
  f["needs_more_trials"] = fit.needs_more_trials;
  summary["fit"] = f;
  summary["verdict"] = verdict;
  if (cfg.gamma_samples > 0) summary["sandwich_all_ok"] = sandwich_all;
  rec.write_json("summary.json", summary);

  if (!sol.converged()) return kNonConvergence;
  if (!fit.fitted()) return kInsufficientStatistics;
  return kOk;
}

/// Repeats the outlier and gamma estimates `sandwich.repetitions` times per N
/// with fresh streams and reports how often the sandwich inequality holds.
inline int run_sandwich_command(const ExperimentConfig& cfg, RunRecorder& rec, int threads) {
  using namespace experiment_detail;
  const LimitParams lp = cfg.limits();
  const ScalingFamily fam = cfg.family();
  const EquilibriumSolution sol =
      rec.stage("equilibrium", [&] { return solve_equilibrium(lp, cfg.eq_cells, cfg.eq_tol, cfg.eq_max_iters); });

  const std::size_t reps = cfg.repetitions;
  const std::size_t jobs = cfg.sizes.size() * reps;
  std::vector<PerN> results(jobs);
  rec.stage("estimation", [&] {
    run_jobs(jobs, threads, [&](std::size_t j) {
      const std::size_t i = j / reps;
      results[j] = estimate_at(cfg, fam, cfg.sizes[i], cfg.trials_at(i), j);
    });
    return 0;
  });
  rec.note_stream("first outlier stream", 0);
  rec.note_stream("last gamma stream", 2 * jobs - 1);

  std::vector<std::string> header = {"N", "repetition", "trials", "hits", "p_hat", "std_err"};
  header.insert(header.end(), kGammaHeader.begin(), kGammaHeader.end());
  CsvTable table(header);
  json per_n = json::array();
  std::size_t passed_total = 0;
  for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
    std::size_t passed = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const PerN& res = results[i * reps + r];
      std::vector<std::string> row = {std::to_string(cfg.sizes[i]),      std::to_string(r),
                                      std::to_string(res.estimate.trials), std::to_string(res.estimate.hits),
                                      csv_real(res.estimate.p_hat),       csv_real(res.estimate.std_err)};
      const auto extra = gamma_fields(res);
      row.insert(row.end(), extra.begin(), extra.end());
      table.add_row(row);
      passed += res.sandwich->ok() ? 1 : 0;
    }
    passed_total += passed;
    per_n.push_back({{"N", cfg.sizes[i]},
                     {"n", fam.params_at(cfg.sizes[i]).n()},
                     {"repetitions", reps},
                     {"passed", passed},
                     {"pass_fraction", static_cast<double>(passed) / static_cast<double>(reps)}});
  }
  rec.write("sandwich.csv", table.text());

  const double fraction = static_cast<double>(passed_total) / static_cast<double>(jobs);
  json summary;
  summary["command"] = "sandwich";
  summary["limits"] = limits_json(lp);
  summary["region"] = region_text(cfg.region);
  summary["region_meets_support"] = region_meets_support(cfg.region, sol);
  summary["equilibrium"] = equilibrium_json(sol);
  summary["per_N"] = per_n;
  summary["pass_fraction"] = fraction;
  summary["verdict"] = fraction >= 0.95 ? "pass" : "fail";
  rec.write_json("summary.json", summary);
  return sol.converged() ? kOk : kNonConvergence;
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_EXPERIMENT_HPP
