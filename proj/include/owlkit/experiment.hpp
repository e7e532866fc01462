#pragma once

// Replicated simulation experiments: data generation per replicate, grid
// search per method, test-set evaluation, aggregation into a result table.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "owlkit/evaluate.hpp"
#include "owlkit/simgen.hpp"

namespace owlkit {

enum class Perturbation { contamination, flip };

struct ExperimentConfig {
  ScenarioSpec scenario;
  /// Rates applied to train and tune (one table column group each).
  std::vector<double> rates = {0.0};
  Perturbation perturbation = Perturbation::contamination;
  std::vector<MethodSpec> methods;
  int replicates = 20;
  Eigen::Index n_test = 10000;
  std::uint64_t master_seed = 1;
  int workers = 1;
  /// Wall-clock cap per (replicate, rate, method) grid search; <= 0 disables.
  double cell_timeout_seconds = 120.0;
  Criterion criterion = Criterion::value;
  bool record_runtime = false;
  /// Center and scale covariates by training-set statistics.
  bool standardize = false;
  /// Optional user data (x1..xm, a, r [, pi]) split into train/tune/test
  /// thirds per replicate instead of simulating.
  std::optional<TrialDataset> data;

  void validate() const {
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (n_test < 1) throw std::invalid_argument("n_test must be >= 1");
    if (methods.empty()) throw std::invalid_argument("no methods configured");
    if (rates.empty()) throw std::invalid_argument("no perturbation rates configured");
    std::set<std::string> names;
    for (const auto& m : methods) {
      m.validate();
      if (!names.insert(m.name).second)
        throw std::invalid_argument("duplicate method name '" + m.name + "'");
    }
    for (double r : rates)
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("rates must lie in [0, 1)");
    if (data) {
      data->validate();
      if (data->size() < 6) throw std::invalid_argument("user data needs at least 6 rows");
    } else {
      ScenarioSpec s = scenario;
      s.contamination_rate = 0.0;
      s.validate();
    }
  }

  std::string scenario_label() const {
    if (data) return "user_data";
    std::string s = "example" + std::to_string(scenario.example_id);
    if (scenario.example_id == 1) s += scenario.smooth ? "_smooth" : "_nonsmooth";
    return s + "_m" + std::to_string(scenario.m) + "_n" + std::to_string(scenario.n);
  }
};

struct ResultRow {
  std::string method;
  std::string scenario;
  double contamination = 0.0;
  double mean_value = 0.0;
  double sd_value = 0.0;
  double mean_error = 0.0;
  double sd_error = 0.0;
  /// Mean seconds per replicate; NaN unless runtimes are recorded.
  double mean_runtime = std::numeric_limits<double>::quiet_NaN();
  int replicates_ok = 0;
  int replicates_total = 0;

  bool complete() const { return replicates_ok == replicates_total; }
  std::string status() const {
    if (replicates_ok == 0) return "failed";
    return complete() ? "complete" : "incomplete";
  }
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

/// Outcome of one method on one replicate at one rate.
struct ReplicateOutcome {
  bool ok = false;
  double value = 0.0;
  double error = 0.0;
  double seconds = 0.0;
  std::string message;
  TuningCell chosen;
};

struct ExperimentResult {
  ResultTable table;
  /// outcomes[rate][method][replicate]
  std::vector<std::vector<std::vector<ReplicateOutcome>>> outcomes;
  std::vector<std::string> diagnostics;
};

struct ReplicateData {
  TrialDataset train, tune, test;
};

namespace detail {

inline double sample_mean(const std::vector<double>& x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_sd(const std::vector<double>& x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (x.size() == 1) return 0.0;
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

inline TrialDataset take_rows(const TrialDataset& d, const std::vector<Eigen::Index>& idx) {
  TrialDataset out;
  const auto k = static_cast<Eigen::Index>(idx.size());
  out.covariates.resize(k, d.dim());
  out.treatments.resize(k);
  out.rewards.resize(k);
  out.propensities.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.covariates.row(i) = d.covariates.row(idx[i]);
    out.treatments(i) = d.treatments(idx[i]);
    out.rewards(i) = d.rewards(idx[i]);
    out.propensities(i) = d.propensities(idx[i]);
  }
  return out;
}

inline std::optional<std::chrono::steady_clock::time_point> deadline_after(double seconds) {
  if (!(seconds > 0.0)) return std::nullopt;
  return std::chrono::steady_clock::now() +
         std::chrono::duration_cast<std::chrono::steady_clock::duration>(
             std::chrono::duration<double>(seconds));
}

/// Runs task(i) for i in [0, count) on `workers` threads.
template <class Task>
void parallel_for(std::size_t count, int workers, Task&& task) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto loop = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Seed of replicate r; streams 1-4 are train, tune, test, perturbation.
inline std::uint64_t replicate_seed(std::uint64_t master_seed, int replicate) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(replicate));
}

/// Clean train/tune/test for one replicate.
inline ReplicateData replicate_data(const ExperimentConfig& cfg, int replicate) {
  const std::uint64_t rs = replicate_seed(cfg.master_seed, replicate);
  if (cfg.data) {
    const auto n = cfg.data->size();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(derive_seed(rs, 5));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto third = n / 3;
    auto part = [&](Eigen::Index b, Eigen::Index e) {
      return detail::take_rows(*cfg.data, std::vector<Eigen::Index>(idx.begin() + b, idx.begin() + e));
    };
    return {part(0, third), part(third, 2 * third), part(2 * third, n)};
  }
  ScenarioSpec s = cfg.scenario;
  s.contamination_rate = 0.0;
  s.seed = derive_seed(rs, 1);
  ReplicateData d;
  d.train = generate(s);
  s.seed = derive_seed(rs, 2);
  d.tune = generate(s);
  s.seed = derive_seed(rs, 3);
  s.n = cfg.n_test;
  d.test = generate(s);
  return d;
}

/// Standardizes train, tune and test covariates with training means and
/// standard deviations (constant columns are only centered).
inline void standardize_covariates(ReplicateData& d) {
  const auto n = d.train.size();
  const Eigen::RowVectorXd mean = d.train.covariates.colwise().mean();
  Eigen::RowVectorXd sd =
      ((d.train.covariates.rowwise() - mean).array().square().colwise().sum() /
       std::max<double>(1.0, static_cast<double>(n - 1)))
          .sqrt()
          .matrix();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  for (TrialDataset* t : {&d.train, &d.tune, &d.test})
    t->covariates = ((t->covariates.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

/// Applies the configured perturbation at `rate` to train and tune only.
inline void perturb(const ExperimentConfig& cfg, ReplicateData& d, int replicate,
                    std::size_t rate_index) {
  const double rate = cfg.rates[rate_index];
  if (rate == 0.0) return;
  const std::uint64_t ps = derive_seed(replicate_seed(cfg.master_seed, replicate), 4, rate_index);
  if (cfg.perturbation == Perturbation::contamination) {
    d.train = contaminate(d.train, rate, derive_seed(ps, 1));
    d.tune = contaminate(d.tune, rate, derive_seed(ps, 2));
  } else {
    d.train = flip_treatments(d.train, rate, derive_seed(ps, 1));
    d.tune = flip_treatments(d.tune, rate, derive_seed(ps, 2));
  }
}

/// Fits (or looks up) one method on one replicate and scores it on test.
inline ReplicateOutcome run_method(const ExperimentConfig& cfg, const MethodSpec& method,
                                   const ReplicateData& d) {
  ReplicateOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (d.test.any_contaminated())
      throw std::logic_error("test rows carry contamination flags");
    Vector decisions;
    if (method.learner == Learner::oracle) {
      decisions = d.test.require_oracle().optimal;
    } else {
      GridSearchOptions gso;
      gso.criterion = cfg.criterion;
      gso.solver.deadline = detail::deadline_after(cfg.cell_timeout_seconds);
      const auto gs = grid_search(d.train, d.tune, method, gso);
      out.chosen = gs.best;
      decisions = gs.rule.treatments(d.test.covariates);
    }
    const MetricReport m = evaluate_decisions(decisions, d.test);
    out.value = m.value_estimate;
    out.error = m.misclassification;
    out.ok = true;
  } catch (const Timeout&) {
    out.message = "timed out after " + std::to_string(cfg.cell_timeout_seconds) + " s";
  } catch (const std::exception& e) {
    out.message = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto R = static_cast<std::size_t>(cfg.replicates);
  const auto nr = cfg.rates.size(), nm = cfg.methods.size();
  ExperimentResult res;
  res.outcomes.assign(nr, std::vector<std::vector<ReplicateOutcome>>(
                              nm, std::vector<ReplicateOutcome>(R)));

  detail::parallel_for(R * nr, cfg.workers, [&](std::size_t task) {
    const int r = static_cast<int>(task / nr);
    const std::size_t k = task % nr;
    ReplicateData d = replicate_data(cfg, r);
    perturb(cfg, d, r, k);
    if (cfg.standardize) standardize_covariates(d);
    for (std::size_t j = 0; j < nm; ++j)
      res.outcomes[k][j][r] = run_method(cfg, cfg.methods[j], d);
  });

  const std::string label = cfg.scenario_label();
  for (std::size_t k = 0; k < nr; ++k) {
    for (std::size_t j = 0; j < nm; ++j) {
      std::vector<double> vals, errs, secs;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& o = res.outcomes[k][j][r];
        if (!o.ok) {
          res.diagnostics.push_back(cfg.methods[j].name + " rate " +
                                    detail::format_double(cfg.rates[k]) + " replicate " +
                                    std::to_string(r) + ": " + o.message);
          continue;
        }
        vals.push_back(o.value);
        errs.push_back(o.error);
        secs.push_back(o.seconds);
      }
      ResultRow row;
      row.method = cfg.methods[j].name;
      row.scenario = label;
      row.contamination = cfg.rates[k];
      row.mean_value = detail::sample_mean(vals);
      row.sd_value = detail::sample_sd(vals);
      row.mean_error = detail::sample_mean(errs);
      row.sd_error = detail::sample_sd(errs);
      if (cfg.record_runtime) row.mean_runtime = detail::sample_mean(secs);
      row.replicates_ok = static_cast<int>(vals.size());
      row.replicates_total = cfg.replicates;
      res.table.rows.push_back(row);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Rate study (Example 1): excess risk against n for each method and target.

struct RateStudyConfig {
  ExperimentConfig base;  // scenario must be Example 1; criterion is excess risk
  std::vector<Eigen::Index> n_list = {64, 128, 256, 512};
  std::vector<bool> targets = {true, false};  // smooth, nonsmooth
};

struct RateRow {
  std::string method;
  bool smooth = true;
  Eigen::Index n = 0;
  double log2_n = 0.0;
  double mean_excess_risk = 0.0;
  double sd_excess_risk = 0.0;
  double log_excess_risk = 0.0;
  int replicates_ok = 0;
  int replicates_total = 0;
};

struct RateStudyResult {
  std::vector<RateRow> rows;
  /// excess[target][method][n index][replicate] (NaN on failure)
  std::vector<std::vector<std::vector<std::vector<double>>>> excess;
  std::vector<std::string> diagnostics;
};

/// Each replicate draws one sample of the largest n and fits nested prefixes;
/// hyperparameters minimize excess risk on the replicate's n_test sample,
/// which is also where the reported excess risk is measured.
inline RateStudyResult run_rate_study(const RateStudyConfig& rc) {
  const ExperimentConfig& cfg = rc.base;
  if (cfg.scenario.example_id != 1)
    throw std::invalid_argument("the rate study uses Example 1");
  if (rc.n_list.empty()) throw std::invalid_argument("n_list is empty");
  ExperimentConfig check = cfg;
  check.scenario.n = *std::max_element(rc.n_list.begin(), rc.n_list.end());
  check.validate();
  const Eigen::Index n_max = check.scenario.n;
  const auto R = static_cast<std::size_t>(cfg.replicates);
  const auto nt = rc.targets.size(), nm = cfg.methods.size(), nn = rc.n_list.size();

  RateStudyResult res;
  res.excess.assign(nt, std::vector<std::vector<std::vector<double>>>(
                            nm, std::vector<std::vector<double>>(
                                    nn, std::vector<double>(R, std::nan("")))));
  std::vector<std::string> messages(R * nt);

  detail::parallel_for(R * nt, cfg.workers, [&](std::size_t task) {
    const int r = static_cast<int>(task / nt);
    const std::size_t t = task % nt;
    const std::uint64_t rs = replicate_seed(cfg.master_seed, r);
    ScenarioSpec s = cfg.scenario;
    s.smooth = rc.targets[t];
    s.contamination_rate = 0.0;
    s.n = n_max;
    s.seed = derive_seed(rs, 1);
    const TrialDataset full = generate(s);
    s.n = cfg.n_test;
    s.seed = derive_seed(rs, 3);
    const TrialDataset test = generate(s);
    for (std::size_t i = 0; i < nn; ++i) {
      ReplicateData d{full.head(rc.n_list[i]), test, test};
      for (std::size_t j = 0; j < nm; ++j) {
        GridSearchOptions gso;
        gso.criterion = Criterion::excess_risk;
        gso.solver.deadline = detail::deadline_after(cfg.cell_timeout_seconds);
        try {
          if (cfg.methods[j].learner == Learner::oracle) {
            res.excess[t][j][i][r] = 0.0;
            continue;
          }
          const auto gs = grid_search(d.train, d.tune, cfg.methods[j], gso);
          res.excess[t][j][i][r] = gs.tune_metric;
        } catch (const std::exception& e) {
          messages[task] += cfg.methods[j].name + " n=" + std::to_string(rc.n_list[i]) +
                            " replicate " + std::to_string(r) + ": " + e.what() + "\n";
        }
      }
    }
  });
  for (auto& m : messages)
    if (!m.empty()) res.diagnostics.push_back(m);

  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t j = 0; j < nm; ++j)
      for (std::size_t i = 0; i < nn; ++i) {
        std::vector<double> ok;
        for (double x : res.excess[t][j][i])
          if (!std::isnan(x)) ok.push_back(x);
        RateRow row;
        row.method = cfg.methods[j].name;
        row.smooth = rc.targets[t];
        row.n = rc.n_list[i];
        row.log2_n = std::log2(static_cast<double>(row.n));
        row.mean_excess_risk = detail::sample_mean(ok);
        row.sd_excess_risk = detail::sample_sd(ok);
        row.log_excess_risk = std::log(row.mean_excess_risk);
        row.replicates_ok = static_cast<int>(ok.size());
        row.replicates_total = cfg.replicates;
        res.rows.push_back(row);
      }
  return res;
}

}  // namespace owlkit
