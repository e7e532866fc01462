#pragma once

// Rule metrics on held-out data and grid-search tuning.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "owlkit/methods.hpp"

namespace owlkit {

/// The self-normalized value estimate has no matched rows.
class UndefinedValue : public std::domain_error {
 public:
  UndefinedValue()
      : std::domain_error("value estimate undefined: no test row received its assigned treatment") {}
};

struct MetricReport {
  double value_estimate = 0.0;
  double misclassification = 0.0;
  Eigen::Index n_matched = 0;
};

/// sum I(A = d) R / pi over sum I(A = d) / pi.
inline double value_of_decisions(const Vector& decisions, const TrialDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("value estimate needs a nonempty test set");
  if (decisions.size() != test.size())
    throw std::invalid_argument("decisions do not match the test set");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    if (decisions(i) != test.treatments(i)) continue;
    num += test.rewards(i) / test.propensities(i);
    den += 1.0 / test.propensities(i);
  }
  if (den == 0.0) throw UndefinedValue();
  return num / den;
}

inline double misclassification_of(const Vector& decisions, const TrialDataset& test) {
  const Oracle& o = test.require_oracle();
  if (decisions.size() != test.size())
    throw std::invalid_argument("decisions do not match the test set");
  if (test.size() == 0) return 0.0;
  return (decisions.array() != o.optimal.array()).cast<double>().mean();
}

/// Test average of I(d != d*) |mu_1 - mu_-1|.
inline double excess_risk_of(const Vector& decisions, const TrialDataset& test) {
  const Oracle& o = test.require_oracle();
  if (decisions.size() != test.size())
    throw std::invalid_argument("decisions do not match the test set");
  if (test.size() == 0) return 0.0;
  return ((decisions.array() != o.optimal.array()).cast<double>() * o.gap.array()).mean();
}

inline double value_estimate(const FittedRule& rule, const TrialDataset& test) {
  return value_of_decisions(rule.treatments(test.covariates), test);
}

inline double misclassification(const FittedRule& rule, const TrialDataset& test) {
  test.require_oracle();
  return misclassification_of(rule.treatments(test.covariates), test);
}

inline double empirical_excess_risk(const FittedRule& rule, const TrialDataset& test) {
  test.require_oracle();
  return excess_risk_of(rule.treatments(test.covariates), test);
}

inline MetricReport evaluate_decisions(const Vector& decisions, const TrialDataset& test) {
  MetricReport r;
  r.n_matched = (decisions.array() == test.treatments.array()).count();
  r.value_estimate = value_of_decisions(decisions, test);
  r.misclassification = test.oracle ? misclassification_of(decisions, test)
                                    : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// ---------------------------------------------------------------------------
// Grid search

enum class Criterion { value, excess_risk };

struct GridSearchOptions {
  Criterion criterion = Criterion::value;
  /// Stop scanning sigmas after this many consecutive degradations.
  int sigma_patience = 2;
  LbfgsOptions solver{};
};

struct CellOutcome {
  TuningCell cell;
  bool ok = false;
  /// Tuning value (criterion value) or excess risk, per the criterion.
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct GridSearchResult {
  TuningCell best;
  FittedRule rule;
  double tune_metric = 0.0;
  std::vector<CellOutcome> cells;
};

namespace detail {

/// True if cell a beats cell b on tie: larger sigma, larger lambda, smaller rho.
inline bool tie_preferred(const TuningCell& a, const TuningCell& b) {
  const double sa = a.sigma.value_or(0.0), sb = b.sigma.value_or(0.0);
  if (sa != sb) return sa > sb;
  if (a.lambda != b.lambda) return a.lambda > b.lambda;
  return a.bandwidth < b.bandwidth;
}

inline std::string describe(const TuningCell& c) {
  std::ostringstream os;
  os << "lambda=" << c.lambda << " rho=" << c.bandwidth;
  if (c.sigma) os << " sigma=" << *c.sigma;
  return os.str();
}

}  // namespace detail

/// Fits every cell on `train` and selects by the criterion on `tune`.
/// Sigmas are scanned in the given (descending) order, each cell warm-started
/// from the same (rho, lambda) cell at the previous sigma.
inline GridSearchResult grid_search(const TrialDataset& train, const TrialDataset& tune,
                                    const MethodSpec& method, const TuningGrid& grid,
                                    const GridSearchOptions& opt = {}) {
  if (method.learner == Learner::oracle)
    throw std::invalid_argument("the oracle method has nothing to tune");
  grid.validate();
  if (train.dim() != tune.dim())
    throw std::invalid_argument("train and tune have different covariate dimensions");
  const bool higher_better = opt.criterion == Criterion::value;
  auto metric_of = [&](const Vector& d) {
    return higher_better ? value_of_decisions(d, tune) : excess_risk_of(d, tune);
  };
  auto better = [&](double a, const TuningCell& ca, double b, const TuningCell& cb) {
    if (a != b) return higher_better ? a > b : a < b;
    return detail::tie_preferred(ca, cb);
  };

  const PreparedTrain prepared = prepare_training(method, train);
  GridSearchResult out;
  bool have_best = false;
  auto consider = [&](const TuningCell& cell, CellFit&& fit, const Vector& decisions) {
    CellOutcome oc{cell};
    try {
      oc.metric = metric_of(decisions);
      oc.ok = std::isfinite(oc.metric);
      if (!oc.ok) oc.error = "non-finite tuning metric";
    } catch (const std::exception& e) {
      oc.error = e.what();
    }
    if (oc.ok && (!have_best || better(oc.metric, cell, out.tune_metric, out.best))) {
      have_best = true;
      out.best = cell;
      out.tune_metric = oc.metric;
      out.rule = std::move(fit.rule);
    }
    out.cells.push_back(oc);
    return oc;
  };
  auto failed = [&](const TuningCell& cell, const std::exception& e) {
    CellOutcome oc{cell};
    oc.error = e.what();
    out.cells.push_back(oc);
  };

  if (method.learner == Learner::q_learning) {
    for (double lambda : grid.lambdas) {
      TuningCell cell{lambda, 1.0, std::nullopt};
      try {
        CellFit fit = fit_cell(method, prepared, cell, nullptr);
        const Vector d = fit.rule.treatments(tune.covariates);
        consider(cell, std::move(fit), d);
      } catch (const Timeout&) {
        throw;
      } catch (const std::exception& e) {
        failed(cell, e);
      }
    }
  } else {
    const bool stationary = method.kernel != KernelFamily::linear;
    Matrix d_train, d_tune;
    if (stationary) {
      d_train = pairwise_distances(train.covariates, train.covariates);
      d_tune = pairwise_distances(tune.covariates, train.covariates);
    }
    std::vector<std::optional<double>> sigmas;
    for (double s : grid.sigmas) sigmas.emplace_back(s);
    if (sigmas.empty()) sigmas.emplace_back(std::nullopt);

    const auto nb = grid.bandwidths.size(), nl = grid.lambdas.size();
    std::vector<std::optional<std::pair<Vector, double>>> warm(nb * nl);
    double previous = 0.0;
    int degradations = 0;
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
      bool any = false;
      double level_best = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        const KernelSpec spec = method.kernel_for(grid.bandwidths[j]);
        Matrix gram, cross;
        if (stationary) {
          gram = kernel_from_distances(spec, d_train);
          cross = kernel_from_distances(spec, d_tune);
        } else {
          gram = gram_matrix(spec, train.covariates);
          cross = cross_kernel(spec, train.covariates, tune.covariates);
        }
        for (std::size_t i = 0; i < nl; ++i) {
          TuningCell cell{grid.lambdas[i], grid.bandwidths[j], sigmas[k]};
          try {
            CellFit fit = fit_cell(method, prepared, cell, &gram, warm[j * nl + i], opt.solver);
            const Vector d = fit.rule.scores_from_cross(cross).unaryExpr(
                [](double s) { return double(treatment_sign(s)); });
            if (method.robust) warm[j * nl + i] = std::make_pair(fit.v, fit.delta);
            const CellOutcome oc = consider(cell, std::move(fit), d);
            if (oc.ok && (!any || (higher_better ? oc.metric > level_best
                                                 : oc.metric < level_best))) {
              level_best = oc.metric;
              any = true;
            }
          } catch (const Timeout&) {
            throw;
          } catch (const std::exception& e) {
            failed(cell, e);
          }
        }
      }
      if (k > 0 && any) {
        const bool worse = higher_better ? level_best < previous : level_best > previous;
        degradations = worse ? degradations + 1 : 0;
        if (degradations >= opt.sigma_patience) break;
      }
      if (any) previous = level_best;
    }
  }

  if (!have_best) {
    std::ostringstream os;
    os << "grid search for '" << method.name << "': all " << out.cells.size()
       << " cells failed";
    for (const auto& c : out.cells) os << "\n  " << detail::describe(c.cell) << ": " << c.error;
    throw std::runtime_error(os.str());
  }
  return out;
}

inline GridSearchResult grid_search(const TrialDataset& train, const TrialDataset& tune,
                                    const MethodSpec& method,
                                    const GridSearchOptions& opt = {}) {
  return grid_search(train, tune, method, method.grid, opt);
}

}  // namespace owlkit
