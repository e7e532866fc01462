#pragma once

// Iteratively reweighted convex optimization for CC losses T = g o s.
//
// Concavity of g gives g(z) <= g(z0) + g'(z0)(z - z0), so each weighted
// binomial subproblem majorizes the nonconvex objective at the current
// iterate. Subproblems are warm-started at that iterate and solved by a
// monotone L-BFGS, which makes the true objective nonincreasing.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "owlkit/fit.hpp"
#include "owlkit/rwl.hpp"

namespace owlkit {

struct WeightSummary {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;

  static WeightSummary of(const Vector& w) {
    std::vector<double> s(w.data(), w.data() + w.size());
    std::sort(s.begin(), s.end());
    auto q = [&](double p) {
      if (s.empty()) return 0.0;
      const double pos = p * static_cast<double>(s.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, s.size() - 1);
      return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
    };
    return {q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)};
  }
};

struct IrcoState {
  Vector v;
  double delta = 0.0;
  Vector weights;
  /// True nonconvex objective after each convex solve (index 0: the start).
  std::vector<double> objective_trace;
  std::vector<WeightSummary> weight_trace;
  /// Number of convex solves performed, including the initialization.
  int iteration = 0;
  bool converged = false;
};

struct IrcoOptions {
  int max_iter = 50;
  double tol = 1e-5;
  /// Start here instead of the unweighted binomial solution.
  std::optional<std::pair<Vector, double>> init;
  const Matrix* gram = nullptr;
  LbfgsOptions solver{};
  double gradient_tolerance_per_obs = 1e-6;
};

/// Thrown when an inner convex solve fails; carries the outer iteration.
class IrcoError : public std::runtime_error {
 public:
  IrcoError(int iteration, const std::string& what)
      : std::runtime_error("IRCO iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// w_i = g'(s(a_i (f_i + delta))).
inline Vector update_weights_owl(const ConcaveComponent& g, const Vector& scores,
                                 const Vector& treatments) {
  if (scores.size() != treatments.size())
    throw std::invalid_argument("scores and treatments differ in length");
  Vector w(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores(i))) throw std::invalid_argument("non-finite score");
    w(i) = g.supergradient(binomial_loss(treatments(i) * scores(i)));
  }
  return w;
}

inline std::pair<FittedRule, IrcoState> irco_owl(const TrialDataset& data,
                                                 const ConcaveComponent& g,
                                                 const KernelSpec& kernel,
                                                 double lambda,
                                                 const IrcoOptions& opt = {}) {
  if (opt.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  std::optional<Matrix> own_gram;
  const Matrix* gram = opt.gram;
  if (!gram) {
    own_gram = gram_matrix(kernel, data.covariates);
    gram = &*own_gram;
  }
  const auto n = data.size();
  const LossSpec s = make_builtin_loss("binomial");
  const LossSpec cc = compose_cc(g);
  const MarginProblem truth = detail::owl_problem(data, cc, *gram, lambda, nullptr);

  FitOptions fo;
  fo.gram = gram;
  fo.solver = opt.solver;
  fo.gradient_tolerance_per_obs = opt.gradient_tolerance_per_obs;

  IrcoState st;
  FittedRule rule;
  auto solve = [&](int it) {
    try {
      return fit_owl(data, s, kernel, lambda, fo);
    } catch (const Timeout&) {
      throw;
    } catch (const std::exception& e) {
      throw IrcoError(it, e.what());
    }
  };

  if (opt.init) {
    if (opt.init->first.size() != n) throw std::invalid_argument("init has wrong length");
    st.v = opt.init->first;
    st.delta = opt.init->second;
    rule.support = data.covariates;
    rule.kernel = kernel;
  } else {
    auto r = solve(1);
    st.iteration = 1;
    st.v = r.rule.coefficients;
    st.delta = r.rule.bias;
    rule = std::move(r.rule);
  }
  st.weights = Vector::Ones(n);
  st.objective_trace.push_back(truth.value(st.v, st.delta));
  st.weight_trace.push_back(WeightSummary::of(st.weights));

  for (int outer = 0; outer < opt.max_iter; ++outer) {
    const Vector scores = ((*gram) * st.v).array() + st.delta;
    st.weights = update_weights_owl(g, scores, data.treatments);
    fo.case_weights = st.weights;
    fo.init = std::make_pair(st.v, st.delta);
    auto r = solve(st.iteration + 1);
    ++st.iteration;
    const double change = std::max(
        (r.rule.coefficients - st.v).lpNorm<Eigen::Infinity>(),
        std::abs(r.rule.bias - st.delta));
    st.v = r.rule.coefficients;
    st.delta = r.rule.bias;
    st.objective_trace.push_back(truth.value(st.v, st.delta));
    st.weight_trace.push_back(WeightSummary::of(st.weights));
    if (change <= opt.tol) {
      st.converged = true;
      break;
    }
  }
  rule.coefficients = st.v;
  rule.bias = st.delta;
  return {std::move(rule), std::move(st)};
}

/// IRCO on residual-transformed data; the trace is the true RWL objective.
inline std::pair<FittedRule, IrcoState> irco_rwl(const TrialDataset& data,
                                                 const Vector& residuals,
                                                 const ConcaveComponent& g,
                                                 const KernelSpec& kernel,
                                                 double lambda,
                                                 const IrcoOptions& opt = {}) {
  return irco_owl(residual_transform(data, residuals), g, kernel, lambda, opt);
}

/// CSV: iteration, objective, weight quantiles.
inline void write_irco_trace(const IrcoState& st, std::ostream& out) {
  out << "iteration,objective,w_min,w_q25,w_median,w_q75,w_max\n";
  const int first = st.iteration - static_cast<int>(st.objective_trace.size()) + 1;
  for (std::size_t j = 0; j < st.objective_trace.size(); ++j) {
    const auto& w = st.weight_trace[j];
    out << first + static_cast<int>(j) << ',' << detail::format_double(st.objective_trace[j])
        << ',' << w.min << ',' << w.q25 << ',' << w.median << ',' << w.q75 << ','
        << w.max << '\n';
  }
}

}  // namespace owlkit
