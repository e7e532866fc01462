#pragma once

// Kernel outcome weighted learning in representer coordinates:
//   min_{v, delta} (1/n) sum_i c_i T(y_i (K_i v + delta)) + (lambda/2) v' K v
// with c_i = w_i r_i / pi_i and y_i = a_i. The bias delta is unpenalized.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "owlkit/dataset.hpp"
#include "owlkit/kernels.hpp"
#include "owlkit/lbfgs.hpp"
#include "owlkit/losses.hpp"

namespace owlkit {

/// A kernel expansion f(x) = sum_j v_j k(x, x_j) plus bias.
struct FittedRule {
  Matrix support;
  Vector coefficients;
  double bias = 0.0;
  KernelSpec kernel;

  /// Scores for every row of X.
  Vector scores(const Matrix& X) const {
    if (X.cols() != support.cols())
      throw std::invalid_argument("decide: dimension mismatch");
    if (coefficients.size() == 0) return Vector::Constant(X.rows(), bias);
    return (cross_kernel(kernel, support, X) * coefficients).array() + bias;
  }

  /// Scores from a precomputed cross kernel (rows: new points).
  Vector scores_from_cross(const Matrix& cross) const {
    return (cross * coefficients).array() + bias;
  }

  Vector treatments(const Matrix& X) const {
    return scores(X).unaryExpr([](double s) { return double(treatment_sign(s)); });
  }
};

struct Decision {
  double score;
  int treatment;
};

template <class Derived>
Decision decide(const FittedRule& rule, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != rule.support.cols())
    throw std::invalid_argument("decide: dimension mismatch");
  double s = rule.bias;
  for (Eigen::Index j = 0; j < rule.support.rows(); ++j)
    s += rule.coefficients(j) * kernel_eval(rule.kernel, rule.support.row(j).transpose(), x);
  return {s, treatment_sign(s)};
}

/// The weighted margin problem shared by the OWL and RWL objectives.
struct MarginProblem {
  const Matrix* gram = nullptr;
  Vector weights;  // c_i >= 0
  Vector labels;   // +-1
  const LossSpec* loss = nullptr;
  double lambda = 1.0;

  Eigen::Index size() const { return labels.size(); }

  double value(const Vector& v, double delta) const {
    const Vector Kv = (*gram) * v;
    return value_with(Kv, v, delta);
  }

  double value_with(const Vector& Kv, const Vector& v, double delta) const {
    const auto n = size();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) == 0.0) continue;
      sum += weights(i) * loss->evaluate(labels(i) * (Kv(i) + delta));
    }
    return sum / static_cast<double>(n) + 0.5 * lambda * v.dot(Kv);
  }

  /// Value and gradient; grad has size n + 1 with d/d(delta) last.
  double value_and_gradient(const Vector& x, Vector& grad) const {
    const auto n = size();
    const auto v = x.head(n);
    const double delta = x(n);
    const Vector Kv = (*gram) * v;
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector u(n);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) == 0.0) {
        u(i) = 0.0;
        continue;
      }
      const double m = labels(i) * (Kv(i) + delta);
      sum += weights(i) * loss->evaluate(m);
      u(i) = inv_n * weights(i) * loss->derivative(m) * labels(i);
    }
    grad.resize(n + 1);
    grad.head(n) = (*gram) * (u + lambda * v);
    grad(n) = u.sum();
    return sum * inv_n + 0.5 * lambda * v.dot(Kv);
  }
};

namespace detail {

inline void check_problem_shapes(const TrialDataset& data, const Matrix& gram,
                                 double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (gram.rows() != data.size() || gram.cols() != data.size())
    throw std::invalid_argument("gram matrix does not match dataset size");
}

inline MarginProblem owl_problem(const TrialDataset& data, const LossSpec& loss,
                                 const Matrix& gram, double lambda,
                                 const Vector* case_weights) {
  check_problem_shapes(data, gram, lambda);
  data.require_nonnegative_rewards();
  MarginProblem p;
  p.gram = &gram;
  p.loss = &loss;
  p.lambda = lambda;
  p.labels = data.treatments;
  p.weights = data.rewards.cwiseQuotient(data.propensities);
  if (case_weights) {
    if (case_weights->size() != data.size())
      throw std::invalid_argument("case weights do not match dataset size");
    if ((case_weights->array() < 0.0).any())
      throw std::invalid_argument("case weights must be nonnegative");
    p.weights = p.weights.cwiseProduct(*case_weights);
  }
  return p;
}

}  // namespace detail

inline double owl_objective(const Vector& v, double delta, const TrialDataset& data,
                            const LossSpec& loss, const Matrix& gram, double lambda,
                            const Vector* case_weights = nullptr) {
  return detail::owl_problem(data, loss, gram, lambda, case_weights).value(v, delta);
}

/// Gradient of owl_objective with respect to (v, delta).
inline std::pair<Vector, double> owl_gradient(const Vector& v, double delta,
                                              const TrialDataset& data,
                                              const LossSpec& loss,
                                              const Matrix& gram, double lambda,
                                              const Vector* case_weights = nullptr) {
  const auto p = detail::owl_problem(data, loss, gram, lambda, case_weights);
  Vector x(v.size() + 1);
  x << v, delta;
  Vector g;
  p.value_and_gradient(x, g);
  return {g.head(v.size()), g(v.size())};
}

struct FitOptions {
  /// Warm start (v, delta); zeros when absent.
  std::optional<std::pair<Vector, double>> init;
  /// Extra per-observation weights multiplying r_i / pi_i.
  std::optional<Vector> case_weights;
  /// Precomputed Gram matrix of the training covariates.
  const Matrix* gram = nullptr;
  LbfgsOptions solver{};
  /// Gradient tolerance per observation; the solver stops at tol * n.
  double gradient_tolerance_per_obs = 1e-6;
};

struct FitResult {
  FittedRule rule;
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
};

/// Minimizes a margin problem with L-BFGS from the given start.
inline FitResult solve_margin_problem(const MarginProblem& problem,
                                      const TrialDataset& data,
                                      const KernelSpec& kernel,
                                      const FitOptions& opt) {
  const auto n = problem.size();
  Vector x0 = Vector::Zero(n + 1);
  if (opt.init) {
    if (opt.init->first.size() != n)
      throw std::invalid_argument("warm start has the wrong length");
    x0.head(n) = opt.init->first;
    x0(n) = opt.init->second;
  }
  LbfgsOptions solver = opt.solver;
  solver.gradient_tolerance = opt.gradient_tolerance_per_obs * static_cast<double>(n);
  Vector g0;
  const double f0 = problem.value_and_gradient(x0, g0);
  auto fg = [&](const Vector& x, Vector& g) { return problem.value_and_gradient(x, g); };
  const LbfgsResult r = lbfgs_minimize(fg, x0, solver);

  FitResult out;
  out.rule.support = data.covariates;
  out.rule.coefficients = r.x.head(n);
  out.rule.bias = r.x(n);
  out.rule.kernel = kernel;
  out.objective = r.value;
  out.initial_objective = f0;
  out.gradient_norm = r.gradient_norm();
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.status = r.status;
  return out;
}

/// OWL fit for any differentiable loss (local solution when nonconvex).
inline FitResult fit_owl(const TrialDataset& data, const LossSpec& loss,
                         const KernelSpec& kernel, double lambda,
                         const FitOptions& opt = {}) {
  std::optional<Matrix> own_gram;
  const Matrix* gram = opt.gram;
  if (!gram) {
    own_gram = gram_matrix(kernel, data.covariates);
    gram = &*own_gram;
  }
  const auto problem = detail::owl_problem(
      data, loss, *gram, lambda, opt.case_weights ? &*opt.case_weights : nullptr);
  return solve_margin_problem(problem, data, kernel, opt);
}

inline FitResult fit_convex_owl(const TrialDataset& data, const LossSpec& loss,
                                const KernelSpec& kernel, double lambda,
                                const FitOptions& opt = {}) {
  if (!loss.is_convex)
    throw std::invalid_argument("fit_convex_owl requires a convex loss; '" +
                                loss.name + "' is not (use irco_owl for CC losses)");
  return fit_owl(data, loss, kernel, lambda, opt);
}

}  // namespace owlkit
