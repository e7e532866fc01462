#pragma once

// Learning methods compared in the simulations, and how one hyperparameter
// cell of each is fitted.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "owlkit/irco.hpp"
#include "owlkit/rwl.hpp"

namespace owlkit {

struct TuningGrid {
  std::vector<double> lambdas;
  std::vector<double> bandwidths;
  /// Robustness parameters, strictly descending; empty for convex methods.
  std::vector<double> sigmas;

  void validate() const {
    if (lambdas.empty() || bandwidths.empty())
      throw std::invalid_argument("tuning grid needs at least one lambda and bandwidth");
    auto positive = [](const std::vector<double>& xs) {
      return std::all_of(xs.begin(), xs.end(), [](double x) { return x > 0.0; });
    };
    if (!positive(lambdas) || !positive(bandwidths) || !positive(sigmas))
      throw std::invalid_argument("tuning grid values must be positive");
    for (std::size_t i = 1; i < sigmas.size(); ++i)
      if (!(sigmas[i] < sigmas[i - 1]))
        throw std::invalid_argument("sigmas must be strictly descending");
  }

  /// lambda in 10^{-3..3}, bandwidth in 10^{-1, -0.75, ..., 1}.
  static TuningGrid standard(std::vector<double> sigmas = {}) {
    TuningGrid g;
    for (int k = -3; k <= 3; ++k) g.lambdas.push_back(std::pow(10.0, k));
    for (int k = 0; k <= 8; ++k) g.bandwidths.push_back(std::pow(10.0, -1.0 + 0.25 * k));
    g.sigmas = std::move(sigmas);
    return g;
  }
};

struct TuningCell {
  double lambda = 1.0;
  double bandwidth = 1.0;
  std::optional<double> sigma;
};

enum class Learner { owl, rwl, q_learning, oracle };

inline std::string to_string(Learner l) {
  switch (l) {
    case Learner::owl: return "owl";
    case Learner::rwl: return "rwl";
    case Learner::q_learning: return "q_learning";
    case Learner::oracle: return "oracle";
  }
  return "?";
}

inline Learner parse_learner(const std::string& s) {
  if (s == "owl") return Learner::owl;
  if (s == "rwl") return Learner::rwl;
  if (s == "q_learning" || s == "ql") return Learner::q_learning;
  if (s == "oracle") return Learner::oracle;
  throw std::invalid_argument("unknown learner '" + s + "'");
}

struct MethodSpec {
  std::string name;
  Learner learner = Learner::rwl;
  /// Convex or nonconvex loss fitted directly (ignored when `robust` is set).
  std::string loss = "binomial";
  ParamMap loss_params;
  /// When set, the loss is g o binomial fitted by IRCO with sigma from the grid.
  std::optional<ConcaveFamily> robust;
  KernelFamily kernel = KernelFamily::gaussian;
  double alpha = 0.5;  // Matern smoothness
  /// Subtract the training minimum from rewards (OWL with signed outcomes).
  bool shift_rewards = false;
  TuningGrid grid;

  KernelSpec kernel_for(double bandwidth) const {
    KernelSpec k;
    k.family = kernel;
    k.bandwidth = bandwidth;
    k.alpha = alpha;
    return k;
  }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("method needs a name");
    if (learner == Learner::oracle) return;
    grid.validate();
    if (robust && grid.sigmas.empty())
      throw std::invalid_argument("robust method '" + name + "' needs sigma values");
    if (!robust && !grid.sigmas.empty())
      throw std::invalid_argument("method '" + name + "' has sigmas but no robust family");
    if (!robust && learner != Learner::q_learning) make_loss(loss, loss_params);
    KernelSpec k = kernel_for(grid.bandwidths.front());
    k.validate();
  }
};

/// Training data prepared once per grid search.
struct PreparedTrain {
  TrialDataset data;  // rewards shifted / residual-transformed as the method needs
  Vector residuals;   // RWL only
};

inline PreparedTrain prepare_training(const MethodSpec& method, const TrialDataset& train) {
  PreparedTrain p{train, {}};
  if (method.learner == Learner::rwl) {
    p.residuals = compute_residuals(fit_residual_model(train), train);
    p.data = residual_transform(train, p.residuals);
  } else if (method.learner == Learner::owl && method.shift_rewards) {
    p.data.rewards.array() -= train.rewards.minCoeff();
  }
  return p;
}

/// Ridge-penalized linear Q-learning: R ~ b0 + x'b + a (c0 + x'c), penalty on
/// all but the intercept; the rule is sign(c0 + x'c).
inline FittedRule fit_q_learning(const TrialDataset& train, double lambda) {
  const auto n = train.size(), m = train.dim();
  Matrix Z(n, 2 * m + 2);
  Z.col(0).setOnes();
  Z.middleCols(1, m) = train.covariates;
  Z.col(m + 1) = train.treatments;
  Z.rightCols(m) = train.covariates.array().colwise() * train.treatments.array();
  Matrix A = Z.transpose() * Z / static_cast<double>(n);
  A.diagonal().tail(2 * m + 1).array() += lambda;
  const Vector b = Z.transpose() * train.rewards / static_cast<double>(n);
  const Vector beta = A.ldlt().solve(b);
  FittedRule rule;
  rule.kernel = KernelSpec::linear();
  rule.support = beta.tail(m).transpose();
  rule.coefficients = Vector::Ones(1);
  rule.bias = beta(m + 1);
  return rule;
}

struct CellFit {
  FittedRule rule;
  Vector v;
  double delta = 0.0;
};

/// Fits one grid cell. `gram` is the training Gram matrix for the cell's
/// bandwidth; `warm` optionally starts a robust fit.
inline CellFit fit_cell(const MethodSpec& method, const PreparedTrain& prepared,
                        const TuningCell& cell, const Matrix* gram,
                        const std::optional<std::pair<Vector, double>>& warm = std::nullopt,
                        const LbfgsOptions& solver = {}) {
  if (method.learner == Learner::q_learning) {
    CellFit out{fit_q_learning(prepared.data, cell.lambda), {}, 0.0};
    return out;
  }
  if (method.learner == Learner::oracle)
    throw std::invalid_argument("the oracle method is not fitted");
  const KernelSpec kernel = method.kernel_for(cell.bandwidth);
  if (method.robust) {
    if (!cell.sigma) throw std::invalid_argument("robust cell without sigma");
    IrcoOptions io;
    io.gram = gram;
    io.init = warm;
    io.solver = solver;
    const auto g = ConcaveComponent::from_sigma(*method.robust, *cell.sigma);
    auto [rule, st] = irco_owl(prepared.data, g, kernel, cell.lambda, io);
    return {std::move(rule), std::move(st.v), st.delta};
  }
  const LossSpec loss = make_loss(method.loss, method.loss_params);
  FitOptions fo;
  fo.gram = gram;
  fo.init = warm;
  fo.solver = solver;
  auto r = fit_owl(prepared.data, loss, kernel, cell.lambda, fo);
  Vector v = r.rule.coefficients;
  const double delta = r.rule.bias;
  return {std::move(r.rule), std::move(v), delta};
}

/// The nine methods of the simulation tables (kernel name, -Robust suffix).
inline std::vector<MethodSpec> standard_methods(const std::vector<double>& sigmas) {
  std::vector<MethodSpec> out;
  MethodSpec ql;
  ql.name = "QL";
  ql.learner = Learner::q_learning;
  ql.kernel = KernelFamily::linear;
  ql.grid = TuningGrid::standard();
  ql.grid.bandwidths = {1.0};
  out.push_back(ql);

  MethodSpec wsvm;
  wsvm.name = "WSVM";
  wsvm.learner = Learner::owl;
  wsvm.loss = "hinge";
  wsvm.shift_rewards = true;
  wsvm.grid = TuningGrid::standard();
  out.push_back(wsvm);

  MethodSpec rwl;
  rwl.name = "RWL";
  rwl.learner = Learner::rwl;
  rwl.loss = "smoothed_ramp";
  rwl.grid = TuningGrid::standard();
  out.push_back(rwl);

  struct K {
    const char* name;
    KernelFamily family;
    double alpha;
  };
  const K kernels[] = {{"Exponential", KernelFamily::matern, 0.5},
                       {"Matern 3/2", KernelFamily::matern, 1.5},
                       {"Gaussian", KernelFamily::gaussian, 0.5}};
  for (bool robust : {false, true}) {
    for (const auto& k : kernels) {
      MethodSpec m;
      m.name = std::string(k.name) + (robust ? "-Robust" : "");
      m.learner = Learner::rwl;
      m.kernel = k.family;
      m.alpha = k.alpha;
      m.grid = TuningGrid::standard(robust ? sigmas : std::vector<double>{});
      if (robust) m.robust = ConcaveFamily::tcave;
      out.push_back(m);
    }
  }
  return out;
}

}  // namespace owlkit
