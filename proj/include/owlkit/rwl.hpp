#pragma once

// Residual weighted learning. Rewards are replaced by residuals of a weighted
// linear model; the sign-split objective is the OWL objective on the
// transformed data (|r_hat_i|, t_i a_i) with t_i = +1 iff r_hat_i >= 0.

#include <stdexcept>

#include <Eigen/QR>

#include "owlkit/fit.hpp"

namespace owlkit {

struct ResidualModel {
  double intercept = 0.0;
  Vector slopes;

  Vector predict(const Matrix& X) const {
    if (X.cols() != slopes.size())
      throw std::invalid_argument("residual model: dimension mismatch");
    return (X * slopes).array() + intercept;
  }
};

/// Weighted least squares of r on (1, x) with weights 1 / (2 pi_i).
/// Rank-deficient designs get the minimum-norm solution and a warning.
inline ResidualModel fit_residual_model(const TrialDataset& data) {
  const auto n = data.size(), m = data.dim();
  Matrix design(n, m + 1);
  design.col(0).setOnes();
  design.rightCols(m) = data.covariates;
  const Vector sw = (0.5 * data.propensities.cwiseInverse()).cwiseSqrt();
  const Matrix A = sw.asDiagonal() * design;
  const Vector b = sw.cwiseProduct(data.rewards);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
  if (cod.rank() < m + 1)
    detail::warn("residual model design is rank deficient (rank " +
                 std::to_string(cod.rank()) + " < " + std::to_string(m + 1) +
                 "); using the minimum-norm solution");
  const Vector beta = cod.solve(b);
  return {beta(0), beta.tail(m)};
}

inline Vector compute_residuals(const ResidualModel& model, const TrialDataset& data) {
  return data.rewards - model.predict(data.covariates);
}

/// The OWL-equivalent dataset (rewards |r_hat|, treatments t a).
inline TrialDataset residual_transform(const TrialDataset& data, const Vector& residuals) {
  if (residuals.size() != data.size())
    throw std::invalid_argument("residuals do not match dataset size");
  TrialDataset t = data;
  t.rewards = residuals.cwiseAbs();
  for (Eigen::Index i = 0; i < data.size(); ++i)
    if (residuals(i) < 0.0) t.treatments(i) = -data.treatments(i);
  return t;
}

inline double rwl_objective(const Vector& v, double delta, const TrialDataset& data,
                            const Vector& residuals, const LossSpec& loss,
                            const Matrix& gram, double lambda,
                            const Vector* case_weights = nullptr) {
  return owl_objective(v, delta, residual_transform(data, residuals), loss, gram,
                       lambda, case_weights);
}

inline std::pair<Vector, double> rwl_gradient(const Vector& v, double delta,
                                              const TrialDataset& data,
                                              const Vector& residuals,
                                              const LossSpec& loss, const Matrix& gram,
                                              double lambda,
                                              const Vector* case_weights = nullptr) {
  return owl_gradient(v, delta, residual_transform(data, residuals), loss, gram,
                      lambda, case_weights);
}

/// RWL fit with precomputed residuals.
inline FitResult fit_convex_rwl(const TrialDataset& data, const Vector& residuals,
                                const LossSpec& loss, const KernelSpec& kernel,
                                double lambda, const FitOptions& opt = {}) {
  return fit_convex_owl(residual_transform(data, residuals), loss, kernel, lambda, opt);
}

/// RWL fit that first fits the residual model on `data`.
inline FitResult fit_convex_rwl(const TrialDataset& data, const LossSpec& loss,
                                const KernelSpec& kernel, double lambda,
                                const FitOptions& opt = {}) {
  const auto model = fit_residual_model(data);
  return fit_convex_rwl(data, compute_residuals(model, data), loss, kernel, lambda, opt);
}

}  // namespace owlkit
