#pragma once

// Matern, Gaussian and linear kernels with Gram / cross-kernel assembly.

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace owlkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelFamily { matern, gaussian, linear };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::matern: return "matern";
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::linear: return "linear";
  }
  return "?";
}

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "matern") return KernelFamily::matern;
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "linear") return KernelFamily::linear;
  throw std::invalid_argument("unknown kernel family '" + s + "'");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth = 1.0;  // rho
  double alpha = 1.5;      // Matern smoothness

  static KernelSpec matern(double alpha, double rho) {
    return {KernelFamily::matern, rho, alpha};
  }
  static KernelSpec exponential(double rho) { return matern(0.5, rho); }
  static KernelSpec gaussian(double rho) { return {KernelFamily::gaussian, rho, 0.0}; }
  static KernelSpec linear() { return {KernelFamily::linear, 1.0, 0.0}; }

  void validate() const {
    if (family == KernelFamily::linear) return;
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
      throw std::invalid_argument("kernel bandwidth must be positive");
    if (family == KernelFamily::matern && !(alpha > 0.0))
      throw std::invalid_argument("Matern smoothness must be positive");
  }

  bool is_stationary() const { return family != KernelFamily::linear; }

  bool operator==(const KernelSpec&) const = default;
};

/// General Matern correlation at scaled distance x = sqrt(2 alpha) d / rho,
/// 2^(1-alpha)/Gamma(alpha) x^alpha K_alpha(x), evaluated in log space.
inline double matern_bessel(double alpha, double x) {
  if (x <= 0.0) return 1.0;
  const double k = std::cyl_bessel_k(alpha, x);
  if (!std::isfinite(k)) return 1.0;  // K overflows only as x -> 0
  if (k <= 0.0) return 0.0;
  const double logv = (1.0 - alpha) * std::log(2.0) - std::lgamma(alpha) +
                      alpha * std::log(x) + std::log(k);
  return std::min(1.0, std::exp(logv));
}

/// Kernel value as a function of Euclidean distance (stationary families).
inline double kernel_from_distance(const KernelSpec& spec, double d) {
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-d * d / (2.0 * spec.bandwidth * spec.bandwidth));
    case KernelFamily::matern: {
      const double a = spec.alpha;
      const double x = std::sqrt(2.0 * a) * d / spec.bandwidth;
      if (a == 0.5) return std::exp(-x);
      if (a == 1.5) return (1.0 + x) * std::exp(-x);
      if (a == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
      return matern_bessel(a, x);
    }
    case KernelFamily::linear:
      break;
  }
  throw std::logic_error("linear kernel is not a function of distance");
}

template <class A, class B>
double kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<A>& x,
                   const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  if (spec.family == KernelFamily::linear) return x.dot(y);
  return kernel_from_distance(spec, (x - y).norm());
}

/// Pairwise Euclidean distances between rows of A (m x d) and rows of B (n x d).
inline Matrix pairwise_distances(const Matrix& A, const Matrix& B) {
  if (A.cols() != B.cols())
    throw std::invalid_argument("pairwise_distances: dimension mismatch");
  const Vector a2 = A.rowwise().squaredNorm();
  const Vector b2 = B.rowwise().squaredNorm();
  Matrix D = -2.0 * A * B.transpose();
  D.colwise() += a2;
  D.rowwise() += b2.transpose();
  // Exact differences for small problems keep d(x, x) = 0 bitwise.
  for (Eigen::Index i = 0; i < D.rows(); ++i)
    for (Eigen::Index j = 0; j < D.cols(); ++j)
      D(i, j) = D(i, j) < 1e-10 * (a2(i) + b2(j) + 1.0)
                    ? (A.row(i) - B.row(j)).norm()
                    : std::sqrt(D(i, j));
  return D;
}

/// Applies a stationary kernel elementwise to a distance matrix.
inline Matrix kernel_from_distances(const KernelSpec& spec, const Matrix& D) {
  spec.validate();
  return D.unaryExpr([&](double d) { return kernel_from_distance(spec, d); });
}

/// m x n matrix with entry (i, j) = k(x_new_i, x_train_j).
inline Matrix cross_kernel(const KernelSpec& spec, const Matrix& X_train,
                           const Matrix& X_new) {
  spec.validate();
  if (X_train.cols() != X_new.cols())
    throw std::invalid_argument("cross_kernel: dimension mismatch");
  if (spec.family == KernelFamily::linear) return X_new * X_train.transpose();
  return kernel_from_distances(spec, pairwise_distances(X_new, X_train));
}

inline Matrix gram_matrix(const KernelSpec& spec, const Matrix& X) {
  if (X.rows() < 1) throw std::invalid_argument("gram_matrix requires n >= 1");
  Matrix K = cross_kernel(spec, X, X);
  // Enforce exact symmetry and unit diagonal.
  K = 0.5 * (K + K.transpose()).eval();
  if (spec.is_stationary()) K.diagonal().setOnes();
  return K;
}

}  // namespace owlkit
