#pragma once

// Surrogate loss catalog: convex margin losses, bounded nonconvex losses and
// the concave-convex (CC) family T = g o s built on the binomial loss s.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace owlkit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Margins are clamped to this magnitude before any exponential is taken.
inline constexpr double kMarginClamp = 700.0;

using ParamMap = std::map<std::string, double>;

namespace detail {

inline double clamp_margin(double p) {
  return std::clamp(p, -kMarginClamp, kMarginClamp);
}

/// Set to false to silence range warnings (tests, tuning loops).
inline bool& warnings_enabled() {
  static bool enabled = true;
  return enabled;
}

/// Each distinct message is printed once per process.
inline void warn(const std::string& msg) {
  static std::mutex mu;
  static std::set<std::string> seen;
  if (!warnings_enabled()) return;
  std::lock_guard<std::mutex> lock(mu);
  if (seen.insert(msg).second) std::clog << "owlkit warning: " << msg << '\n';
}

inline double require_param(const ParamMap& params, const std::string& key,
                            const std::string& loss) {
  auto it = params.find(key);
  if (it == params.end())
    throw std::invalid_argument("loss '" + loss + "' requires parameter '" +
                                key + "'");
  return it->second;
}

}  // namespace detail

/// Binomial (logistic) loss s(p) = log(1 + exp(-p)), overflow-safe.
inline double binomial_loss(double p) {
  p = detail::clamp_margin(p);
  return p >= 0.0 ? std::log1p(std::exp(-p)) : -p + std::log1p(std::exp(p));
}

/// s'(p) = -1 / (1 + exp(p)).
inline double binomial_loss_derivative(double p) {
  p = detail::clamp_margin(p);
  if (p >= 0.0) {
    const double e = std::exp(-p);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(p));
}

/// A margin-based surrogate loss with its analytic metadata.
///
/// Immutable after construction; the function objects are pure.
struct LossSpec {
  std::string name;
  std::function<double(double)> evaluate;
  /// One-sided derivative (right derivative) at kinks.
  std::function<double(double)> derivative;
  double value_at_zero = 0.0;
  double lipschitz = kInf;
  double bound = kInf;
  bool is_convex = false;
  double limit_neg = kInf;  // T(-inf)
  double limit_pos = 0.0;   // T(+inf)
  ParamMap params;
  std::vector<double> kinks;

  double operator()(double p) const { return evaluate(p); }
  bool is_bounded() const { return std::isfinite(bound); }
};

/// Names accepted by make_builtin_loss.
inline const std::vector<std::string>& builtin_loss_names() {
  static const std::vector<std::string> names = {
      "exponential", "truncated_quadratic", "hinge",    "dwd",
      "arcx4",       "sigmoid",             "binomial", "smoothed_ramp"};
  return names;
}

inline LossSpec make_builtin_loss(const std::string& name,
                                  const ParamMap& params = {}) {
  LossSpec loss;
  loss.name = name;
  loss.params = params;

  if (name == "exponential") {
    loss.evaluate = [](double p) { return std::exp(-detail::clamp_margin(p)); };
    loss.derivative = [](double p) {
      return -std::exp(-detail::clamp_margin(p));
    };
    loss.is_convex = true;
  } else if (name == "truncated_quadratic") {
    loss.evaluate = [](double p) {
      const double h = std::max(1.0 - p, 0.0);
      return h * h;
    };
    loss.derivative = [](double p) { return -2.0 * std::max(1.0 - p, 0.0); };
    loss.is_convex = true;
    loss.kinks = {1.0};
  } else if (name == "hinge") {
    loss.evaluate = [](double p) { return std::max(1.0 - p, 0.0); };
    loss.derivative = [](double p) { return p < 1.0 ? -1.0 : 0.0; };
    loss.lipschitz = 1.0;
    loss.is_convex = true;
    loss.kinks = {1.0};
  } else if (name == "dwd") {
    const double gamma = detail::require_param(params, "gamma", name);
    if (!(gamma > 0.0)) throw std::invalid_argument("dwd requires gamma > 0");
    loss.evaluate = [gamma](double p) {
      return p >= gamma ? 1.0 / p : (2.0 - p / gamma) / gamma;
    };
    loss.derivative = [gamma](double p) {
      return p >= gamma ? -1.0 / (p * p) : -1.0 / (gamma * gamma);
    };
    loss.lipschitz = 1.0 / (gamma * gamma);
    loss.is_convex = true;
    loss.kinks = {gamma};
  } else if (name == "arcx4") {
    const double k = detail::require_param(params, "k", name);
    if (!(k > 1.0)) throw std::invalid_argument("arcx4 requires k > 1");
    loss.evaluate = [k](double p) { return std::pow(std::abs(1.0 - p), k); };
    loss.derivative = [k](double p) {
      const double u = 1.0 - p;
      const double mag = k * std::pow(std::abs(u), k - 1.0);
      return u > 0.0 ? -mag : mag;
    };
    loss.is_convex = true;
    loss.limit_pos = kInf;
    loss.kinks = {1.0};
  } else if (name == "sigmoid") {
    const double k = detail::require_param(params, "k", name);
    if (!(k > 0.0)) throw std::invalid_argument("sigmoid requires k > 0");
    loss.evaluate = [k](double p) { return 1.0 - std::tanh(k * p); };
    loss.derivative = [k](double p) {
      const double t = std::tanh(k * p);
      return -k * (1.0 - t * t);
    };
    loss.lipschitz = k;
    loss.bound = 2.0;
    loss.limit_neg = 2.0;
  } else if (name == "binomial") {
    loss.evaluate = binomial_loss;
    loss.derivative = binomial_loss_derivative;
    loss.lipschitz = 1.0;
    loss.is_convex = true;
  } else if (name == "smoothed_ramp") {
    loss.evaluate = [](double p) {
      if (p >= 1.0) return 0.0;
      if (p >= 0.0) return (1.0 - p) * (1.0 - p);
      if (p >= -1.0) return 2.0 - (1.0 + p) * (1.0 + p);
      return 2.0;
    };
    loss.derivative = [](double p) {
      if (p >= 1.0) return 0.0;
      if (p >= 0.0) return -2.0 * (1.0 - p);
      if (p >= -1.0) return -2.0 * (1.0 + p);
      return 0.0;
    };
    loss.lipschitz = 2.0;
    loss.bound = 2.0;
    loss.limit_neg = 2.0;
    loss.kinks = {-1.0, 0.0, 1.0};
  } else {
    throw std::invalid_argument("unknown loss '" + name + "'");
  }
  loss.value_at_zero = loss.evaluate(0.0);
  return loss;
}

// ---------------------------------------------------------------------------
// Concave components for the CC family.

enum class ConcaveFamily { acave, bcave, ccave, tcave };

inline std::string to_string(ConcaveFamily f) {
  switch (f) {
    case ConcaveFamily::acave: return "acave";
    case ConcaveFamily::bcave: return "bcave";
    case ConcaveFamily::ccave: return "ccave";
    case ConcaveFamily::tcave: return "tcave";
  }
  return "?";
}

inline ConcaveFamily parse_concave_family(const std::string& name) {
  if (name == "acave") return ConcaveFamily::acave;
  if (name == "bcave") return ConcaveFamily::bcave;
  if (name == "ccave") return ConcaveFamily::ccave;
  if (name == "tcave") return ConcaveFamily::tcave;
  throw std::invalid_argument("unknown concave component '" + name + "'");
}

/// Nondecreasing concave g on [0, inf) with g(0) = 0, parameterized by the
/// robustness parameter sigma^2.
class ConcaveComponent {
 public:
  ConcaveComponent(ConcaveFamily family, double sigma_sq)
      : family_(family), sigma_sq_(sigma_sq), sigma_(std::sqrt(sigma_sq)) {
    if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq))
      throw std::invalid_argument("concave component requires sigma_sq > 0");
  }

  static ConcaveComponent from_sigma(ConcaveFamily family, double sigma) {
    return ConcaveComponent(family, sigma * sigma);
  }

  ConcaveFamily family() const { return family_; }
  std::string name() const { return to_string(family_); }
  double sigma_sq() const { return sigma_sq_; }
  double sigma() const { return sigma_; }

  double evaluate(double z) const {
    switch (family_) {
      case ConcaveFamily::acave:
        if (z > sigma_sq_ * M_PI * M_PI / 2.0) return 1.0;
        return 0.5 * (1.0 - std::cos(std::sqrt(2.0 * z) / sigma_));
      case ConcaveFamily::bcave: {
        if (z > sigma_sq_ / 2.0) return 1.0;
        const double u = 1.0 - 2.0 * z / sigma_sq_;
        return 1.0 - u * u * u;
      }
      case ConcaveFamily::ccave:
        return -std::expm1(-z / sigma_sq_);
      case ConcaveFamily::tcave:
        return std::min(sigma_, z);
    }
    return 0.0;
  }

  /// Derivative, or the right derivative at kinks (0 for tcave at z = sigma).
  double supergradient(double z) const {
    if (z < 0.0) throw std::domain_error("supergradient requires z >= 0");
    switch (family_) {
      case ConcaveFamily::acave: {
        if (z >= sigma_sq_ * M_PI * M_PI / 2.0) return 0.0;
        const double u = std::sqrt(2.0 * z) / sigma_;
        // g'(z) = sin(u) / (2 sigma sqrt(2z)) = sinc(u) / (2 sigma^2)
        const double sinc =
            u < 1e-4 ? 1.0 - u * u / 6.0 + u * u * u * u / 120.0
                     : std::sin(u) / u;
        return sinc / (2.0 * sigma_sq_);
      }
      case ConcaveFamily::bcave: {
        if (z >= sigma_sq_ / 2.0) return 0.0;
        const double u = 1.0 - 2.0 * z / sigma_sq_;
        return 6.0 / sigma_sq_ * u * u;
      }
      case ConcaveFamily::ccave:
        return std::exp(-z / sigma_sq_) / sigma_sq_;
      case ConcaveFamily::tcave:
        return z < sigma_ ? 1.0 : 0.0;
    }
    return 0.0;
  }

  /// sup g' = Lipschitz constant C.
  double lipschitz() const {
    switch (family_) {
      case ConcaveFamily::acave: return 1.0 / (2.0 * sigma_sq_);
      case ConcaveFamily::bcave: return 6.0 / sigma_sq_;
      case ConcaveFamily::ccave: return 1.0 / sigma_sq_;
      case ConcaveFamily::tcave: return 1.0;
    }
    return kInf;
  }

  /// sup g = g(inf).
  double supremum() const {
    return family_ == ConcaveFamily::tcave ? sigma_ : 1.0;
  }

  /// Interval of sigma^2 for which the composite loss is known to be
  /// policy-calibrated with a linear Psi-transform.
  std::pair<double, double> valid_range() const {
    const double l2 = std::log(2.0);
    switch (family_) {
      case ConcaveFamily::acave:
        return {2.0 * l2 / (M_PI * M_PI), 4.0 * l2 / (M_PI * M_PI)};
      case ConcaveFamily::bcave:
        return {2.0 * l2, 2.0 * l2 / (1.0 - std::pow(2.0, -1.0 / 3.0))};
      case ConcaveFamily::ccave:
        return {0.0, 1.0};
      case ConcaveFamily::tcave:
        return {l2 * l2, 4.0 * l2 * l2};
    }
    return {0.0, kInf};
  }

  bool in_valid_range() const {
    const auto [lo, hi] = valid_range();
    switch (family_) {
      case ConcaveFamily::acave:
      case ConcaveFamily::ccave:
        return sigma_sq_ > lo && sigma_sq_ < hi;
      case ConcaveFamily::bcave:
        return sigma_sq_ > lo && sigma_sq_ <= hi;
      case ConcaveFamily::tcave:
        return sigma_sq_ >= lo && sigma_sq_ <= hi;
    }
    return false;
  }

 private:
  ConcaveFamily family_;
  double sigma_sq_;
  double sigma_;
};

inline double supergradient_weight(const ConcaveComponent& g, double z) {
  return g.supergradient(z);
}

/// T = g o s with s the binomial loss.
inline LossSpec compose_cc(const ConcaveComponent& g) {
  if (!g.in_valid_range()) {
    const auto [lo, hi] = g.valid_range();
    detail::warn("cc:" + g.name() + " sigma^2 = " + std::to_string(g.sigma_sq()) +
                 " outside calibrated range [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]");
  }
  LossSpec loss;
  loss.name = "cc:" + g.name();
  loss.evaluate = [g](double p) { return g.evaluate(binomial_loss(p)); };
  loss.derivative = [g](double p) {
    return g.supergradient(binomial_loss(p)) * binomial_loss_derivative(p);
  };
  loss.value_at_zero = g.evaluate(std::log(2.0));
  loss.lipschitz = g.lipschitz();
  loss.bound = g.supremum();
  loss.is_convex = false;
  loss.limit_neg = g.supremum();
  loss.limit_pos = 0.0;
  loss.params = {{"sigma_sq", g.sigma_sq()}};
  return loss;
}

/// Resolves "binomial", "hinge", ..., or "cc:<family>" (needs sigma_sq or sigma).
inline LossSpec make_loss(const std::string& name, const ParamMap& params = {}) {
  if (name.rfind("cc:", 0) == 0) {
    const auto family = parse_concave_family(name.substr(3));
    double sigma_sq;
    if (auto it = params.find("sigma_sq"); it != params.end())
      sigma_sq = it->second;
    else if (auto jt = params.find("sigma"); jt != params.end())
      sigma_sq = jt->second * jt->second;
    else
      throw std::invalid_argument("loss '" + name +
                                  "' requires sigma_sq or sigma");
    return compose_cc(ConcaveComponent(family, sigma_sq));
  }
  return make_builtin_loss(name, params);
}

}  // namespace owlkit
