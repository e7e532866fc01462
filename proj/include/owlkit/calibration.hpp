#pragma once

// Conditional T-risks, the Psi-transform and policy-calibration checks.
//
// For mu = (mu_plus, mu_minus) the conditional risk is
//   C(p, mu) = mu_plus T(p) + mu_minus T(-p),
// C* is its infimum over p and C- its infimum over the wrong-sign half-line.
// Psi~(v) minimizes C- - C* over {|mu_plus - mu_minus| = v, mu_plus +
// mu_minus <= M}; Psi is the lower convex envelope of Psi~ on [0, M].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "owlkit/losses.hpp"

namespace owlkit {

struct ConditionalRiskQuery {
  double mu_plus = 0.0;
  double mu_minus = 0.0;
  double M = 1.0;

  void validate() const {
    if (!(mu_plus >= 0.0) || !(mu_minus >= 0.0))
      throw std::invalid_argument("conditional means must be nonnegative");
    if (!(M > 0.0) || !std::isfinite(M))
      throw std::invalid_argument("M must be positive and finite");
    if (mu_plus + mu_minus > M * (1.0 + 1e-12))
      throw std::invalid_argument("mu_plus + mu_minus exceeds M");
  }
};

struct RiskMinimum {
  double value = 0.0;
  /// +-inf when the infimum is only approached in the limit.
  double argmin = 0.0;
};

namespace detail {

/// mu * t with 0 * inf = 0.
inline double weighted(double mu, double t) { return mu == 0.0 ? 0.0 : mu * t; }

}  // namespace detail

inline double conditional_risk(const LossSpec& loss, double p,
                               const ConditionalRiskQuery& q) {
  return detail::weighted(q.mu_plus, loss(p)) +
         detail::weighted(q.mu_minus, loss(-p));
}

/// Numerical engine for one loss. Tabulates T(+-p) on a symmetric scan grid
/// over [-P, P] once; each inner minimization scans the table to find a basin
/// and refines it with Brent's method. Infima at +-inf are resolved against
/// the loss limits T(+-inf).
class CalibrationEngine {
 public:
  explicit CalibrationEngine(LossSpec loss, double bracket = 50.0,
                             int scan_intervals = 512, int outer_scan = 256)
      : loss_(std::move(loss)), bracket_(bracket), outer_scan_(outer_scan) {
    if (scan_intervals < 4 || scan_intervals % 2 != 0)
      throw std::invalid_argument("scan_intervals must be even and >= 4");
    const int n = scan_intervals + 1;
    grid_.resize(n);
    t_pos_.resize(n);
    t_neg_.resize(n);
    for (int i = 0; i < n; ++i) {
      grid_[i] = -bracket_ + 2.0 * bracket_ * i / scan_intervals;
      if (i == scan_intervals / 2) grid_[i] = 0.0;
      t_pos_[i] = loss_(grid_[i]);
      t_neg_[i] = loss_(-grid_[i]);
      if (!std::isfinite(t_pos_[i]) || !std::isfinite(t_neg_[i]))
        throw std::domain_error("loss '" + loss_.name +
                                "' is not finite on the scan bracket");
    }
  }

  const LossSpec& loss() const { return loss_; }

  double risk(double p, double mu_plus, double mu_minus) const {
    const double v = detail::weighted(mu_plus, loss_(p)) +
                     detail::weighted(mu_minus, loss_(-p));
    if (std::isnan(v))
      throw std::domain_error("non-finite loss evaluation at p = " +
                              std::to_string(p));
    return v;
  }

  /// C*(mu): infimum over all of R.
  RiskMinimum optimal(double mu_plus, double mu_minus) const {
    return minimize(mu_plus, mu_minus, 0, last(), true, true);
  }

  /// C-(mu): infimum over {p : p * sign(mu_plus - mu_minus) <= 0}.
  RiskMinimum wrong_sign(double mu_plus, double mu_minus) const {
    if (mu_plus > mu_minus) return minimize(mu_plus, mu_minus, 0, mid(), true, false);
    if (mu_plus < mu_minus) return minimize(mu_plus, mu_minus, mid(), last(), false, true);
    return optimal(mu_plus, mu_minus);
  }

  double gap(double mu_plus, double mu_minus) const {
    if (mu_plus == mu_minus) return 0.0;
    return wrong_sign(mu_plus, mu_minus).value - optimal(mu_plus, mu_minus).value;
  }

  /// Psi~(v) by the general search over S = mu_plus + mu_minus in [v, M].
  double tilde_psi(double v, double M) const {
    check_vm(v, M);
    if (v == 0.0) return 0.0;
    return minimize_over_total(v, M, [&](double S) {
      const double mp = 0.5 * (S + v), mm = 0.5 * (S - v);
      return wrong_sign(mp, mm).value - optimal(mp, mm).value;
    });
  }

  /// inf over S of S T(0) - C*; equals Psi~ for convex calibrated losses.
  double reduced_tilde_psi(double v, double M) const {
    check_vm(v, M);
    const double t0 = loss_.value_at_zero;
    return minimize_over_total(v, M, [&](double S) {
      return S * t0 - optimal(0.5 * (S + v), 0.5 * (S - v)).value;
    });
  }

 private:
  int last() const { return static_cast<int>(grid_.size()) - 1; }
  int mid() const { return last() / 2; }

  static void check_vm(double v, double M) {
    if (!(M > 0.0) || !std::isfinite(M))
      throw std::invalid_argument("M must be positive and finite");
    if (!(v >= 0.0) || v > M)
      throw std::invalid_argument("v must lie in [0, M]");
  }

  template <class F>
  double minimize_over_total(double v, double M, F&& h) const {
    if (v >= M) return h(M);
    const int n = outer_scan_;
    std::vector<double> s(n + 1), hv(n + 1);
    int best = 0;
    for (int i = 0; i <= n; ++i) {
      s[i] = i == n ? M : v + (M - v) * i / n;
      hv[i] = h(s[i]);
      if (hv[i] < hv[best]) best = i;
    }
    double value = hv[best];
    const double lo = s[std::max(best - 1, 0)];
    const double hi = s[std::min(best + 1, n)];
    if (hi > lo) {
      auto [x, fx] = boost::math::tools::brent_find_minima(
          h, lo, hi, std::numeric_limits<double>::digits / 2);
      (void)x;
      value = std::min(value, fx);
    }
    return value;
  }

  RiskMinimum minimize(double mu_plus, double mu_minus, int i_lo, int i_hi,
                       bool open_left, bool open_right) const {
    int best = i_lo;
    double best_val = kInf;
    for (int i = i_lo; i <= i_hi; ++i) {
      const double c = detail::weighted(mu_plus, t_pos_[i]) +
                       detail::weighted(mu_minus, t_neg_[i]);
      if (c < best_val) {
        best_val = c;
        best = i;
      }
    }
    RiskMinimum out{best_val, grid_[best]};
    const double lo = grid_[std::max(best - 1, i_lo)];
    const double hi = grid_[std::min(best + 1, i_hi)];
    if (hi > lo) {
      auto f = [&](double p) { return risk(p, mu_plus, mu_minus); };
      auto [x, fx] = boost::math::tools::brent_find_minima(
          f, lo, hi, std::numeric_limits<double>::digits / 2);
      if (fx < out.value) out = {fx, x};
    }
    if (open_right) {
      const double lim = detail::weighted(mu_plus, loss_.limit_pos) +
                         detail::weighted(mu_minus, loss_.limit_neg);
      if (lim < out.value) out = {lim, kInf};
    }
    if (open_left) {
      const double lim = detail::weighted(mu_plus, loss_.limit_neg) +
                         detail::weighted(mu_minus, loss_.limit_pos);
      if (lim < out.value) out = {lim, -kInf};
    }
    return out;
  }

  LossSpec loss_;
  double bracket_;
  int outer_scan_;
  std::vector<double> grid_;
  std::vector<double> t_pos_;
  std::vector<double> t_neg_;
};

inline RiskMinimum optimal_conditional_risk(const LossSpec& loss,
                                            const ConditionalRiskQuery& q) {
  q.validate();
  return CalibrationEngine(loss).optimal(q.mu_plus, q.mu_minus);
}

inline double wrong_sign_conditional_risk(const LossSpec& loss,
                                          const ConditionalRiskQuery& q) {
  q.validate();
  return CalibrationEngine(loss).wrong_sign(q.mu_plus, q.mu_minus).value;
}

inline double tilde_psi(const LossSpec& loss, double v, double M) {
  return CalibrationEngine(loss).tilde_psi(v, M);
}

struct PsiCurve {
  double M = 1.0;
  std::vector<double> grid;
  std::vector<double> tilde_values;
  std::vector<double> convex_values;
};

/// Lower convex envelope of points (x_i, y_i) with ascending x, evaluated back
/// at every x_i. For a sampled 1-D function this is its biconjugate on the
/// grid.
inline std::vector<double> lower_convex_envelope(const std::vector<double>& x,
                                                 const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> hull;
  for (std::size_t i = 0; i < n; ++i) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      const double cross =
          (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
      if (cross <= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(i);
  }
  std::vector<double> out(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (seg + 1 < hull.size() && x[hull[seg + 1]] < x[i]) ++seg;
    if (seg + 1 >= hull.size()) {
      out[i] = y[hull.back()];
      continue;
    }
    const std::size_t a = hull[seg], b = hull[seg + 1];
    const double t = (x[i] - x[a]) / (x[b] - x[a]);
    out[i] = y[a] + t * (y[b] - y[a]);
  }
  return out;
}

/// Gridded Psi~ and its convex envelope over n_grid equispaced v in [0, M].
/// Grid points are split across `workers` threads; output does not depend on
/// the split.
inline PsiCurve psi_curve(const LossSpec& loss, double M, int n_grid,
                          int workers = 1) {
  if (!(M > 0.0)) throw std::invalid_argument("psi_curve requires M > 0");
  if (n_grid < 16) throw std::invalid_argument("psi_curve requires n_grid >= 16");
  const CalibrationEngine engine(loss);
  PsiCurve curve;
  curve.M = M;
  curve.grid.resize(n_grid);
  curve.tilde_values.resize(n_grid);
  for (int k = 0; k < n_grid; ++k)
    curve.grid[k] = k == n_grid - 1 ? M : M * k / (n_grid - 1);

  auto work = [&](int begin, int end) {
    for (int k = begin; k < end; ++k)
      curve.tilde_values[k] = engine.tilde_psi(curve.grid[k], M);
  };
  workers = std::clamp(workers, 1, n_grid);
  if (workers == 1) {
    work(0, n_grid);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_grid + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int b = w * chunk, e = std::min(n_grid, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  curve.convex_values = lower_convex_envelope(curve.grid, curve.tilde_values);
  return curve;
}

/// Table of closed-form Psi-transforms. Returns nullopt when the loss has no
/// closed form.
inline std::optional<double> try_closed_form_psi(const std::string& loss_name,
                                                 double v, double M,
                                                 const ParamMap& params = {}) {
  if (!(M > 0.0) || !(v >= 0.0) || v > M)
    throw std::invalid_argument("closed_form_psi requires 0 <= v <= M, M > 0");
  auto xlogx = [](double x) { return x <= 0.0 ? 0.0 : x * std::log(x); };
  if (loss_name == "exponential") {
    const double r = v / M;
    return M * (1.0 - std::sqrt(std::max(0.0, 1.0 - r * r)));
  }
  if (loss_name == "truncated_quadratic") return v * v / M;
  if (loss_name == "hinge") return v;
  if (loss_name == "dwd") {
    return v / detail::require_param(params, "gamma", loss_name);
  }
  if (loss_name == "arcx4") {
    const double k = detail::require_param(params, "k", loss_name);
    const double e = 1.0 / (k - 1.0);
    const double bracket = std::pow(M - v, e) + std::pow(M + v, e);
    return M - std::pow(2.0, k - 1.0) * (M * M - v * v) * std::pow(bracket, 1.0 - k);
  }
  if (loss_name == "sigmoid") return v;
  if (loss_name == "binomial")
    return 0.5 * xlogx(M + v) + 0.5 * xlogx(M - v) - xlogx(M);
  if (loss_name == "smoothed_ramp") return v;
  return std::nullopt;
}

inline double closed_form_psi(const std::string& loss_name, double v, double M,
                              const ParamMap& params = {}) {
  auto r = try_closed_form_psi(loss_name, v, M, params);
  if (!r) throw std::invalid_argument("no closed-form Psi for '" + loss_name + "'");
  return *r;
}

struct CalibrationReport {
  std::string loss;
  double M = 1.0;
  int n_samples = 0;
  double margin_floor = 0.0;
  double min_gap = kInf;
  double worst_mu_plus = 0.0;
  double worst_mu_minus = 0.0;
  bool passed = false;
};

/// Samples mu with |mu_plus - mu_minus| >= margin_floor and
/// mu_plus + mu_minus <= M and checks C- > C* at every sample.
inline CalibrationReport check_policy_calibration(const LossSpec& loss, double M,
                                                  int n_samples,
                                                  double margin_floor,
                                                  std::uint64_t seed = 20240611) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (!(M > 0.0)) throw std::invalid_argument("M must be positive");
  if (!(margin_floor >= 0.0) || margin_floor > M)
    throw std::invalid_argument("margin_floor must lie in [0, M]");
  const CalibrationEngine engine(loss);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CalibrationReport rep;
  rep.loss = loss.name;
  rep.M = M;
  rep.n_samples = n_samples;
  rep.margin_floor = margin_floor;
  for (int i = 0; i < n_samples; ++i) {
    const double total = margin_floor + (M - margin_floor) * unit(rng);
    const double v = margin_floor + (total - margin_floor) * unit(rng);
    double mp = 0.5 * (total + v), mm = 0.5 * (total - v);
    if (unit(rng) < 0.5) std::swap(mp, mm);
    if (mp == mm) continue;
    const double g = engine.gap(mp, mm);
    if (g < rep.min_gap) {
      rep.min_gap = g;
      rep.worst_mu_plus = mp;
      rep.worst_mu_minus = mm;
    }
  }
  rep.passed = rep.min_gap > 0.0;
  return rep;
}

}  // namespace owlkit
