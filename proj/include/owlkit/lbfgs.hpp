#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// safeguarded cubic interpolation).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace owlkit {

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 500;
  /// Stop when the gradient sup-norm falls to this value.
  double gradient_tolerance = 1e-6;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
  /// Stop (unconverged) when a step changes f by less than this relative amount.
  double stall_tolerance = 1e-15;
  /// Wall-clock limit; Timeout is thrown once it passes.
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;

  double gradient_norm() const {
    return gradient.size() ? gradient.lpNorm<Eigen::Infinity>() : 0.0;
  }
};

/// Thrown when the objective is non-finite at the starting point or the line
/// search cannot find any finite trial point.
class NonFiniteObjective : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Timeout : public std::runtime_error {
 public:
  Timeout() : std::runtime_error("wall-clock limit exceeded") {}
};

/// Minimizes f. `fg(x, grad)` returns f(x) and writes its gradient into grad.
template <class ValueAndGradient>
LbfgsResult lbfgs_minimize(ValueAndGradient&& fg, Eigen::VectorXd x0,
                           const LbfgsOptions& opt = {}) {
  using Vec = Eigen::VectorXd;
  LbfgsResult res;
  res.x = std::move(x0);
  res.gradient.resize(res.x.size());
  res.value = fg(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    std::ostringstream os;
    os << "non-finite objective at the initial iterate (f = " << res.value
       << ", |x|_inf = " << res.x.lpNorm<Eigen::Infinity>() << ")";
    throw NonFiniteObjective(os.str());
  }

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vec d(res.x.size()), g_new(res.x.size()), x_new(res.x.size());

  struct Trial {
    double alpha, f, dphi;
    Vec g;
  };

  for (res.iterations = 0;; ++res.iterations) {
    if (opt.deadline && std::chrono::steady_clock::now() > *opt.deadline) throw Timeout();
    if (res.gradient_norm() <= opt.gradient_tolerance) {
      res.converged = true;
      res.status = "gradient tolerance reached";
      return res;
    }
    if (res.iterations >= opt.max_iterations) {
      res.status = "maximum iterations reached";
      return res;
    }

    // Two-loop recursion.
    d = -res.gradient;
    const int m = static_cast<int>(s_hist.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }
    double dphi0 = res.gradient.dot(d);
    if (!(dphi0 < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -res.gradient;
      dphi0 = -res.gradient.squaredNorm();
    }
    const double f0 = res.value;

    auto eval = [&](double a) {
      x_new = res.x + a * d;
      const double f = fg(x_new, g_new);
      ++res.evaluations;
      return Trial{a, f, g_new.dot(d), g_new};
    };
    auto sufficient = [&](const Trial& t) {
      return std::isfinite(t.f) && t.f <= f0 + opt.c1 * t.alpha * dphi0;
    };
    auto curvature = [&](const Trial& t) {
      return std::abs(t.dphi) <= -opt.c2 * dphi0;
    };

    Trial lo{0.0, f0, dphi0, res.gradient};
    std::optional<Trial> accepted;
    int budget = opt.max_line_search;

    auto zoom = [&](Trial zlo, Trial zhi) -> std::optional<Trial> {
      while (budget-- > 0) {
        const double a_lo = zlo.alpha, a_hi = zhi.alpha;
        double a = 0.5 * (a_lo + a_hi);
        if (std::isfinite(zhi.f)) {
          // Cubic through (a_lo, f, f') and (a_hi, f, f').
          const double d1 = zlo.dphi + zhi.dphi - 3.0 * (zlo.f - zhi.f) / (a_lo - a_hi);
          const double disc = d1 * d1 - zlo.dphi * zhi.dphi;
          if (disc >= 0.0) {
            const double d2 = std::copysign(std::sqrt(disc), a_hi - a_lo);
            const double c = a_hi - (a_hi - a_lo) * (zhi.dphi + d2 - d1) /
                                        (zhi.dphi - zlo.dphi + 2.0 * d2);
            const double lo_b = std::min(a_lo, a_hi), hi_b = std::max(a_lo, a_hi);
            const double margin = 0.1 * (hi_b - lo_b);
            if (std::isfinite(c) && c > lo_b + margin && c < hi_b - margin) a = c;
          }
        }
        Trial t = eval(a);
        if (!sufficient(t) || t.f >= zlo.f) {
          zhi = std::move(t);
        } else {
          if (curvature(t)) return t;
          if (t.dphi * (zhi.alpha - zlo.alpha) >= 0.0) zhi = zlo;
          zlo = std::move(t);
        }
        if (std::abs(zhi.alpha - zlo.alpha) <= 1e-16 * std::max(1.0, zlo.alpha)) break;
      }
      if (zlo.alpha > 0.0) return zlo;  // sufficient decrease holds
      return std::nullopt;
    };

    double a = res.iterations == 0 && m == 0
                   ? std::min(1.0, 1.0 / std::max(res.gradient.lpNorm<Eigen::Infinity>(), 1e-300))
                   : 1.0;
    bool any_finite = false;
    for (int i = 0; budget-- > 0; ++i) {
      Trial t = eval(a);
      if (std::isfinite(t.f)) any_finite = true;
      if (!std::isfinite(t.f)) {
        // Treat an overflowed trial as a bracket end.
        accepted = zoom(lo, t);
        break;
      }
      if (!sufficient(t) || (i > 0 && t.f >= lo.f)) {
        accepted = zoom(lo, t);
        break;
      }
      if (curvature(t)) {
        accepted = std::move(t);
        break;
      }
      if (t.dphi >= 0.0) {
        accepted = zoom(t, lo);
        break;
      }
      lo = std::move(t);
      a *= 2.0;
    }
    if (!accepted && lo.alpha > 0.0) accepted = lo;
    if (!accepted) {
      if (!any_finite) {
        std::ostringstream os;
        os << "non-finite objective along the search direction at iteration "
           << res.iterations << " (f = " << f0 << ", |grad|_inf = "
           << res.gradient_norm() << ")";
        throw NonFiniteObjective(os.str());
      }
      res.status = "line search failed";
      return res;
    }

    Vec s = accepted->alpha * d;
    Vec y = accepted->g - res.gradient;
    const double f_prev = res.value;
    res.x += s;
    res.value = accepted->f;
    res.gradient = std::move(accepted->g);

    const double sy = s.dot(y);
    if (sy > 1e-12 * std::sqrt(s.squaredNorm() * y.squaredNorm())) {
      if (static_cast<int>(s_hist.size()) == opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    if (f_prev - res.value <= opt.stall_tolerance * std::max(1.0, std::abs(f_prev))) {
      res.iterations += 1;
      if (res.gradient_norm() <= opt.gradient_tolerance) {
        res.converged = true;
        res.status = "gradient tolerance reached";
      } else {
        res.status = "no further decrease";
      }
      return res;
    }
  }
}

}  // namespace owlkit
