#pragma once

// Synthetic randomized trials with known optimal rules.
//
// Example 1: x ~ U[-1, 1], ln R ~ N(tau + xi a, 1), tau = x,
//            xi = sin(4 pi x) (smooth) or sign(sin(4 pi x)).
// Examples 2-5: x ~ U[-1, 1]^m, R ~ N(tau + xi a, 1) with
//   2: tau = 1 + x1 + x2 + 2 x3 + 0.5 x4,  xi = 0.146 + sin(4 pi x1) + x2^2
//   3: same tau,                            xi = sign(0.146 + sin(4 pi x1) + x2^2)
//   4: tau = 1 + x1^2 + x2^2 + 2 x3^2 + 0.5 x4^2, xi = 3.8 (0.8 - x1^2 - x2^2)
//   5: same tau,                            xi = sign(0.8 - x1^2 - x2^2)
// Treatment is +-1 with probability 1/2; pi = 1/2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "owlkit/dataset.hpp"

namespace owlkit {

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, a, b).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

struct ScenarioSpec {
  int example_id = 2;
  Eigen::Index n = 100;
  Eigen::Index m = 5;
  bool smooth = true;  // Example 1 only
  double contamination_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (example_id < 1 || example_id > 5)
      throw std::invalid_argument("example_id must be in 1..5");
    if (example_id == 1 && m != 1)
      throw std::invalid_argument("Example 1 has a single covariate (m = 1)");
    if (example_id > 1 && m < 4)
      throw std::invalid_argument("Examples 2-5 need at least 4 covariates");
    if (n < 1) throw std::invalid_argument("n must be positive");
    if (!(contamination_rate >= 0.0 && contamination_rate < 1.0))
      throw std::invalid_argument("contamination rate must lie in [0, 1)");
  }
};

struct Effects {
  double tau;
  double xi;
};

template <class Row>
Effects scenario_effects(int example_id, bool smooth, const Row& x) {
  auto sgn = [](double v) { return double(treatment_sign(v)); };
  switch (example_id) {
    case 1: {
      const double s = std::sin(4.0 * M_PI * x(0));
      return {x(0), smooth ? s : sgn(s)};
    }
    case 2:
    case 3: {
      const double tau = 1.0 + x(0) + x(1) + 2.0 * x(2) + 0.5 * x(3);
      const double xi = 0.146 + std::sin(4.0 * M_PI * x(0)) + x(1) * x(1);
      return {tau, example_id == 2 ? xi : sgn(xi)};
    }
    case 4:
    case 5: {
      const double tau = 1.0 + x(0) * x(0) + x(1) * x(1) + 2.0 * x(2) * x(2) +
                         0.5 * x(3) * x(3);
      const double base = 0.8 - x(0) * x(0) - x(1) * x(1);
      return {tau, example_id == 4 ? 3.8 * base : sgn(base)};
    }
    default:
      throw std::invalid_argument("example_id must be in 1..5");
  }
}

/// |mu_1 - mu_-1| for the scenario's outcome model.
inline double effect_gap(const Effects& e, bool log_normal) {
  if (log_normal)
    return std::exp(e.tau + 0.5) * std::abs(std::exp(e.xi) - std::exp(-e.xi));
  return 2.0 * std::abs(e.xi);
}

/// Builds the oracle for given covariates.
inline Oracle make_oracle(int example_id, bool smooth, const Matrix& X) {
  const auto n = X.rows();
  Oracle o{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n), example_id == 1};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Effects e = scenario_effects(example_id, smooth, X.row(i));
    o.tau(i) = e.tau;
    o.xi(i) = e.xi;
    o.optimal(i) = treatment_sign(e.xi);
    o.gap(i) = effect_gap(e, o.log_normal);
    o.target(i) = 2.0 * e.xi;
  }
  return o;
}

namespace detail {

inline double draw_outcome(std::mt19937_64& rng, const Oracle& o, Eigen::Index i,
                           double a, double sign) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const double mean = o.tau(i) + sign * o.xi(i) * a;
  const double z = mean + noise(rng);
  return o.log_normal ? std::exp(z) : z;
}

/// floor(rate * n) distinct indices, in ascending order.
inline std::vector<Eigen::Index> choose_rows(Eigen::Index n, double rate,
                                             std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(std::floor(rate * static_cast<double>(n) + 1e-9));
  std::vector<Eigen::Index> all(n), picked;
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
  return picked;
}

}  // namespace detail

inline TrialDataset contaminate(const TrialDataset& data, double rate, std::uint64_t seed);

inline TrialDataset generate(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 0x67656e));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  TrialDataset d;
  d.covariates.resize(spec.n, spec.m);
  for (Eigen::Index i = 0; i < spec.n; ++i)
    for (Eigen::Index j = 0; j < spec.m; ++j) d.covariates(i, j) = unif(rng);
  d.treatments.resize(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) d.treatments(i) = coin(rng) ? 1.0 : -1.0;
  d.propensities.setConstant(spec.n, 0.5);
  d.oracle = make_oracle(spec.example_id, spec.smooth, d.covariates);
  d.rewards.resize(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i)
    d.rewards(i) = detail::draw_outcome(rng, *d.oracle, i, d.treatments(i), 1.0);
  if (spec.contamination_rate > 0.0)
    return contaminate(d, spec.contamination_rate, derive_seed(spec.seed, 0x636f6e));
  return d;
}

/// Redraws floor(rate n) rewards from the rule-inverted model
/// N(tau - xi a, 1) (log-normal for Example 1).
inline TrialDataset contaminate(const TrialDataset& data, double rate, std::uint64_t seed) {
  const Oracle& o = data.require_oracle();
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("contamination rate must lie in [0, 1)");
  TrialDataset out = data;
  if (out.contaminated.empty()) out.contaminated.assign(data.size(), false);
  const auto rows = detail::choose_rows(data.size(), rate, seed);
  std::mt19937_64 rng(derive_seed(seed, 0x726577));
  for (auto i : rows) {
    out.rewards(i) = detail::draw_outcome(rng, o, i, data.treatments(i), -1.0);
    out.contaminated[i] = true;
  }
  return out;
}

/// Negates the treatment of floor(rate n) rows; rewards are unchanged.
inline TrialDataset flip_treatments(const TrialDataset& data, double rate,
                                    std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw std::invalid_argument("flip rate must lie in [0, 1]");
  TrialDataset out = data;
  for (auto i : detail::choose_rows(data.size(), rate, seed))
    out.treatments(i) = -out.treatments(i);
  return out;
}

}  // namespace owlkit
