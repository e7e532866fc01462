#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "owlkit/evaluate.hpp"
#include "owlkit/simgen.hpp"

using namespace owlkit;

namespace {

FittedRule constant_rule(double bias, Eigen::Index dim) {
  FittedRule r;
  r.support = Matrix::Zero(1, dim);
  r.coefficients = Vector::Zero(1);
  r.bias = bias;
  r.kernel = KernelSpec::gaussian(1.0);
  return r;
}

TrialDataset with_constant_oracle(Eigen::Index n, double d_star) {
  TrialDataset d;
  d.covariates = Matrix::Zero(n, 1);
  d.treatments = Vector::Ones(n);
  d.rewards = Vector::LinSpaced(n, 1, double(n));
  d.propensities = Vector::Constant(n, 0.5);
  Oracle o{Vector::Zero(n), Vector::Constant(n, d_star), Vector::Constant(n, d_star),
           Vector::Constant(n, 2.0), Vector::Constant(n, 2 * d_star), false};
  d.oracle = o;
  return d;
}

// x ~ U[-1,1], d* = sign(x); reward 3 when a = d*, 1 otherwise, plus small noise.
TrialDataset toy(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> z(0, 0.1);
  std::bernoulli_distribution coin(0.5);
  TrialDataset d;
  d.covariates.resize(n, 1);
  d.treatments.resize(n);
  d.rewards.resize(n);
  d.propensities = Vector::Constant(n, 0.5);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.covariates(i, 0) = u(rng);
    d.treatments(i) = coin(rng) ? 1.0 : -1.0;
    const bool good = d.treatments(i) == treatment_sign(d.covariates(i, 0));
    d.rewards(i) = (good ? 3.0 : 1.0) + z(rng);
  }
  d.oracle = make_oracle(1, false, d.covariates);
  for (Eigen::Index i = 0; i < n; ++i) d.oracle->optimal(i) = treatment_sign(d.covariates(i, 0));
  return d;
}

MethodSpec owl_method(std::vector<double> lambdas, std::vector<double> bandwidths) {
  MethodSpec m;
  m.name = "toy";
  m.learner = Learner::owl;
  m.loss = "binomial";
  m.grid.lambdas = std::move(lambdas);
  m.grid.bandwidths = std::move(bandwidths);
  return m;
}

}  // namespace

TEST(Evaluate, MisclassificationExamples) {
  const FittedRule plus = constant_rule(1.0, 1);
  EXPECT_EQ(misclassification(plus, with_constant_oracle(10, 1.0)), 0.0);
  EXPECT_EQ(misclassification(plus, with_constant_oracle(10, -1.0)), 1.0);
  TrialDataset bare = with_constant_oracle(4, 1.0);
  bare.oracle.reset();
  EXPECT_THROW(misclassification(plus, bare), std::exception);

  auto s = ScenarioSpec{};
  s.example_id = 3;
  s.n = 500;
  s.seed = 1;
  const TrialDataset d = generate(s);
  EXPECT_EQ(misclassification_of(d.oracle->optimal, d), 0.0);
}

TEST(Evaluate, ValueExamples) {
  const TrialDataset d = with_constant_oracle(6, 1.0);
  EXPECT_DOUBLE_EQ(value_estimate(constant_rule(1.0, 1), d), d.rewards.mean());
  EXPECT_THROW(value_estimate(constant_rule(-1.0, 1), d), UndefinedValue);

  TrialDataset two;
  two.covariates = Matrix::Zero(2, 1);
  two.treatments = Vector::Ones(2);
  two.rewards = (Vector(2) << 1.0, 3.0).finished();
  two.propensities = Vector::Constant(2, 0.5);
  EXPECT_DOUBLE_EQ(value_estimate(constant_rule(0.5, 1), two), 2.0);

  // Unequal propensities weight the ratio.
  two.propensities = (Vector(2) << 0.25, 0.5).finished();
  EXPECT_DOUBLE_EQ(value_of_decisions(Vector::Ones(2), two), (4.0 + 6.0) / 6.0);
  EXPECT_THROW(value_of_decisions(Vector::Ones(3), two), std::invalid_argument);
}

TEST(Evaluate, ReportCountsMatches) {
  TrialDataset d = with_constant_oracle(4, 1.0);
  d.treatments << 1, -1, 1, -1;
  const MetricReport r = evaluate_decisions(Vector::Ones(4), d);
  EXPECT_EQ(r.n_matched, 2);
  EXPECT_DOUBLE_EQ(r.value_estimate, 2.0);
  EXPECT_EQ(r.misclassification, 0.0);
}

TEST(Evaluate, ValueIsPermutationInvariant) {
  auto s = ScenarioSpec{};
  s.n = 200;
  s.seed = 3;
  const TrialDataset d = generate(s);
  const Vector dec = d.oracle->optimal;
  std::vector<Eigen::Index> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const TrialDataset p = d.head(d.size());
    TrialDataset q = p;
    Vector pd(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      q.covariates.row(i) = d.covariates.row(idx[i]);
      q.treatments(i) = d.treatments(idx[i]);
      q.rewards(i) = d.rewards(idx[i]);
      q.propensities(i) = d.propensities(idx[i]);
      pd(i) = dec(idx[i]);
    }
    EXPECT_NEAR(value_of_decisions(pd, q), value_of_decisions(dec, d), 1e-12);
  }
}

TEST(Evaluate, OracleBeatsRandomRule) {
  int wins = 0;
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.5);
  for (std::uint64_t t = 0; t < 100; ++t) {
    auto s = ScenarioSpec{};
    s.n = 10000;
    s.seed = 1000 + t;
    const TrialDataset d = generate(s);
    const Vector random = Vector::NullaryExpr(d.size(), [&] { return coin(rng) ? 1.0 : -1.0; });
    wins += value_of_decisions(d.oracle->optimal, d) >= value_of_decisions(random, d);
  }
  EXPECT_GE(wins, 95);
}

TEST(Evaluate, ExcessRiskExamples) {
  auto s = ScenarioSpec{};
  s.n = 300;
  s.seed = 6;
  const TrialDataset d = generate(s);
  EXPECT_EQ(excess_risk_of(d.oracle->optimal, d), 0.0);
  EXPECT_NEAR(excess_risk_of(-d.oracle->optimal, d), d.oracle->gap.mean(), 1e-12);
  EXPECT_GE(excess_risk_of(Vector::Ones(300), d), 0.0);

  // Example 2 point with xi = 0.5: x2^2 = 0.354 at x1 = 0.
  Matrix x = Matrix::Zero(1, 5);
  x(0, 1) = std::sqrt(0.354);
  TrialDataset one;
  one.covariates = x;
  one.treatments = Vector::Ones(1);
  one.rewards = Vector::Zero(1);
  one.propensities = Vector::Constant(1, 0.5);
  one.oracle = make_oracle(2, true, x);
  EXPECT_NEAR(one.oracle->xi(0), 0.5, 1e-12);
  EXPECT_NEAR(excess_risk_of(-Vector::Ones(1), one), 1.0, 1e-12);
}

TEST(Evaluate, ExcessRiskZeroOnlyOnZeroGapDisagreement) {
  TrialDataset d = with_constant_oracle(3, 1.0);
  d.oracle->gap << 0.0, 1.0, 2.0;
  EXPECT_EQ(excess_risk_of((Vector(3) << -1, 1, 1).finished(), d), 0.0);
  EXPECT_GT(excess_risk_of((Vector(3) << 1, -1, 1).finished(), d), 0.0);
}

TEST(GridSearch, SingletonGrid) {
  const TrialDataset train = toy(60, 1), tune = toy(60, 2);
  const MethodSpec m = owl_method({0.1}, {0.5});
  const auto r = grid_search(train, tune, m);
  EXPECT_EQ(r.best.lambda, 0.1);
  EXPECT_EQ(r.best.bandwidth, 0.5);
  EXPECT_EQ(r.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(r.tune_metric, value_estimate(r.rule, tune));
}

TEST(GridSearch, TiesPreferLargerSigmaThenLambdaThenSmallerBandwidth) {
  // Every row appears under both treatments with the same reward, so any rule
  // has the same tuning value.
  const TrialDataset train = toy(40, 3);
  TrialDataset tune;
  tune.covariates = Matrix::Zero(20, 1);
  tune.covariates.col(0) = Vector::LinSpaced(20, -1, 1);
  tune.covariates.bottomRows(10) = tune.covariates.topRows(10);
  tune.treatments = Vector::Ones(20);
  tune.treatments.tail(10).setConstant(-1.0);
  tune.covariates.topRows(10).col(0) = Vector::LinSpaced(10, -1, 1);
  tune.covariates.bottomRows(10).col(0) = Vector::LinSpaced(10, -1, 1);
  tune.rewards = Vector::Constant(20, 2.0);
  tune.propensities = Vector::Constant(20, 0.5);

  const auto r = grid_search(train, tune, owl_method({0.01, 1.0, 0.1}, {2.0, 0.5, 1.0}));
  EXPECT_EQ(r.best.lambda, 1.0);
  EXPECT_EQ(r.best.bandwidth, 0.5);

  MethodSpec robust = owl_method({0.1, 1.0}, {0.5, 1.0});
  robust.learner = Learner::rwl;
  robust.robust = ConcaveFamily::tcave;
  robust.grid.sigmas = {2.0, 1.0};
  const auto rr = grid_search(train, tune, robust);
  EXPECT_EQ(rr.best.sigma, 2.0);
  EXPECT_EQ(rr.best.lambda, 1.0);
  EXPECT_EQ(rr.best.bandwidth, 0.5);
}

TEST(GridSearch, AllCellsFailing) {
  TrialDataset train = toy(30, 4);
  train.treatments.setConstant(-1.0);
  TrialDataset tune = toy(30, 5);
  tune.treatments.setConstant(1.0);
  try {
    grid_search(train, tune, owl_method({0.1, 1.0}, {0.5}));
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("all 2 cells failed"), std::string::npos);
    EXPECT_NE(msg.find("lambda=0.1"), std::string::npos);
  }
}

TEST(GridSearch, FindsNearOracleValueOnSeparableToy) {
  const TrialDataset train = toy(150, 6), tune = toy(150, 7);
  const auto r = grid_search(train, tune, owl_method({1e-3, 1e-2, 1e-1, 1.0}, {0.1, 0.3, 1.0}));
  const double oracle = value_of_decisions(tune.oracle->optimal, tune);
  EXPECT_GE(r.tune_metric, oracle - 0.1);
  EXPECT_LE(misclassification(r.rule, tune), 0.1);
}

TEST(GridSearch, ExcessRiskCriterionMinimizes) {
  const TrialDataset train = toy(80, 8), tune = toy(80, 9);
  GridSearchOptions o;
  o.criterion = Criterion::excess_risk;
  const auto r = grid_search(train, tune, owl_method({1e-2, 10.0}, {0.3, 3.0}), o);
  for (const auto& c : r.cells)
    if (c.ok) EXPECT_LE(r.tune_metric, c.metric);
  EXPECT_DOUBLE_EQ(r.tune_metric, empirical_excess_risk(r.rule, tune));
}

TEST(GridSearch, RejectsOracleAndBadGrids) {
  const TrialDataset d = toy(20, 10);
  MethodSpec m = owl_method({0.1}, {1.0});
  m.learner = Learner::oracle;
  EXPECT_THROW(grid_search(d, d, m), std::invalid_argument);
  m = owl_method({}, {1.0});
  EXPECT_THROW(grid_search(d, d, m), std::invalid_argument);
  m = owl_method({0.1}, {1.0});
  m.grid.sigmas = {1.0, 2.0};
  EXPECT_THROW(m.grid.validate(), std::invalid_argument);
}
