#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "owlkit/fit.hpp"

using namespace owlkit;

namespace {

TrialDataset toy_data(int n, int m, std::uint64_t seed, bool positive = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::bernoulli_distribution coin(0.5);
  TrialDataset d;
  d.covariates = Matrix::NullaryExpr(n, m, [&] { return u(rng); });
  d.treatments = Vector::NullaryExpr(n, [&] { return coin(rng) ? 1.0 : -1.0; });
  d.rewards = Vector::NullaryExpr(n, [&] { return positive ? 0.1 + std::abs(u(rng)) * 2 : u(rng); });
  d.propensities = Vector::NullaryExpr(n, [&] { return 0.3 + 0.4 * (u(rng) + 1) / 2; });
  return d;
}

/// Rewards are high exactly when a = sign(x).
TrialDataset separable_toy(int n) {
  TrialDataset d;
  d.covariates.resize(n, 1);
  d.treatments.resize(n);
  d.rewards.resize(n);
  d.propensities.setConstant(n, 0.5);
  for (int i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * (i + 0.5) / n;
    d.covariates(i, 0) = x;
    d.treatments(i) = treatment_sign(x);
    d.rewards(i) = 1.0;
  }
  return d;
}

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Fit, ObjectiveExamples) {
  TrialDataset d;
  d.covariates = Matrix::Zero(1, 1);
  d.treatments = Vector::Ones(1);
  d.rewards = Vector::Ones(1);
  d.propensities = Vector::Constant(1, 0.5);
  const Matrix K = Matrix::Ones(1, 1);
  const auto hinge = make_builtin_loss("hinge");
  EXPECT_DOUBLE_EQ(owl_objective(Vector::Ones(1), 0.0, d, hinge, K, 1.0), 0.5);

  const TrialDataset r = toy_data(6, 2, 1);
  const Matrix G = gram_matrix(KernelSpec::gaussian(1.0), r.covariates);
  const auto bin = make_builtin_loss("binomial");
  const double expect0 = (r.rewards.array() / r.propensities.array()).mean() * std::log(2.0);
  EXPECT_NEAR(owl_objective(Vector::Zero(6), 0.0, r, bin, G, 0.3), expect0, 1e-14);

  const Vector v = Vector::LinSpaced(6, -1, 1);
  const Vector zero = Vector::Zero(6);
  EXPECT_NEAR(owl_objective(v, 0.4, r, bin, G, 2.0, &zero), v.dot(G * v), 1e-14);
  const auto [gv, gd] = owl_gradient(v, 0.4, r, bin, G, 2.0, &zero);
  EXPECT_TRUE(gv.isApprox(2.0 * G * v, 1e-14));
  EXPECT_EQ(gd, 0.0);
}

TEST(Fit, ObjectiveErrors) {
  const TrialDataset r = toy_data(4, 1, 2);
  const Matrix G = gram_matrix(KernelSpec::gaussian(1.0), r.covariates);
  const auto bin = make_builtin_loss("binomial");
  EXPECT_THROW(owl_objective(Vector::Zero(4), 0, r, bin, G, 0.0), std::invalid_argument);
  EXPECT_THROW(owl_objective(Vector::Zero(4), 0, r, bin, Matrix::Ones(3, 3), 1.0),
               std::invalid_argument);
  TrialDataset neg = r;
  neg.rewards(0) = -1.0;
  EXPECT_THROW(owl_objective(Vector::Zero(4), 0, neg, bin, G, 1.0), std::invalid_argument);
  const Vector bad = -Vector::Ones(4);
  EXPECT_THROW(owl_objective(Vector::Zero(4), 0, r, bin, G, 1.0, &bad), std::invalid_argument);
}

TEST(Fit, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  std::vector<LossSpec> losses = {make_builtin_loss("binomial"), make_builtin_loss("exponential")};
  for (auto f : {ConcaveFamily::acave, ConcaveFamily::bcave, ConcaveFamily::ccave,
                 ConcaveFamily::tcave})
    losses.push_back(compose_cc(ConcaveComponent(f, f == ConcaveFamily::bcave ? 2.0 : f == ConcaveFamily::acave ? 0.2 : 0.5)));
  for (int t = 0; t < 20; ++t) {
    const int n = 3 + t % 15;
    const TrialDataset d = toy_data(n, 2, 100 + t);
    const Matrix G = gram_matrix(KernelSpec::matern(1.5, 0.7), d.covariates);
    const Vector w = Vector::NullaryExpr(n, [&] { return std::abs(z(rng)); });
    for (const auto& loss : losses) {
      Vector x = Vector::NullaryExpr(n + 1, [&] { return 0.5 * z(rng); });
      auto f = [&](const Vector& y) {
        return owl_objective(y.head(n), y(n), d, loss, G, 0.3, &w);
      };
      const auto [gv, gd] = owl_gradient(x.head(n), x(n), d, loss, G, 0.3, &w);
      Vector g(n + 1);
      g << gv, gd;
      const Vector fd = central_difference(f, x);
      EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm())) << loss.name;
    }
  }
}

TEST(Fit, ZeroScoreGradientVanishesOnPairedData) {
  TrialDataset d;
  d.covariates.resize(4, 1);
  d.covariates << -0.5, -0.5, 0.5, 0.5;
  d.treatments = (Vector(4) << 1, -1, 1, -1).finished();
  d.rewards = Vector::Constant(4, 2.0);
  d.propensities = Vector::Constant(4, 0.5);
  const Matrix G = gram_matrix(KernelSpec::gaussian(1.0), d.covariates);
  const auto [gv, gd] = owl_gradient(Vector::Zero(4), 0.0, d, make_builtin_loss("binomial"), G, 1.0);
  EXPECT_NEAR(gd, 0.0, 1e-16);
}

TEST(Fit, ObjectiveIsConvexForConvexLoss) {
  const TrialDataset d = toy_data(10, 2, 5);
  const Matrix G = gram_matrix(KernelSpec::gaussian(0.8), d.covariates);
  const auto loss = make_builtin_loss("binomial");
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  for (int t = 0; t < 100; ++t) {
    const Vector a = Vector::NullaryExpr(11, [&] { return z(rng); });
    const Vector b = Vector::NullaryExpr(11, [&] { return z(rng); });
    const Vector c = 0.5 * (a + b);
    auto f = [&](const Vector& x) { return owl_objective(x.head(10), x(10), d, loss, G, 0.5); };
    EXPECT_LE(f(c), 0.5 * (f(a) + f(b)) + 1e-9);
  }
}

TEST(Fit, SolutionIsStationaryAndLocallyOptimal) {
  const TrialDataset d = toy_data(40, 2, 8);
  const auto loss = make_builtin_loss("binomial");
  const auto kernel = KernelSpec::gaussian(0.5);
  const Matrix G = gram_matrix(kernel, d.covariates);
  const FitResult r = fit_convex_owl(d, loss, kernel, 0.1);
  EXPECT_TRUE(r.converged) << r.status;
  EXPECT_LE(r.gradient_norm, 1e-6 * 40);
  EXPECT_LE(r.objective, r.initial_objective);
  const double f0 = owl_objective(r.rule.coefficients, r.rule.bias, d, loss, G, 0.1);
  EXPECT_NEAR(f0, r.objective, 1e-14);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int t = 0; t < 50; ++t) {
    Vector dir = Vector::NullaryExpr(41, [&] { return z(rng); });
    dir *= 1e-3 / dir.norm();
    const double f = owl_objective(r.rule.coefficients + dir.head(40), r.rule.bias + dir(40), d,
                                   loss, G, 0.1);
    EXPECT_GE(f, f0 - 1e-8);
  }
}

TEST(Fit, WarmStartAtSolutionStopsImmediately) {
  const TrialDataset d = toy_data(30, 2, 10);
  const auto loss = make_builtin_loss("binomial");
  const auto kernel = KernelSpec::exponential(1.0);
  FitOptions o;
  o.gradient_tolerance_per_obs = 1e-9;
  const FitResult a = fit_convex_owl(d, loss, kernel, 0.05, o);
  o.init = std::make_pair(a.rule.coefficients, a.rule.bias);
  const FitResult b = fit_convex_owl(d, loss, kernel, 0.05, o);
  EXPECT_LE(b.iterations, 2);
  EXPECT_NEAR(b.objective, a.objective, 1e-10);
}

TEST(Fit, NormShrinksWithLambda) {
  const TrialDataset d = toy_data(40, 2, 12);
  const auto loss = make_builtin_loss("binomial");
  const auto kernel = KernelSpec::gaussian(0.7);
  const Matrix G = gram_matrix(kernel, d.covariates);
  double prev = kInf;
  for (double lambda : {0.01, 0.1, 1.0, 10.0}) {
    FitOptions o;
    o.gradient_tolerance_per_obs = 1e-10;
    const auto r = fit_convex_owl(d, loss, kernel, lambda, o);
    const double norm = std::sqrt(r.rule.coefficients.dot(G * r.rule.coefficients));
    EXPECT_LE(norm, prev + 1e-8) << lambda;
    prev = norm;
  }
}

TEST(Fit, ScalingRewardsWithLambdaKeepsTheSolution) {
  const TrialDataset d = toy_data(30, 2, 13);
  const auto loss = make_builtin_loss("binomial");
  const auto kernel = KernelSpec::gaussian(0.7);
  FitOptions o;
  o.gradient_tolerance_per_obs = 1e-11;
  o.solver.max_iterations = 20000;
  const auto a = fit_convex_owl(d, loss, kernel, 0.2, o);
  TrialDataset scaled = d;
  scaled.rewards *= 3.0;
  o.gradient_tolerance_per_obs = 3e-11;
  const auto b = fit_convex_owl(scaled, loss, kernel, 0.6, o);
  // The Gram matrix is near singular, so compare fitted scores rather than coefficients.
  const Eigen::MatrixXd G = gram_matrix(kernel, d.covariates);
  const Eigen::VectorXd fa = G * a.rule.coefficients;
  const Eigen::VectorXd fb = G * b.rule.coefficients;
  EXPECT_LE((fa - fb).lpNorm<Eigen::Infinity>(), 1e-5) << a.status << ' ' << b.status;
  EXPECT_NEAR(a.rule.bias, b.rule.bias, 1e-5);
}

TEST(Fit, SeparableToyIsFittedExactly) {
  const TrialDataset d = separable_toy(40);
  const auto r = fit_convex_owl(d, make_builtin_loss("binomial"), KernelSpec::gaussian(0.3), 1e-3);
  const Vector t = r.rule.treatments(d.covariates);
  EXPECT_EQ(t, d.treatments);
}

TEST(Fit, ZeroRewardsGiveZeroFunction) {
  TrialDataset d = toy_data(12, 1, 14);
  d.rewards.setZero();
  const auto r = fit_convex_owl(d, make_builtin_loss("binomial"), KernelSpec::gaussian(1.0), 0.5);
  EXPECT_EQ(r.rule.coefficients, Vector::Zero(12));
  EXPECT_EQ(r.objective, 0.0);
}

TEST(Fit, NonconvexLossRejectedByConvexFitter) {
  const TrialDataset d = toy_data(5, 1, 15);
  EXPECT_THROW(fit_convex_owl(d, make_builtin_loss("sigmoid", {{"k", 1.0}}),
                              KernelSpec::gaussian(1.0), 1.0),
               std::invalid_argument);
}

TEST(Fit, DecideExamples) {
  FittedRule r;
  r.support = Matrix::Zero(1, 2);
  r.coefficients = Vector::Zero(1);
  r.kernel = KernelSpec::gaussian(1.0);
  r.bias = 1.5;
  const Vector x = (Vector(2) << 0.3, -0.2).finished();
  EXPECT_EQ(decide(r, x).score, 1.5);
  EXPECT_EQ(decide(r, x).treatment, 1);
  r.bias = -0.2;
  EXPECT_EQ(decide(r, x).treatment, -1);
  r.bias = 0.0;
  r.coefficients = Vector::Ones(1);
  EXPECT_EQ(decide(r, Vector::Zero(2)).score, 1.0);
  EXPECT_EQ(decide(r, Vector::Zero(2)).treatment, 1);
  r.coefficients = Vector::Zero(1);
  EXPECT_EQ(decide(r, x).treatment, 1);  // sign(0) = +1
  EXPECT_THROW(decide(r, Vector::Zero(3)), std::invalid_argument);
}

TEST(Fit, RuleIsPermutationInvariant) {
  const TrialDataset d = toy_data(20, 2, 16);
  const auto r = fit_convex_owl(d, make_builtin_loss("binomial"), KernelSpec::gaussian(0.6), 0.1);
  FittedRule p = r.rule;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::mt19937_64 rng(3);
  std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng);
  p.support = perm * r.rule.support;
  p.coefficients = perm * r.rule.coefficients;
  const TrialDataset probe = toy_data(50, 2, 17);
  EXPECT_TRUE(p.scores(probe.covariates).isApprox(r.rule.scores(probe.covariates), 1e-12));
}

TEST(Lbfgs, MinimizesRosenbrock) {
  auto fg = [](const Vector& x, Vector& g) {
    const double a = 1 - x(0), b = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = -2 * a - 400 * x(0) * b;
    g(1) = 200 * b;
    return a * a + 100 * b * b;
  };
  LbfgsOptions o;
  o.gradient_tolerance = 1e-10;
  const auto r = lbfgs_minimize(fg, (Vector(2) << -1.2, 1.0).finished(), o);
  EXPECT_TRUE(r.converged) << r.status;
  EXPECT_NEAR(r.x(0), 1.0, 1e-8);
  EXPECT_NEAR(r.x(1), 1.0, 1e-8);
}

TEST(Lbfgs, DeadlineThrowsTimeout) {
  auto fg = [](const Vector& x, Vector& g) {
    g = 2 * x;
    return x.squaredNorm();
  };
  LbfgsOptions o;
  o.deadline = std::chrono::steady_clock::now() - std::chrono::seconds(1);
  EXPECT_THROW(lbfgs_minimize(fg, Vector::Ones(3), o), Timeout);
}

TEST(Lbfgs, NonFiniteObjectiveIsReported) {
  auto fg = [](const Vector& x, Vector& g) {
    g = Vector::Constant(1, -1.0);
    return x(0) != 0.0 ? std::nan("") : 0.0;
  };
  EXPECT_THROW(lbfgs_minimize(fg, Vector::Zero(1), LbfgsOptions{}), NonFiniteObjective);
  EXPECT_THROW(lbfgs_minimize(fg, Vector::Ones(1), LbfgsOptions{}), NonFiniteObjective);
}
