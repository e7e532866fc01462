#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "owlkit/losses.hpp"

using namespace owlkit;

namespace {

ParamMap params_for(const std::string& name) {
  if (name == "dwd") return {{"gamma", 0.5}};
  if (name == "arcx4") return {{"k", 3.0}};
  if (name == "sigmoid") return {{"k", 1.5}};
  return {};
}

std::vector<LossSpec> all_losses() {
  std::vector<LossSpec> out;
  for (const auto& n : builtin_loss_names()) out.push_back(make_builtin_loss(n, params_for(n)));
  for (auto [f, s2] : {std::pair{ConcaveFamily::acave, 0.2}, {ConcaveFamily::bcave, 2.0},
                       {ConcaveFamily::ccave, 0.5}, {ConcaveFamily::tcave, 1.0}})
    out.push_back(compose_cc(ConcaveComponent(f, s2)));
  return out;
}

bool near_kink(const LossSpec& l, double p) {
  for (double k : l.kinks)
    if (std::abs(p - k) < 1e-3) return true;
  return false;
}

}  // namespace

TEST(Losses, TableValues) {
  EXPECT_DOUBLE_EQ(make_builtin_loss("hinge")(0.0), 1.0);
  EXPECT_NEAR(make_builtin_loss("binomial")(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(make_builtin_loss("smoothed_ramp")(-2.0), 2.0);
  EXPECT_DOUBLE_EQ(make_builtin_loss("smoothed_ramp")(0.5), 0.25);
  EXPECT_DOUBLE_EQ(make_builtin_loss("smoothed_ramp")(-0.5), 2.0 - 0.25);
  EXPECT_DOUBLE_EQ(make_builtin_loss("truncated_quadratic")(-1.0), 4.0);
  EXPECT_DOUBLE_EQ(make_builtin_loss("dwd", {{"gamma", 0.5}})(2.0), 0.5);
  EXPECT_DOUBLE_EQ(make_builtin_loss("dwd", {{"gamma", 0.5}})(0.0), 4.0);
  EXPECT_NEAR(make_builtin_loss("arcx4", {{"k", 3.0}})(-1.0), 8.0, 1e-12);
  EXPECT_NEAR(make_builtin_loss("sigmoid", {{"k", 2.0}})(0.5), 1.0 - std::tanh(1.0), 1e-15);
}

TEST(Losses, Metadata) {
  for (const auto& n : builtin_loss_names()) {
    const auto l = make_builtin_loss(n, params_for(n));
    const bool nonconvex = n == "sigmoid" || n == "smoothed_ramp";
    EXPECT_EQ(l.is_convex, !nonconvex) << n;
    EXPECT_EQ(l.is_bounded(), nonconvex) << n;
    if (nonconvex) EXPECT_EQ(l.bound, 2.0) << n;
    EXPECT_EQ(l.value_at_zero, l(0.0)) << n;
  }
}

TEST(Losses, RejectsBadNamesAndParams) {
  EXPECT_THROW(make_builtin_loss("squared"), std::invalid_argument);
  EXPECT_THROW(make_builtin_loss("dwd"), std::invalid_argument);
  EXPECT_THROW(make_builtin_loss("dwd", {{"gamma", 0.0}}), std::invalid_argument);
  EXPECT_THROW(make_builtin_loss("arcx4", {{"k", 1.0}}), std::invalid_argument);
  EXPECT_THROW(make_builtin_loss("sigmoid", {{"k", -1.0}}), std::invalid_argument);
  EXPECT_THROW(make_loss("cc:dcave", {{"sigma_sq", 1.0}}), std::invalid_argument);
  EXPECT_THROW(make_loss("cc:ccave"), std::invalid_argument);
  EXPECT_THROW(ConcaveComponent(ConcaveFamily::ccave, 0.0), std::invalid_argument);
}

TEST(Losses, BinomialIsOverflowSafe) {
  const auto l = make_builtin_loss("binomial");
  EXPECT_NEAR(l(-1000.0), 700.0, 1e-9);  // clamped margin
  EXPECT_NEAR(l(40.0), std::exp(-40.0), 1e-25);
  EXPECT_TRUE(std::isfinite(l.derivative(-1e6)));
  EXPECT_NEAR(l.derivative(0.0), -0.5, 1e-15);
}

TEST(Losses, InvariantsOnGrid) {
  for (const auto& l : all_losses()) {
    double prev_p = -20.0, prev = l(prev_p);
    for (int i = 1; i <= 4000; ++i) {
      const double p = -20.0 + 40.0 * i / 4000.0;
      const double t = l(p);
      EXPECT_GE(t, 0.0) << l.name;
      if (l.is_bounded()) EXPECT_LE(t, l.bound + 1e-12) << l.name;
      if (std::isfinite(l.lipschitz))
        EXPECT_LE(std::abs(t - prev), l.lipschitz * (p - prev_p) + 1e-12) << l.name << " at " << p;
      prev = t;
      prev_p = p;
    }
  }
}

TEST(Losses, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-4.0, 4.0);
  for (const auto& l : all_losses()) {
    int checked = 0;
    while (checked < 100) {
      const double p = unif(rng);
      if (near_kink(l, p)) continue;
      const double h = 1e-5;
      const double fd = (l(p + h) - l(p - h)) / (2.0 * h);
      const double d = l.derivative(p);
      EXPECT_LE(std::abs(fd - d), 1e-5 * std::max(1.0, std::abs(d))) << l.name << " at " << p;
      ++checked;
    }
  }
}

TEST(Losses, ConvexLossesAreMidpointConvex) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  for (const auto& l : all_losses()) {
    if (!l.is_convex) continue;
    for (int i = 0; i < 200; ++i) {
      const double p = unif(rng), q = unif(rng);
      EXPECT_LE(l(0.5 * (p + q)), 0.5 * (l(p) + l(q)) + 1e-12) << l.name;
    }
  }
}

TEST(ConcaveComponent, Examples) {
  const ConcaveComponent c1(ConcaveFamily::ccave, 1.0);
  EXPECT_NEAR(compose_cc(c1)(0.0), 0.5, 1e-15);
  EXPECT_NEAR(supergradient_weight(c1, std::log(2.0)), 0.5, 1e-15);
  const ConcaveComponent t1(ConcaveFamily::tcave, 1.0);
  EXPECT_LT(compose_cc(t1)(50.0), 1e-20);
  EXPECT_EQ(supergradient_weight(t1, 0.2), 1.0);
  EXPECT_EQ(supergradient_weight(t1, 5.0), 0.0);
  EXPECT_EQ(supergradient_weight(t1, 1.0), 0.0);  // right derivative at the kink
  EXPECT_DOUBLE_EQ(compose_cc(ConcaveComponent(ConcaveFamily::bcave, 2.0)).lipschitz, 3.0);
  EXPECT_THROW(supergradient_weight(c1, -0.1), std::domain_error);
}

TEST(ConcaveComponent, ShapeInvariants) {
  for (auto f : {ConcaveFamily::acave, ConcaveFamily::bcave, ConcaveFamily::ccave,
                 ConcaveFamily::tcave}) {
    for (double s2 : {0.3, 1.0, 2.5}) {
      const ConcaveComponent g(f, s2);
      EXPECT_EQ(g.evaluate(0.0), 0.0) << g.name();
      double prev_w = g.supergradient(0.0), prev_g = 0.0;
      EXPECT_NEAR(prev_w, g.lipschitz(), 1e-12) << g.name();
      for (int i = 1; i <= 2000; ++i) {
        const double z = 10.0 * i / 2000.0;
        const double w = g.supergradient(z), v = g.evaluate(z);
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, prev_w + 1e-12) << g.name() << " z=" << z;
        EXPECT_GE(v, prev_g - 1e-15);
        EXPECT_LE(v, g.supremum() + 1e-15);
        prev_w = w;
        prev_g = v;
      }
    }
  }
}

TEST(ConcaveComponent, SupergradientIsTheDerivative) {
  for (auto f : {ConcaveFamily::acave, ConcaveFamily::bcave, ConcaveFamily::ccave}) {
    const ConcaveComponent g(f, 0.8);
    for (double z : {1e-6, 0.01, 0.1, 0.3, 0.35}) {
      const double h = 1e-7;
      const double fd = (g.evaluate(z + h) - g.evaluate(std::max(0.0, z - h))) / (z + h - std::max(0.0, z - h));
      EXPECT_NEAR(g.supergradient(z), fd, 1e-5) << g.name() << " z=" << z;
    }
  }
}

TEST(ConcaveComponent, CompositeConditions) {
  for (auto f : {ConcaveFamily::acave, ConcaveFamily::bcave, ConcaveFamily::ccave,
                 ConcaveFamily::tcave}) {
    const double s2 = f == ConcaveFamily::acave ? 0.2 : f == ConcaveFamily::bcave ? 2.0 : f == ConcaveFamily::tcave ? 1.0 : 0.5;
    const ConcaveComponent g(f, s2);
    const LossSpec t = compose_cc(g);
    double prev = t(-20.0);
    for (int i = 1; i <= 2000; ++i) {
      const double p = -20.0 + 40.0 * i / 2000.0;
      EXPECT_LE(t(p), prev + 1e-15) << t.name;
      EXPECT_GE(t(p) + t(-p), t.limit_pos + t.limit_neg - 1e-12) << t.name;
      prev = t(p);
    }
    EXPECT_LT(t(40.0), 1e-12);
  }
}

TEST(ConcaveComponent, ValidRanges) {
  const double l2 = std::log(2.0);
  EXPECT_TRUE(ConcaveComponent(ConcaveFamily::tcave, l2 * l2).in_valid_range());
  EXPECT_TRUE(ConcaveComponent(ConcaveFamily::tcave, 1.0).in_valid_range());
  EXPECT_FALSE(ConcaveComponent(ConcaveFamily::tcave, 4.0).in_valid_range());
  EXPECT_TRUE(ConcaveComponent(ConcaveFamily::ccave, 0.5).in_valid_range());
  EXPECT_FALSE(ConcaveComponent(ConcaveFamily::ccave, 1.0).in_valid_range());
  EXPECT_FALSE(ConcaveComponent(ConcaveFamily::bcave, 1.0).in_valid_range());
  // Out-of-range sigma warns but still builds.
  detail::warnings_enabled() = false;
  EXPECT_NO_THROW(make_loss("cc:ccave", {{"sigma", 2.0}}));
  detail::warnings_enabled() = true;
}
