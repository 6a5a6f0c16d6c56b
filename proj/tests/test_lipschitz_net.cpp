#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvlab/lipschitz_net.hpp"

using namespace mvlab;

TEST(CoveringCount, FormulaValues) {
  EXPECT_EQ(covering_count(1.0, 1.0, 1).value, 162.0L);
  EXPECT_EQ(covering_count(0.5, 1.0, 1).value, 9.0L);
  EXPECT_EQ(covering_count(1e-3, 1.0, 1).value, 1.0L);
  // identity reading of the bracket: (2R/eps)(sqrt d + 1) = 2.4 -> 3^{2.4}
  const auto id = covering_count(0.6, 1.0, 1, BracketMode::identity);
  EXPECT_NEAR(static_cast<double>(id.value), 2 * 0.6 * std::pow(3.0, 2.4), 1e-9);
  EXPECT_NEAR(static_cast<double>(covering_count(0.6, 1.0, 1).value), 10.8, 1e-12);
}

TEST(CoveringCount, OverflowIsFlagged) {
  const auto c = covering_count(50.0, 1.0, 3);
  EXPECT_TRUE(c.overflow);
  EXPECT_TRUE(std::isinf(static_cast<double>(c.value)));
  EXPECT_GT(c.log_value, 1e5);
  EXPECT_THROW(covering_count(0.0, 1.0, 1), Error);
}

TEST(BuildNet, FamilySizeWithinCount) {
  for (bool anchored : {true, false}) {
    EXPECT_LE(static_cast<long double>(build_net(1.0, 1.0, 1, 0, anchored).size()), covering_count(1.0, 1.0, 1).value);
    for (double r : {0.3, 0.6, 1.0, 1.2, 1.5, 2.0, 2.5, 3.0})
      EXPECT_LE(static_cast<long double>(build_net(r, 1.0, 1, 0, anchored).size()), covering_count(r, 1.0, 1).value)
          << r << anchored;
    for (double r : {0.3, 0.8, 1.0})
      EXPECT_LE(static_cast<long double>(build_net(r, 1.0, 2, 0, anchored).size()), covering_count(r, 1.0, 2).value)
          << r << anchored;
  }
}

TEST(BuildNet, CoarseResolutionCollapses) {
  // eps >= 2R: every 1-Lipschitz function on [-R,R] with |f| <= R is within eps of 0
  for (bool anchored : {true, false}) EXPECT_LE(build_net(1.0, 2.0, 1, 0, anchored).size(), 3u);
}

TEST(BuildNet, ExhaustiveMatchesWalkCount) {
  // anchored, d = 1: 3^K tables
  const auto net = build_net(2.0, 1.0, 1, 0, true);
  EXPECT_EQ(net.intervals, 4u);
  EXPECT_EQ(net.size(), 81u);
  // non-anchored, 2R/eps = 2.2: K = 3, values in {-h, 0, h}; 41 walks over 4 nodes
  EXPECT_EQ(build_net(1.0, 0.9, 1, 0, false).size(), 41u);
  // R <= eps: every admissible function is within eps of 0
  EXPECT_EQ(build_net(1.0, 1.0, 1, 0, false).size(), 1u);
}

TEST(BuildNet, MembersAreOneLipschitzAndAnchored) {
  std::mt19937_64 gen(1);
  for (std::size_t d : {1u, 2u, 3u}) {
    const auto net = d <= 2 ? build_net(0.8, 0.5, d, 40, true, 3) : build_net(1.0, 0.5, d, 40, true, 3);
    ASSERT_GT(net.size(), 0u);
    std::uniform_real_distribution<double> u(-net.R, net.R);
    for (std::size_t m = 0; m < net.size(); ++m) {
      std::vector<double> zero(d, 0.0);
      EXPECT_NEAR(net.evaluate(m, zero), 0.0, 1e-12);
      for (int t = 0; t < 1000 / static_cast<int>(net.size()) + 5; ++t) {
        std::vector<double> x(d), y(d);
        for (auto& v : x) v = u(gen);
        for (auto& v : y) v = u(gen);
        EXPECT_LE(std::abs(net.evaluate(m, x) - net.evaluate(m, y)), ParticleCloud::norm([&] {
                                                                          std::vector<double> z(d);
                                                                          for (std::size_t k = 0; k < d; ++k) z[k] = x[k] - y[k];
                                                                          return z;
                                                                        }()) + 1e-12);
      }
    }
  }
}

TEST(BuildNet, SampledIsClampedAndDeterministic) {
  const auto full = build_net(1.0, 1.0, 1, 0, true);
  const auto clamped = build_net(1.0, 1.0, 1, 10000, true, 5);
  EXPECT_EQ(clamped.size(), full.size());
  const auto a = build_net(3.0, 0.2, 1, 50, false, 9), b = build_net(3.0, 0.2, 1, 50, false, 9);
  EXPECT_EQ(a.members, b.members);
  EXPECT_EQ(a.size(), 50u);
  for (const auto& g : a.members)
    for (double v : g) EXPECT_LE(std::abs(v), 3.0 + 1e-12);
}

TEST(BuildNet, ExhaustiveNeedsLowDimension) { EXPECT_THROW(build_net(1.0, 0.5, 3, 0), Error); }

TEST(NetLower, SandwichAgainstExactIn1D) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double eps = 0.25;
  const auto net = build_net(1.0, eps, 1, 0, true);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + t % 50;
    ParticleCloud a(n, 1), b(n, 1);
    for (double& v : a.data()) v = u(gen);
    for (double& v : b.data()) v = 0.6 * u(gen) + 0.2;
    const double exact = w1_1d(a, b).value;
    const auto r = w1_net_lower(a, b, net);
    EXPECT_LE(r.value, exact + 1e-12);
    EXPECT_GE(r.value, exact - 2 * eps);
    EXPECT_FALSE(r.truncated);
    EXPECT_GE(r.upper, exact);
  }
}

TEST(NetLower, IdenticalCloudsAndSingleFunction) {
  const auto net = build_net(1.0, 0.5, 1, 0, true);
  const auto a = ParticleCloud::from_values({0.1, -0.4, 0.9});
  EXPECT_EQ(w1_net_lower(a, a, net).value, 0.0);
  LipschitzNet id;
  id.R = 2.0;
  id.eps = 0.5;
  id.intervals = 1;
  id.spacing = 4.0;
  id.members = {{-2.0, 2.0}};  // g(x) = x on [-2, 2]
  const auto b = ParticleCloud::from_values({1.5, -0.2});
  EXPECT_NEAR(w1_net_lower(a, b, id).value, std::abs(0.2 - 0.65), 1e-15);
}

TEST(NetLower, ClippingIsFlagged) {
  const auto net = build_net(1.0, 0.5, 1, 0, true);
  const auto r = w1_net_lower(ParticleCloud::from_values({5.0}), ParticleCloud::from_values({0.0}), net);
  EXPECT_TRUE(r.truncated);
  EXPECT_TRUE(std::isinf(r.upper));
  EXPECT_THROW(w1_net_lower(ParticleCloud::from_values({0.0}), ParticleCloud::from_values({0.0}), LipschitzNet{}), Error);
}

TEST(NetLower, DualitySandwichIn2D) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto net = build_net(1.0, 0.8, 2, 300, true, 4);
  for (int t = 0; t < 10; ++t) {
    ParticleCloud a(6, 2), b(6, 2);
    for (double& v : a.data()) v = u(gen);
    for (double& v : b.data()) v = u(gen);
    const double lower = w1_net_lower(a, b, net).value;
    const double exact = w1_assignment(a, b).value;
    const auto s = w1_sinkhorn(a, b, 0.02);
    EXPECT_LE(lower, exact + 1e-12);
    EXPECT_LE(exact, s.upper + 1e-9);
  }
}
