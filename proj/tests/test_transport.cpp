#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mvlab/transport.hpp"

using namespace mvlab;

namespace {

ParticleCloud random_cloud(std::mt19937_64& gen, std::size_t n, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  ParticleCloud c(n, d);
  for (double& v : c.data()) v = nd(gen);
  return c;
}

double brute_force(const ParticleCloud& u, const ParticleCloud& v) {
  std::vector<std::size_t> p(u.size());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += euclidean(u.point(i), v.point(p[i]));
    best = std::min(best, s / static_cast<double>(p.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

// integral of |F - G| over a fine grid, for 1-D oracle checks
template <class F, class G>
double cdf_gap_integral(F cdf_a, G cdf_b, double lo, double hi, std::size_t steps) {
  const double h = (hi - lo) / static_cast<double>(steps);
  double s = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double x = lo + (static_cast<double>(k) + 0.5) * h;
    s += std::abs(cdf_a(x) - cdf_b(x)) * h;
  }
  return s;
}

template <class F>
double simpson(F f, double a, double b, std::size_t pieces) {
  const double h = (b - a) / static_cast<double>(2 * pieces);
  double s = f(a) + f(b);
  for (std::size_t k = 1; k < 2 * pieces; ++k) s += f(a + h * static_cast<double>(k)) * (k % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace

TEST(W1Sorted, Examples) {
  EXPECT_EQ(w1_1d(ParticleCloud::from_values({1, 2, 3}), ParticleCloud::from_values({3, 1, 2})).value, 0.0);
  EXPECT_DOUBLE_EQ(w1_1d(ParticleCloud::from_values({0, 2}), ParticleCloud::from_values({1, 3})).value, 1.0);
  EXPECT_DOUBLE_EQ(w1_1d(ParticleCloud::from_values({0}), ParticleCloud::from_values({-2.5})).value, 2.5);
  EXPECT_THROW(w1_1d(ParticleCloud(2, 2), ParticleCloud(2, 2)), Error);
}

TEST(W1Sorted, UnequalSizesAgainstCdfIntegral) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 20; ++t) {
    auto u = random_cloud(gen, 3 + t, 1), v = random_cloud(gen, 7 + 2 * t, 1, 1.5);
    auto su = sorted_values(u), sv = sorted_values(v);
    auto ecdf = [](const std::vector<double>& s) {
      return [&s](double x) {
        return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / static_cast<double>(s.size());
      };
    };
    const double lo = std::min(su.front(), sv.front()) - 1, hi = std::max(su.back(), sv.back()) + 1;
    const double oracle = cdf_gap_integral(ecdf(su), ecdf(sv), lo, hi, 400000);
    EXPECT_NEAR(w1_sorted(su, sv), oracle, 1e-4);
  }
}

TEST(W1Sorted, RepeatedCloudMatchesOriginal) {
  std::mt19937_64 gen(2);
  auto u = random_cloud(gen, 5, 1), v = random_cloud(gen, 5, 1);
  auto sv = sorted_values(v);
  std::vector<double> twice;
  for (double x : sv) twice.insert(twice.end(), {x, x});
  EXPECT_NEAR(w1_sorted(sorted_values(u), twice), w1_sorted(sorted_values(u), sv), 1e-14);
}

TEST(W1Assignment, MatchesPermutationEnumeration) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + t % 7, d = 1 + t % 3;
    auto u = random_cloud(gen, n, d), v = random_cloud(gen, n, d);
    EXPECT_NEAR(w1_assignment(u, v).value, brute_force(u, v), 1e-10);
  }
}

TEST(W1Assignment, TwoDimensionalExample) {
  ParticleCloud u({0, 0, 1, 0, 0, 1}, 2), v({1, 1, 2, 0, 0, 2}, 2);
  EXPECT_NEAR(w1_assignment(u, v).value, brute_force(u, v), 1e-12);
}

TEST(W1Assignment, AgreesWithSortedIn1D) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 50; ++t) {
    auto u = random_cloud(gen, 30, 1), v = random_cloud(gen, 30, 1, 2.0);
    EXPECT_NEAR(w1_assignment(u, v).value, w1_1d(u, v).value, 1e-12);
  }
}

TEST(W1Assignment, ErrorsAndCap) {
  EXPECT_THROW(w1_assignment(ParticleCloud(2, 1), ParticleCloud(3, 1)), Error);
  const auto old = assignment_cap();
  assignment_cap() = 4;
  EXPECT_THROW(w1_assignment(ParticleCloud(5, 1), ParticleCloud(5, 1)), Error);
  assignment_cap() = old;
}

TEST(W1Assignment, MetricAxioms) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::size_t> size(1, 64);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = t < 50 ? size(gen) : 1 + t % 12;
    const std::size_t d = 1 + t % 3;
    auto a = random_cloud(gen, n, d), b = random_cloud(gen, n, d), c = random_cloud(gen, n, d);
    const double ab = w1_assignment(a, b).value, ba = w1_assignment(b, a).value;
    const double bc = w1_assignment(b, c).value, ac = w1_assignment(a, c).value;
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ac, ab + bc + 1e-12);
  }
  // zero iff equal multisets
  ParticleCloud u({1, 2, 3, 4}, 2), v({3, 4, 1, 2}, 2), w({3, 4, 1, 2.5}, 2);
  EXPECT_NEAR(w1_assignment(u, v).value, 0.0, 1e-15);
  EXPECT_GT(w1_assignment(u, w).value, 0.0);
}

TEST(W1Exact, ScalingAndTranslation) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = 1 + t % 3;
    auto u = random_cloud(gen, 12, d), v = random_cloud(gen, 12, d);
    const double base = w1_exact(u, v).value;
    for (double c : {-2.0, 0.5, 3.0}) {
      ParticleCloud cu = u, cv = v;
      for (double& x : cu.data()) x *= c;
      for (double& x : cv.data()) x *= c;
      EXPECT_NEAR(w1_exact(cu, cv).value, std::abs(c) * base, 1e-12);
    }
    ParticleCloud su = u, sv = v;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        su(i, k) += 0.7 * static_cast<double>(k + 1);
        sv(i, k) += 0.7 * static_cast<double>(k + 1);
      }
    EXPECT_NEAR(w1_exact(su, sv).value, base, 1e-12);
  }
}

TEST(W1Sinkhorn, IdenticalCloudsBracketZero) {
  std::mt19937_64 gen(7);
  auto u = random_cloud(gen, 20, 2);
  const double reg = 0.05;
  const auto r = w1_sinkhorn(u, u, reg);
  EXPECT_LE(r.lower, 1e-12);
  EXPECT_LE(r.upper - r.lower, 2 * reg * std::log(20.0));
  EXPECT_LE(r.lower, r.value);
  EXPECT_LE(r.value, r.upper);
}

TEST(W1Sinkhorn, BracketContainsAssignment) {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 1 + t % 7, d = 1 + t % 3;
    auto u = random_cloud(gen, n, d), v = random_cloud(gen, n, d);
    const auto r = w1_sinkhorn(u, v, 0.05);
    const double exact = w1_assignment(u, v).value;
    EXPECT_LE(r.lower, exact + 1e-9);
    EXPECT_GE(r.upper, exact - 1e-9);
  }
}

TEST(W1Sinkhorn, ApproachesAssignmentAsRegShrinks) {
  std::mt19937_64 gen(9);
  auto u = random_cloud(gen, 50, 2), v = random_cloud(gen, 50, 2);
  for (double& x : v.data()) x += 0.5;
  const double exact = w1_assignment(u, v).value;
  double prev_gap = std::numeric_limits<double>::infinity();
  for (double reg : {0.1, 0.05, 0.025}) {
    const auto r = w1_sinkhorn(u, v, reg);
    EXPECT_TRUE(r.converged) << reg;
    EXPECT_LE(r.lower, exact + 1e-9);
    EXPECT_GE(r.upper, exact - 1e-9);
    const double gap = r.value - exact;
    EXPECT_LE(gap, prev_gap + (r.upper - r.lower));
    prev_gap = gap;
  }
}

TEST(W1Sinkhorn, UnequalSizesIn1D) {
  std::mt19937_64 gen(10);
  auto u = random_cloud(gen, 9, 1), v = random_cloud(gen, 14, 1);
  const auto r = w1_sinkhorn(u, v, 0.01);
  const double exact = w1_1d(u, v).value;
  EXPECT_LE(r.lower, exact + 1e-9);
  EXPECT_GE(r.upper, exact - 1e-9);
  EXPECT_THROW(w1_sinkhorn(u, v, 0.0), Error);
}

TEST(W1Gaussian, ClosedFormCases) {
  const auto a = GaussianLaw::scalar(0, 1);
  EXPECT_EQ(w1_gaussian_1d(a, a), 0.0);
  EXPECT_NEAR(w1_gaussian_1d(a, GaussianLaw::scalar(1, 1)), 1.0, 1e-15);
  EXPECT_NEAR(w1_gaussian_1d(a, GaussianLaw::scalar(0, 4)), std::sqrt(2 / std::numbers::pi), 1e-14);
}

TEST(W1Gaussian, MatchesQuantileIntegration) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.2, 2.0), m(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const double m1 = m(gen), m2 = m(gen), s1 = u(gen), s2 = u(gen);
    // integral of |m1 - m2 + (s1 - s2) z| phi(z) dz by Simpson, split at the kink
    auto integrand = [&](double z) { return std::abs(m1 - m2 + (s1 - s2) * z) * stats::normal_pdf(z); };
    std::vector<double> cuts{-12.0, 12.0};
    if (s1 != s2) cuts.insert(cuts.begin() + 1, std::clamp((m2 - m1) / (s1 - s2), -12.0, 12.0));
    double acc = 0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) acc += simpson(integrand, cuts[c], cuts[c + 1], 20000);
    EXPECT_NEAR(w1_gaussian_1d(GaussianLaw::scalar(m1, s1 * s1), GaussianLaw::scalar(m2, s2 * s2)), acc, 1e-10);
  }
}

TEST(W1ToGaussian, MatchesCdfIntegral) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 10; ++t) {
    auto c = random_cloud(gen, 5 + 10 * t, 1, 1.3);
    const double m = 0.2, s = 0.8;
    auto sv = sorted_values(c);
    auto ecdf = [&](double x) {
      return static_cast<double>(std::upper_bound(sv.begin(), sv.end(), x) - sv.begin()) / static_cast<double>(sv.size());
    };
    auto phi = [&](double x) { return stats::normal_cdf((x - m) / s); };
    // breakpoints: sample points and the crossings phi(x) = k / N found by bisection
    std::vector<double> cuts{-15.0, 15.0};
    cuts.insert(cuts.end(), sv.begin(), sv.end());
    for (std::size_t k = 1; k < sv.size(); ++k) {
      double lo = -15, hi = 15;
      for (int it = 0; it < 200; ++it) {
        const double mid = (lo + hi) / 2;
        (phi(mid) < static_cast<double>(k) / static_cast<double>(sv.size()) ? lo : hi) = mid;
      }
      cuts.push_back(lo);
    }
    std::sort(cuts.begin(), cuts.end());
    double oracle = 0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double a = cuts[k], b = cuts[k + 1];
      if (b <= a) continue;
      const double level = ecdf((a + b) / 2);
      oracle += simpson([&](double x) { return std::abs(level - phi(x)); }, a, b, 200);
    }
    EXPECT_NEAR(w1_to_gaussian_1d(c, GaussianLaw::scalar(m, s * s)), oracle, 1e-6);
  }
}

TEST(W1ToGaussian, PointMassAndQuantile) {
  const auto c = ParticleCloud::from_values({1.0, 3.0});
  EXPECT_DOUBLE_EQ(w1_to_gaussian_1d(c, GaussianLaw::scalar(2.0, 0.0)), 1.0);
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.77, 0.999}) EXPECT_NEAR(stats::normal_cdf(normal_quantile(p)), p, 1e-14 + 1e-12 * p);
}
