#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvlab/analysis.hpp"

using namespace mvlab;

namespace {

ModelSpec defaults() { return builtin_model("mean-field-gaussian"); }

InitialLawSpec scalar_law(double m, double var) {
  return gaussian_initial(Eigen::VectorXd::Constant(1, m), Eigen::MatrixXd::Constant(1, 1, var));
}

double w1_to_law(const ParticleCloud& c, const GaussianLaw& g) { return w1_to_gaussian_1d(c, g); }

}  // namespace

TEST(FixedPoint, MatchesLyapunovLaw) {
  const auto spec = defaults();
  const auto floor = estimate_mc_floor(spec, 20000, 10);
  FixedPointOptions opt;
  opt.floor = floor;
  const auto r = picard_fixed_point(spec, 20000, floor.floor, 200, 11, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.gaps.back(), r.tolerance + r.mc_floor);
  const auto exact = exact_law_linear(spec, std::nullopt);
  EXPECT_LE(w1_to_law(r.final_cloud, exact), 3 * r.mc_floor);
  EXPECT_LE(r.fitted_rate, derived_constants(spec, 1e-3).chi + 0.05);
  EXPECT_EQ(r.iterations, r.gaps.size());
}

TEST(FixedPoint, NoiseFreeCenteredContractsToZero) {
  const auto spec = make_mean_field_model(false, {{"delta", 0.0}, {"m0", 0.0}});
  const auto floor = estimate_mc_floor(spec, 1000, 3);
  FixedPointOptions opt;
  opt.floor = floor;
  const double tol = std::max(floor.floor, 1e-300);
  const auto r = picard_fixed_point(spec, 1000, tol, 2000, 3, opt);
  ASSERT_TRUE(r.converged);
  const auto zero = ParticleCloud::from_values({0.0});
  EXPECT_LE(w1_clouds(r.final_cloud, zero), tol + r.mc_floor);
}

TEST(FixedPoint, InvariantToStartingLaw) {
  const auto spec = defaults();
  // stopping at gap <= tol + floor leaves a transient of order tol, so tol = floor
  const auto floor = estimate_mc_floor(spec, 20000, 20);
  FixedPointOptions a, b;
  a.floor = b.floor = floor;
  a.start = scalar_law(1.0, 0.25);
  b.start = scalar_law(-2.0, 1.0);
  const auto ra = picard_fixed_point(spec, 20000, floor.floor, 200, 21, a);
  const auto rb = picard_fixed_point(spec, 20000, floor.floor, 200, 22, b);
  ASSERT_TRUE(ra.converged && rb.converged);
  EXPECT_LE(w1_clouds(ra.final_cloud, rb.final_cloud), 3 * std::max(ra.mc_floor, rb.mc_floor));
}

TEST(FixedPoint, Refusals) {
  EXPECT_THROW(
      {
        try {
          picard_fixed_point(make_mean_field_model(false, {{"delta", 0.3}}), 1000, 0.01, 10, 1);
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::regime);
          throw;
        }
      },
      Error);
  EXPECT_THROW(picard_fixed_point(defaults(), 999, 0.01, 10, 1), Error);
  try {
    picard_fixed_point(defaults(), 1000, 1e-9, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
    EXPECT_NE(std::string(e.what()).find("N_ref"), std::string::npos);
  }
}

TEST(FixedPoint, GapRateFit) {
  std::vector<double> g;
  for (int k = 0; k < 20; ++k) g.push_back(std::pow(0.3, k));
  EXPECT_NEAR(fit_gap_rate(g, 0.0), 0.3, 1e-12);
  EXPECT_TRUE(std::isnan(fit_gap_rate({1e-9, 1e-9}, 1.0)));
}

TEST(Contraction, DefaultsCertified) {
  const auto spec = defaults();
  const auto r = contraction_certificate(spec, scalar_law(1.0, 0.25), scalar_law(-1.0, 1.0), 30, 1000, 10, 5);
  EXPECT_FALSE(r.degenerate);
  EXPECT_TRUE(r.certified);
  EXPECT_LE(r.slope, std::log(0.7) + 0.05);
  EXPECT_NEAR(r.chi, 0.7, 1e-12);
}

TEST(Contraction, EqualLawsAreDegenerate) {
  const auto law = scalar_law(1.0, 0.25);
  const auto r = contraction_certificate(defaults(), law, law, 10, 200, 3, 5);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isnan(r.slope));
  EXPECT_FALSE(r.certified);
}

TEST(Contraction, NoiseFreePointMassesDecayByNorm) {
  const auto spec = make_mean_field_model(false, {{"delta", 0.0}});
  const auto r = contraction_certificate(spec, scalar_law(0.0, 0.0), scalar_law(3.0, 0.0), 20, 10, 2, 5);
  EXPECT_NEAR(r.slope, std::log(0.5), 1e-12);
  EXPECT_NEAR(r.slope_stderr, 0.0, 1e-12);
}

TEST(Contraction, RegimeRefusal) {
  const auto spec = make_mean_field_model(false, {{"delta", 0.3}});
  EXPECT_THROW(contraction_certificate(spec, scalar_law(0, 1), scalar_law(1, 1), 5, 10, 2, 1), Error);
}

TEST(Chaos, FirstOrderIsZero) {
  const auto r = chaos_statistic(defaults(), 16, 1, 60, 30, 1, 4);
  EXPECT_EQ(r.statistic, 0.0);
  for (double v : r.per_function) EXPECT_EQ(v, 0.0);
}

TEST(Chaos, SubsetProductMeanMatchesEnumeration) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> y(7);
  for (double& v : y) v = u(gen);
  double s2 = 0, s3 = 0;
  int c2 = 0, c3 = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j) {
      s2 += y[i] * y[j];
      ++c2;
      for (int k = j + 1; k < 7; ++k) {
        s3 += y[i] * y[j] * y[k];
        ++c3;
      }
    }
  EXPECT_NEAR(subset_product_mean(y, 2), s2 / c2, 1e-14);
  EXPECT_NEAR(subset_product_mean(y, 3), s3 / c3, 1e-14);
}

TEST(Chaos, IndependentParticlesBelowFloor) {
  const auto spec = make_mean_field_model(false, {{"kappa", 0.0}});
  const auto r = chaos_statistic(spec, 64, 2, 600, 300, 7, 10);
  EXPECT_GE(r.statistic, 0.0);
  EXPECT_LE(r.statistic, r.mc_floor);
}

TEST(Chaos, DecreasesInN) {
  const auto spec = defaults();
  const auto small = chaos_statistic(spec, 32, 2, 600, 300, 8, 10);
  const auto large = chaos_statistic(spec, 256, 2, 600, 300, 8, 10);
  EXPECT_LE(large.statistic, small.statistic + 2 * std::hypot(small.stderr_, large.stderr_));
  EXPECT_GT(small.pair_correlation, 0.0);
}

TEST(Chaos, Errors) {
  EXPECT_THROW(chaos_statistic(defaults(), 8, 2, 15, 10, 1), Error);
  EXPECT_THROW(chaos_statistic(defaults(), 8, 9, 100, 10, 1), Error);
  auto spec = defaults();
  spec.unique_invariant = false;
  EXPECT_THROW(chaos_statistic(spec, 8, 2, 100, 10, 1), Error);
}

TEST(Chaos, BatteryIsFixed) {
  const auto a = chaos_battery(2), b = chaos_battery(2);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].v, b[j].v);
    EXPECT_EQ(a[j].b, b[j].b);
  }
}

TEST(Gronwall, ZeroCouplingIsIdentity) {
  const std::vector<double> b{1, 2, 0.5, 3}, c(4, 0.0);
  EXPECT_EQ(discrete_gronwall(b, c), b);
}

TEST(Gronwall, ConstantCaseByUnrolling) {
  for (double c0 : {0.1, 0.5, 2.0}) {
    const std::vector<double> b(10, 1.0), c(10, c0);
    const auto u = discrete_gronwall(b, c);
    // extremal sequence a_n = b_n + sum_{k<n} c_k a_k evaluated directly
    std::vector<double> a(10);
    for (int n = 0; n < 10; ++n) {
      a[n] = b[n];
      for (int k = 0; k < n; ++k) a[n] += c[k] * a[k];
      EXPECT_NEAR(u[n], a[n], 1e-12 * a[n]);
      EXPECT_NEAR(u[n], std::pow(1 + c0, n), 1e-12 * a[n]);
    }
  }
}

TEST(Gronwall, DominatesAdmissibleSequences) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> b(20), c(20), a(20);
    for (int i = 0; i < 20; ++i) {
      b[i] = 2 * u(gen);
      c[i] = 0.5 * u(gen);
    }
    for (int n = 0; n < 20; ++n) {
      double rhs = b[n];
      for (int k = 0; k < n; ++k) rhs += c[k] * a[k];
      a[n] = rhs * u(gen);
    }
    const auto bound = discrete_gronwall(b, c);
    for (int n = 0; n < 20; ++n) EXPECT_LE(a[n], bound[n] * (1 + 1e-12));
  }
}

TEST(Gronwall, MonotoneInInputs) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> b(15), c(15), b2(15), c2(15);
    for (int i = 0; i < 15; ++i) {
      b[i] = u(gen);
      c[i] = u(gen);
      b2[i] = b[i] + u(gen);
      c2[i] = c[i] + u(gen);
    }
    const auto lo = discrete_gronwall(b, c), hb = discrete_gronwall(b2, c), hc = discrete_gronwall(b, c2);
    for (int n = 0; n < 15; ++n) {
      EXPECT_LE(lo[n], hb[n]);
      EXPECT_LE(lo[n], hc[n]);
    }
  }
}

TEST(Gronwall, Errors) {
  const std::vector<double> b{1, -1}, c{0, 0}, shorter{0};
  EXPECT_THROW(discrete_gronwall(b, c), Error);
  EXPECT_THROW(discrete_gronwall(c, shorter), Error);
}

TEST(OnestepError, ConstantFunctionHasNoError) {
  const auto spec = defaults();
  const auto cloud = sample_initial(spec, 100, NoiseKey{1, NoiseStream::system, 0, 0, 0});
  const auto r = onestep_mc_error(spec, cloud, [](std::span<const double>) { return 0.7; }, 0.7, 50, 2);
  EXPECT_NEAR(r.mean_error, 0.0, 1e-14);
}

TEST(OnestepError, WithinBoundAndHalvesWhenNQuadruples) {
  const auto spec = defaults();
  auto f = [](std::span<const double> x) { return std::tanh(x[0]); };
  std::vector<OnestepReport> rs;
  for (std::size_t N : {100u, 400u}) {
    const auto cloud = sample_initial(spec, N, NoiseKey{3, NoiseStream::system, 0, 0, 0});
    rs.push_back(onestep_mc_error(spec, cloud, f, 1.0, 1000, 4));
  }
  EXPECT_TRUE(rs[0].within_bound);
  EXPECT_LE(rs[0].mean_error, 0.2 + rs[0].slack);
  EXPECT_LE(std::abs(rs[1].mean_error - rs[0].mean_error / 2), 2 * std::hypot(rs[1].stderr_, rs[0].stderr_ / 2));
}

TEST(TailEstimator, Examples) {
  const std::vector<double> zeros(100, 0.0), grid{0.1, 1.0};
  for (const auto& p : tail_estimator(zeros, grid).points) EXPECT_EQ(p.p_hat, 0.0);
  const std::vector<double> s{1, 2, 3, 4}, e{2.5};
  const auto c = tail_estimator(s, e);
  EXPECT_EQ(c.points[0].p_hat, 0.5);
  EXPECT_LE(c.points[0].lo, 0.5);
  EXPECT_GE(c.points[0].hi, 0.5);
  EXPECT_FALSE(c.reliable);
  EXPECT_THROW(tail_estimator(s, std::vector<double>{}), Error);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const auto spec = defaults();
  std::vector<SweepTarget> targets{[&](std::size_t n, const ParticleCloud& c) {
    return w1_to_gaussian_1d(c, exact_law_linear(spec, n));
  }};
  const auto a = sweep_w1(spec, {20, 80}, {1, 5, 10}, 6, 9, targets, 1);
  const auto b = sweep_w1(spec, {20, 80}, {1, 5, 10}, 6, 9, targets, 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(a.cells[0][i][j].mean, b.cells[0][i][j].mean);
      EXPECT_EQ(a.cells[0][i][j].stderr_, b.cells[0][i][j].stderr_);
    }
}

TEST(Sweep, LimitInterchangeOnExactData) {
  // W(n, N) = 2^{-n} + 1/sqrt(N): both iterated limits are 0
  SweepTable t;
  t.Ns = {100, 400, 1600};
  t.ns = {1, 2, 3, 4, 5, 6};
  t.cells.assign(1, std::vector<std::vector<SweepCell>>(3, std::vector<SweepCell>(6)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      t.cells[0][i][j] = {std::pow(2.0, -static_cast<double>(t.ns[j])) + 1 / std::sqrt(double(t.Ns[i])), 1e-3};
  const auto li = limit_interchange(t, 0);
  EXPECT_NEAR(li.n_then_N.value, std::pow(2.0, -4.0), 1e-12);
  EXPECT_NEAR(li.N_then_n.value, std::pow(2.0, -4.0), 1e-12);
  EXPECT_NEAR(li.difference, 0.0, 1e-12);
}

TEST(ParallelFor, RethrowsWorkerErrors) {
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw Error(ErrorKind::numeric, "boom");
                            }),
               Error);
}

TEST(LipschitzAudit, BuiltinHasNoViolations) {
  const auto a = audit_lipschitz(defaults(), 2000, 1);
  EXPECT_EQ(a.violations, 0u);
  EXPECT_LE(a.max_ratio, 1.0 + 1e-12);
  EXPECT_GT(a.max_ratio, 0.0);
}
