#pragma once

// Measurements built on the simulator: fixed-point iteration of the law map,
// contraction certificates, chaoticity statistics, the discrete Gronwall
// comparison, one-step Monte Carlo error, empirical tails, and (n, N) sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "mvlab/dynamics.hpp"
#include "mvlab/error.hpp"
#include "mvlab/keyed_rng.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/model.hpp"
#include "mvlab/stats.hpp"
#include "mvlab/transport.hpp"

namespace mvlab {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must be
// written to slot i so the outcome never depends on scheduling.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// W1 between two clouds with the exact method for their shape.
inline double w1_clouds(const ParticleCloud& a, const ParticleCloud& b) {
  if (a.dim() == 1) return w1_sorted(sorted_values(a), sorted_values(b));
  if (a.size() == b.size()) return w1_assignment(a, b).value;
  return w1_sinkhorn(a, b, 0.01).value;
}

// ---------------------------------------------------------------------------
// Monte Carlo floor c / sqrt(N_ref).

struct McFloor {
  double c = 0.0;
  double floor = 0.0;
  std::size_t pilot_size = 0;
};

// Pilot: independent interacting clouds of size N_p evolved for `steps`
// steps; for two independent empirical measures W1 ~ sqrt(2) E W1(mu^N, mu),
// so c = mean pairwise W1 * sqrt(N_p / 2).
inline McFloor estimate_mc_floor(const ModelSpec& spec, std::size_t N_ref, std::uint64_t seed, std::size_t steps = 40,
                                 std::size_t pairs = 4, std::size_t threads = 1) {
  McFloor out;
  out.pilot_size = std::min<std::size_t>(N_ref, spec.dim == 1 ? 20000 : 400);
  out.pilot_size = std::max<std::size_t>(out.pilot_size, 2);
  std::vector<double> gaps(pairs);
  parallel_for(pairs, threads, [&](std::size_t p) {
    const std::uint64_t rep = (std::uint64_t{1} << 61) + 2 * p;
    ParticleCloud a, b;
    for_each_step(spec, out.pilot_size, steps, seed, rep, [&](const ParticleCloud& c) { a = c; });
    for_each_step(spec, out.pilot_size, steps, seed, rep + 1, [&](const ParticleCloud& c) { b = c; });
    gaps[p] = w1_clouds(a, b);
  });
  const double mean_gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(pairs);
  out.c = mean_gap * std::sqrt(static_cast<double>(out.pilot_size) / 2.0);
  out.floor = out.c / std::sqrt(static_cast<double>(N_ref));
  return out;
}

// ---------------------------------------------------------------------------
// Fixed point of the law map by Picard iteration of its particle approximation.

struct FixedPointReport {
  ParticleCloud final_cloud;
  std::vector<double> gaps;  // W1(mu_k, mu_{k+1})
  double fitted_rate = std::nan("");
  std::size_t iterations = 0;
  bool converged = false;
  double mc_floor = 0.0;
  double floor_constant = 0.0;
  double tolerance = 0.0;
};

struct FixedPointOptions {
  std::optional<InitialLawSpec> start;  // defaults to the model's initial law
  std::size_t threads = 1;
  std::size_t min_particles = 1000;
  std::optional<McFloor> floor;  // reuse a previously fitted floor
  // Consecutive gaps that must sit below tol + floor before stopping; a single
  // gap can dip below the floor while the law is still in transit.
  std::size_t patience = 3;
};

// Geometric rate from the tail half of the gap sequence, ignoring gaps at the
// statistical floor.
inline double fit_gap_rate(const std::vector<double>& gaps, double floor) {
  std::vector<double> xs, ys;
  const std::size_t start = gaps.size() / 2;
  auto collect = [&](std::size_t from) {
    xs.clear();
    ys.clear();
    for (std::size_t k = from; k < gaps.size(); ++k)
      if (gaps[k] > 2.0 * floor && gaps[k] > 0.0) {
        xs.push_back(static_cast<double>(k));
        ys.push_back(std::log(gaps[k]));
      }
  };
  collect(start);
  if (xs.size() < 2) collect(0);
  if (xs.size() < 2) return std::nan("");
  return std::exp(stats::linear_fit(xs, ys).slope);
}

inline FixedPointReport picard_fixed_point(const ModelSpec& spec, std::size_t N_ref, double tol, std::size_t max_iter,
                                           std::uint64_t seed, const FixedPointOptions& opt = {}) {
  if (N_ref < opt.min_particles)
    throw Error(ErrorKind::domain, "fixed-point iteration needs N_ref >= " + std::to_string(opt.min_particles));
  const auto report = validate_model(spec, std::min(1e-3, 0.5 * derived_constants(spec, 1e-9).a0));
  if (!report.th2_regime)
    throw Error(ErrorKind::regime, "contraction regime fails (delta must be below a0 = " +
                                       std::to_string(report.constants.a0) + "): " + report.diagnostics_text());
  FixedPointReport out;
  out.tolerance = tol;
  const McFloor floor = opt.floor ? *opt.floor : estimate_mc_floor(spec, N_ref, seed, 40, 4, opt.threads);
  out.mc_floor = floor.floor;
  out.floor_constant = floor.c;
  if (out.mc_floor > tol)
    throw Error(ErrorKind::domain, "tolerance " + std::to_string(tol) + " is below the Monte Carlo floor " +
                                       std::to_string(out.mc_floor) + "; increase N_ref");
  const NoiseKey base{seed, NoiseStream::system, kReferenceReplicate, 0, 0};
  ParticleCloud cloud = opt.start ? sample_initial(*opt.start, N_ref, spec.dim, base) : sample_initial(spec, N_ref, base);
  std::size_t below = 0;
  for (std::size_t k = 0; k < max_iter; ++k) {
    ParticleCloud next = detail::at_step(k + 1, [&] { return step_interacting(cloud, spec, base); });
    const double gap = w1_clouds(cloud, next);
    out.gaps.push_back(gap);
    cloud = std::move(next);
    out.iterations = k + 1;
    below = gap <= tol + out.mc_floor ? below + 1 : 0;
    if (below >= std::max<std::size_t>(1, opt.patience)) {
      out.converged = true;
      break;
    }
  }
  out.fitted_rate = fit_gap_rate(out.gaps, out.mc_floor);
  out.final_cloud = std::move(cloud);
  return out;
}

// ---------------------------------------------------------------------------
// Contraction certificate from two synchronously coupled particle iterations.

struct ContractionReport {
  double slope = std::nan("");       // mean fitted slope of log W1 per step
  double slope_stderr = 0.0;
  double band = 0.0;                 // 2 standard errors
  double chi = 0.0;
  double log_chi = 0.0;
  bool degenerate = false;
  bool certified = false;            // slope <= log chi + band
  std::vector<double> replicate_slopes;
  std::vector<double> mean_gaps;     // average W1 over replicates, per step
  double floor = 0.0;
};

inline ContractionReport contraction_certificate(const ModelSpec& spec, const InitialLawSpec& law_a,
                                                 const InitialLawSpec& law_b, std::size_t n_steps, std::size_t N,
                                                 std::size_t reps, std::uint64_t seed, std::size_t threads = 1) {
  const auto report = validate_model(spec, std::min(1e-3, 0.5 * derived_constants(spec, 1e-9).a0));
  if (!report.th2_regime)
    throw Error(ErrorKind::regime, "contraction regime fails: " + report.diagnostics_text());
  if (reps == 0 || n_steps == 0) throw Error(ErrorKind::domain, "need at least one replicate and one step");
  ContractionReport out;
  out.chi = report.constants.chi;
  out.log_chi = std::log(out.chi);
  std::vector<std::vector<double>> gaps(reps, std::vector<double>(n_steps + 1, 0.0));
  parallel_for(reps, threads, [&](std::size_t r) {
    const NoiseKey base{seed, NoiseStream::coupling, r, 0, 0};
    ParticleCloud a = sample_initial(law_a, N, spec.dim, base);
    ParticleCloud b = sample_initial(law_b, N, spec.dim, base);
    gaps[r][0] = w1_clouds(a, b);
    for (std::size_t n = 0; n < n_steps; ++n) {
      auto next = detail::at_step(n + 1, [&] { return step_coupled(a, b, std::nullopt, std::nullopt, spec, base); });
      a = std::move(next.first);
      b = std::move(next.second);
      gaps[r][n + 1] = w1_clouds(a, b);
    }
  });
  out.mean_gaps.assign(n_steps + 1, 0.0);
  for (const auto& g : gaps)
    for (std::size_t n = 0; n <= n_steps; ++n) out.mean_gaps[n] += g[n] / static_cast<double>(reps);
  // Gaps at zero mean the two initial laws coincide at this resolution.
  out.floor = 1e-12 * std::max(1.0, out.mean_gaps[0]);
  if (out.mean_gaps[0] <= out.floor) {
    out.degenerate = true;
    return out;
  }
  for (const auto& g : gaps) {
    std::vector<double> xs, ys;
    for (std::size_t n = 0; n <= n_steps; ++n)
      if (g[n] > 1e-250) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(std::log(g[n]));
      }
    if (xs.size() >= 2) out.replicate_slopes.push_back(stats::linear_fit(xs, ys).slope);
  }
  if (out.replicate_slopes.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto ms = stats::mean_stderr(out.replicate_slopes);
  out.slope = ms.mean;
  out.slope_stderr = ms.stderr_;
  out.band = 2.0 * ms.stderr_;
  out.certified = out.slope <= out.log_chi + out.band;
  return out;
}

// ---------------------------------------------------------------------------
// Chaoticity surrogate.

inline constexpr std::uint64_t kChaosBatteryVersion = 1;
inline constexpr std::size_t kChaosBatterySize = 16;

struct TestFunction {
  std::vector<double> v;
  double b = 0.0;
  double operator()(std::span<const double> x) const {
    double s = b;
    for (std::size_t k = 0; k < x.size(); ++k) s += v[k] * x[k];
    return std::tanh(s);
  }
};

// tanh(<v, x> + b) with v ~ N(0, 9 I) and b ~ U(-1/2, 1/2) drawn from a fixed key.
inline std::vector<TestFunction> chaos_battery(std::size_t dim) {
  std::vector<TestFunction> out(kChaosBatterySize);
  for (std::size_t j = 0; j < kChaosBatterySize; ++j) {
    KeyedStream rng(NoiseKey{0xC4A05BA77E12ULL, NoiseStream::auxiliary, kChaosBatteryVersion, j, 0});
    out[j].v.resize(dim);
    for (double& c : out[j].v) c = 3.0 * rng.normal();
    out[j].b = rng.uniform() - 0.5;
  }
  return out;
}

struct ChaosReport {
  std::size_t k = 2;
  std::size_t N = 0;
  std::size_t window = 0;  // post-burn-in steps averaged
  std::size_t replicates = 0;
  double statistic = 0.0;  // mean over the battery of |E-hat[prod] - prod E-hat|
  double stderr_ = 0.0;
  double mc_floor = 0.0;
  double pair_correlation = 0.0;  // particles 1 and 2, first coordinate
  std::vector<double> per_function;
};

// Average over k-subsets of distinct particles of prod y_i, via elementary
// symmetric polynomials.
inline double subset_product_mean(std::span<const double> y, std::size_t k) {
  std::vector<double> e(k + 1, 0.0);
  e[0] = 1.0;
  for (double v : y)
    for (std::size_t j = k; j >= 1; --j) e[j] += v * e[j - 1];
  const double n = static_cast<double>(y.size()), kk = static_cast<double>(k);
  const double log_binom = std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1);
  return e[k] / std::exp(log_binom);
}

inline ChaosReport chaos_statistic(const ModelSpec& spec, std::size_t N, std::size_t k, std::size_t T,
                                   std::size_t burn_in, std::uint64_t seed, std::size_t replicates = 20,
                                   std::size_t threads = 1) {
  if (k < 1 || k > N) throw Error(ErrorKind::domain, "need 1 <= k <= N");
  if (!spec.unique_invariant) throw Error(ErrorKind::regime, "unique invariant measure not declared on the model");
  if (T < burn_in + 10) throw Error(ErrorKind::domain, "averaging window shorter than 10 steps");
  if (replicates < 2) throw Error(ErrorKind::domain, "need at least two replicates");
  const auto battery = chaos_battery(spec.dim);
  const std::size_t F = battery.size();
  const std::size_t W = T - burn_in;

  struct RepResult {
    std::vector<double> sum_u, sum_m, sum_m2;  // per function, over the window
    std::vector<double> batch_var;             // batch-means variance of the time-averaged mean
    double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
  };
  std::vector<RepResult> reps(replicates);
  parallel_for(replicates, threads, [&](std::size_t r) {
    RepResult& rr = reps[r];
    rr.sum_u.assign(F, 0.0);
    rr.sum_m.assign(F, 0.0);
    rr.sum_m2.assign(F, 0.0);
    std::vector<std::vector<double>> m_series(F);
    std::vector<double> y(N);
    for_each_step(spec, N, T, seed, r, [&](const ParticleCloud& c) {
      if (c.time() <= burn_in) return;
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t i = 0; i < N; ++i) y[i] = battery[f](c.point(i));
        const double m = subset_product_mean(y, 1);
        const double u = k == 1 ? m : subset_product_mean(y, k);
        rr.sum_u[f] += u;
        rr.sum_m[f] += m;
        m_series[f].push_back(m);
      }
      if (N >= 2) {
        const double a = c(0, 0), b = c(1, 0);
        rr.s1 += a;
        rr.s2 += b;
        rr.s11 += a * a;
        rr.s22 += b * b;
        rr.s12 += a * b;
      }
    });
    // 10 batches of the window for the variance of the time-averaged mean
    rr.batch_var.assign(F, 0.0);
    const std::size_t nb = 10, len = W / nb;
    for (std::size_t f = 0; f < F; ++f) {
      std::vector<double> bm(nb, 0.0);
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t t = b * len; t < (b + 1) * len; ++t) bm[b] += m_series[f][t];
        bm[b] /= static_cast<double>(len);
      }
      const auto ms = stats::mean_stderr(bm);
      rr.batch_var[f] = ms.stderr_ * ms.stderr_;
    }
  });

  ChaosReport out;
  out.k = k;
  out.N = N;
  out.window = W;
  out.replicates = replicates;
  out.per_function.assign(F, 0.0);
  const double Wd = static_cast<double>(W), Rd = static_cast<double>(replicates);
  double stat = 0.0, se_sum = 0.0, floor_sum = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    double su = 0.0, sm = 0.0, var_mbar = 0.0;
    std::vector<double> d_rep(replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
      su += reps[r].sum_u[f];
      sm += reps[r].sum_m[f];
      var_mbar += reps[r].batch_var[f];
      const double mu = reps[r].sum_u[f] / Wd, mm = reps[r].sum_m[f] / Wd;
      d_rep[r] = mu - std::pow(mm, static_cast<double>(k));
    }
    const double pooled_u = su / (Wd * Rd), pooled_m = sm / (Wd * Rd);
    const double D = k == 1 ? 0.0 : pooled_u - std::pow(pooled_m, static_cast<double>(k));
    out.per_function[f] = std::abs(D);
    stat += std::abs(D);
    const auto ms = stats::mean_stderr(d_rep);
    se_sum += ms.stderr_;
    // (pooled mean)^k carries a bias of order Var(pooled mean)
    floor_sum += 2.0 * ms.stderr_ + static_cast<double>(k) * var_mbar / (Rd * Rd);
  }
  out.statistic = stat / static_cast<double>(F);
  out.stderr_ = se_sum / static_cast<double>(F);
  out.mc_floor = floor_sum / static_cast<double>(F);
  if (N >= 2) {
    double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
    for (const auto& r : reps) {
      s1 += r.s1;
      s2 += r.s2;
      s11 += r.s11;
      s22 += r.s22;
      s12 += r.s12;
    }
    const double n = Wd * Rd;
    const double cov = s12 / n - (s1 / n) * (s2 / n);
    const double v1 = s11 / n - (s1 / n) * (s1 / n), v2 = s22 / n - (s2 / n) * (s2 / n);
    out.pair_correlation = v1 > 0 && v2 > 0 ? cov / std::sqrt(v1 * v2) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discrete Gronwall comparison.

// u_n = b_n + sum_{k<n} c_k b_k prod_{j=k+1}^{n-1} (1 + c_j); any a with
// a_n <= b_n + sum_{k<n} c_k a_k satisfies a_n <= u_n.
inline std::vector<double> discrete_gronwall(std::span<const double> b, std::span<const double> c) {
  if (b.size() != c.size()) throw Error(ErrorKind::domain, "b and c must have equal length");
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!(b[i] >= 0.0) || !(c[i] >= 0.0)) throw Error(ErrorKind::domain, "b and c must be nonnegative");
  std::vector<double> u(b.size());
  double s = 0.0;  // sum_{k<n} c_k b_k prod_{j=k+1}^{n-1} (1 + c_j)
  for (std::size_t n = 0; n < b.size(); ++n) {
    u[n] = b[n] + s;
    s = (1.0 + c[n]) * s + c[n] * b[n];
  }
  return u;
}

// ---------------------------------------------------------------------------
// One-step Monte Carlo error E|<f, m_1^N - m_0^N P>|.

struct OnestepReport {
  std::size_t N = 0;
  double mean_error = 0.0;
  double stderr_ = 0.0;
  double bound = 0.0;  // 2 ||f||_inf / sqrt(N)
  double slack = 0.0;  // inner-sample resolution plus 3 standard errors
  bool within_bound = false;
  std::size_t inner_draws = 0;
};

inline OnestepReport onestep_mc_error(const ModelSpec& spec, const ParticleCloud& cloud,
                                      const std::function<double(std::span<const double>)>& f, double f_sup,
                                      std::size_t reps, std::uint64_t seed, std::size_t inner_factor = 100,
                                      std::size_t threads = 1) {
  if (cloud.dim() != spec.dim) throw Error(ErrorKind::domain, "cloud dimension differs from the model");
  const std::size_t N = cloud.size();
  if (N == 0 || reps == 0) throw Error(ErrorKind::domain, "need particles and replicates");
  const MeasureView law = MeasureView::of(cloud);
  const std::size_t d = spec.dim;

  // <f, m_0 P> from inner_factor draws of the kernel per particle.
  std::vector<double> per_particle(N);
  parallel_for(N, threads, [&](std::size_t i) {
    std::vector<double> z(spec.noise.dim), drift(d), y(d);
    auto x = cloud.point(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < inner_factor; ++j) {
      spec.noise.draw(NoiseKey{seed, NoiseStream::auxiliary, j, i, cloud.time() + 1}, z);
      spec.interaction(x, law, z, drift);
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          s += spec.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
        y[r] = s + spec.delta * drift[r];
      }
      acc += f(y);
    }
    per_particle[i] = acc / static_cast<double>(inner_factor);
  });
  const double target = std::accumulate(per_particle.begin(), per_particle.end(), 0.0) / static_cast<double>(N);

  std::vector<double> errors(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const NoiseKey base{seed, NoiseStream::system, r, 0, 0};
    const ParticleCloud next = step_interacting(cloud, spec, base);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += f(next.point(i));
    errors[r] = std::abs(s / static_cast<double>(N) - target);
  });
  const auto ms = stats::mean_stderr(errors);
  OnestepReport out;
  out.N = N;
  out.mean_error = ms.mean;
  out.stderr_ = ms.stderr_;
  out.inner_draws = N * inner_factor;
  out.bound = 2.0 * f_sup / std::sqrt(static_cast<double>(N));
  out.slack = f_sup / std::sqrt(static_cast<double>(out.inner_draws)) + 3.0 * ms.stderr_;
  out.within_bound = out.mean_error <= out.bound + out.slack;
  return out;
}

// ---------------------------------------------------------------------------
// Empirical survival curve P(W > eps) with Wilson intervals.

struct TailPoint {
  double eps = 0.0;
  double p_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct TailCurve {
  std::vector<TailPoint> points;
  std::size_t samples = 0;
  bool reliable = false;  // at least 100 samples
};

inline TailCurve tail_estimator(std::span<const double> samples, std::span<const double> eps_grid) {
  if (eps_grid.empty()) throw Error(ErrorKind::domain, "empty epsilon grid");
  if (samples.empty()) throw Error(ErrorKind::domain, "no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  TailCurve out;
  out.samples = sorted.size();
  out.reliable = sorted.size() >= 100;
  for (double eps : eps_grid) {
    const auto above = static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), eps));
    const auto ci = stats::wilson_interval(above, sorted.size());
    out.points.push_back({eps, static_cast<double>(above) / static_cast<double>(sorted.size()), ci.lo, ci.hi});
  }
  return out;
}

// ---------------------------------------------------------------------------
// (N, n) sweeps of E W1(mu_n^N, target_n).

struct SweepCell {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct SweepTable {
  std::vector<std::size_t> Ns;
  std::vector<std::size_t> ns;  // recorded time indices
  // cells[target][iN][in]
  std::vector<std::vector<std::vector<SweepCell>>> cells;
  std::size_t replicates = 0;
};

// A target maps (time index, 1-D sorted cloud or general cloud) to a distance.
using SweepTarget = std::function<double(std::size_t n, const ParticleCloud& cloud)>;

inline SweepTable sweep_w1(const ModelSpec& spec, const std::vector<std::size_t>& Ns, const std::vector<std::size_t>& ns,
                           std::size_t replicates, std::uint64_t seed, const std::vector<SweepTarget>& targets,
                           std::size_t threads = 1) {
  if (Ns.empty() || ns.empty()) throw Error(ErrorKind::domain, "empty sweep grid");
  if (replicates < 2) throw Error(ErrorKind::domain, "need at least two replicates");
  SweepTable out;
  out.Ns = Ns;
  out.ns = ns;
  std::sort(out.ns.begin(), out.ns.end());
  out.ns.erase(std::unique(out.ns.begin(), out.ns.end()), out.ns.end());
  out.replicates = replicates;
  const std::size_t horizon = out.ns.back();
  const std::size_t nt = targets.size(), nn = out.ns.size();
  out.cells.assign(nt, std::vector<std::vector<SweepCell>>(Ns.size(), std::vector<SweepCell>(nn)));
  for (std::size_t iN = 0; iN < Ns.size(); ++iN) {
    // values[rep][target][time]
    std::vector<std::vector<std::vector<double>>> values(replicates,
                                                         std::vector<std::vector<double>>(nt, std::vector<double>(nn)));
    parallel_for(replicates, threads, [&](std::size_t r) {
      std::size_t slot = 0;
      for_each_step(spec, Ns[iN], horizon, seed + iN * 0x10001ULL, r, [&](const ParticleCloud& c) {
        if (slot < nn && c.time() == out.ns[slot]) {
          for (std::size_t t = 0; t < nt; ++t) values[r][t][slot] = targets[t](c.time(), c);
          ++slot;
        }
      });
    });
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t j = 0; j < nn; ++j) {
        std::vector<double> col(replicates);
        for (std::size_t r = 0; r < replicates; ++r) col[r] = values[r][t][j];
        const auto ms = stats::mean_stderr(col);
        out.cells[t][iN][j] = {ms.mean, ms.stderr_};
      }
  }
  return out;
}

// Iterated-limit estimates over a sweep table for one target. The n-limit is
// read as the largest value over the tail window of n (a limsup proxy), the
// N-limit as the intercept of a weighted fit in 1/sqrt(N).
struct LimitEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

struct LimitInterchange {
  LimitEstimate n_then_N;
  LimitEstimate N_then_n;
  double difference = 0.0;
  double combined_stderr = 0.0;
};

inline LimitEstimate extrapolate_in_N(const std::vector<std::size_t>& Ns, const std::vector<SweepCell>& cells) {
  if (Ns.size() < 2) return {cells.front().mean, cells.front().stderr_};
  std::vector<double> x(Ns.size()), y(Ns.size()), w(Ns.size());
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    x[i] = 1.0 / std::sqrt(static_cast<double>(Ns[i]));
    y[i] = cells[i].mean;
    const double se = std::max(cells[i].stderr_, 1e-300);
    w[i] = 1.0 / (se * se);
  }
  const auto fit = stats::linear_fit(x, y, w);
  return {fit.intercept, fit.intercept_stderr};
}

inline LimitInterchange limit_interchange(const SweepTable& table, std::size_t target, double window_fraction = 0.5) {
  const auto& cells = table.cells.at(target);
  const std::size_t nn = table.ns.size();
  const std::size_t first = std::min(nn - 1, static_cast<std::size_t>(std::floor(static_cast<double>(nn) * (1.0 - window_fraction))));
  LimitInterchange out;
  // n first: for each N the tail-window maximum, then extrapolate in N.
  std::vector<SweepCell> per_N(table.Ns.size());
  for (std::size_t iN = 0; iN < table.Ns.size(); ++iN) {
    SweepCell best{-std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t j = first; j < nn; ++j)
      if (cells[iN][j].mean > best.mean) best = cells[iN][j];
    per_N[iN] = best;
  }
  out.n_then_N = extrapolate_in_N(table.Ns, per_N);
  // N first: extrapolate each n, then the tail-window maximum.
  LimitEstimate best{-std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t j = first; j < nn; ++j) {
    std::vector<SweepCell> col(table.Ns.size());
    for (std::size_t iN = 0; iN < table.Ns.size(); ++iN) col[iN] = cells[iN][j];
    const auto e = extrapolate_in_N(table.Ns, col);
    if (e.value > best.value) best = e;
  }
  out.N_then_n = best;
  out.difference = std::abs(out.n_then_N.value - out.N_then_n.value);
  out.combined_stderr = std::hypot(out.n_then_N.stderr_, out.N_then_n.stderr_);
  return out;
}

// ---------------------------------------------------------------------------
// Probe-based audit of a declared Lipschitz bound.

struct LipschitzAudit {
  double max_ratio = 0.0;
  double declared = 0.0;
  std::size_t probes = 0;
  std::size_t violations = 0;
};

// Samples |f(x1, mu1, z) - f(x2, mu2, z)| / (|x1 - x2| + W1(mu1, mu2)) on random
// small clouds; a violation is a ratio above the declared ess-sup of D (or
// sigma when no bound is declared). Passing the audit proves nothing.
inline LipschitzAudit audit_lipschitz(const ModelSpec& spec, std::size_t probes, std::uint64_t seed,
                                      std::size_t cloud_size = 5) {
  LipschitzAudit out;
  out.declared = spec.lip.M ? *spec.lip.M : spec.lip.sigma;
  out.probes = probes;
  const std::size_t d = spec.dim;
  std::vector<double> z(spec.noise.dim), f1(d), f2(d), x1(d), x2(d);
  for (std::size_t p = 0; p < probes; ++p) {
    KeyedStream rng(NoiseKey{seed, NoiseStream::auxiliary, 7, p, 0});
    ParticleCloud c1(cloud_size, d), c2(cloud_size, d);
    const double s1 = std::exp(rng.normal()), s2 = std::exp(rng.normal());
    for (double& v : c1.data()) v = s1 * rng.normal();
    for (double& v : c2.data()) v = s2 * rng.normal() + rng.normal();
    for (auto& v : x1) v = rng.normal();
    for (auto& v : x2) v = rng.normal();
    spec.noise.draw(NoiseKey{seed, NoiseStream::auxiliary, 8, p, 0}, z);
    spec.interaction(x1, MeasureView::of(c1), z, f1);
    spec.interaction(x2, MeasureView::of(c2), z, f2);
    double num = 0.0, dx = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      num += (f1[k] - f2[k]) * (f1[k] - f2[k]);
      dx += (x1[k] - x2[k]) * (x1[k] - x2[k]);
    }
    const double denom = std::sqrt(dx) + w1_clouds(c1, c2);
    if (denom <= 0.0) continue;
    const double ratio = std::sqrt(num) / denom;
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (ratio > out.declared * (1.0 + 1e-12)) ++out.violations;
  }
  return out;
}

}  // namespace mvlab
