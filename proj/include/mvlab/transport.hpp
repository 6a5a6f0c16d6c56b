#pragma once

// Wasserstein-1 between uniform-weight empirical measures and against
// Gaussian laws: exact 1-D quantile coupling, exact assignment, entropic
// (Sinkhorn) brackets, and closed forms for Gaussians.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "mvlab/error.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

enum class W1Method { sorted_1d, assignment, sinkhorn, net_lower, gaussian };

inline const char* to_string(W1Method m) {
  switch (m) {
    case W1Method::sorted_1d: return "sorted-1d";
    case W1Method::assignment: return "assignment";
    case W1Method::sinkhorn: return "sinkhorn";
    case W1Method::net_lower: return "net-lower";
    case W1Method::gaussian: return "gaussian";
  }
  return "unknown";
}

struct W1Result {
  double value = 0.0;
  W1Method method = W1Method::sorted_1d;
  double lower = 0.0;
  double upper = 0.0;
  bool converged = true;
  bool truncated = false;

  static W1Result exact(double v, W1Method m) { return W1Result{v, m, v, v, true, false}; }
};

inline std::vector<double> sorted_values(const ParticleCloud& c) {
  if (c.dim() != 1) throw Error(ErrorKind::unsupported, "1-D transport needs d = 1");
  std::vector<double> v(c.values());
  std::sort(v.begin(), v.end());
  return v;
}

// W1 between two sorted samples with uniform weights, by integrating the
// difference of quantile functions over the common refinement of {i/N} and {j/M}.
inline double w1_sorted(const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t n = u.size(), m = v.size();
  if (n == 0 || m == 0) throw Error(ErrorKind::domain, "empty cloud");
  if (n == m) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(u[i] - v[i]);
    return s / static_cast<double>(n);
  }
  // Breakpoints measured in units of 1/(n m).
  std::size_t i = 0, j = 0;
  std::size_t t = 0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::size_t bi = (i + 1) * m, bj = (j + 1) * n;
    const std::size_t next = std::min(bi, bj);
    acc += std::abs(u[i] - v[j]) * static_cast<double>(next - t);
    t = next;
    if (bi == next) ++i;
    if (bj == next) ++j;
  }
  return acc / (static_cast<double>(n) * static_cast<double>(m));
}

inline W1Result w1_1d(const ParticleCloud& u, const ParticleCloud& v) {
  if (u.dim() != 1 || v.dim() != 1) throw Error(ErrorKind::unsupported, "w1_1d needs d = 1");
  return W1Result::exact(w1_sorted(sorted_values(u), sorted_values(v)), W1Method::sorted_1d);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Minimum-cost perfect matching by shortest augmenting paths with potentials
// (Hungarian method, O(n^3)). cost is row-major n x n. Returns row -> column.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline std::size_t& assignment_cap() {
  static std::size_t cap = 4096;
  return cap;
}

inline W1Result w1_assignment(const ParticleCloud& u, const ParticleCloud& v) {
  if (u.size() != v.size()) throw Error(ErrorKind::unsupported, "assignment needs equal N (use sinkhorn)");
  if (u.dim() != v.dim()) throw Error(ErrorKind::domain, "dimension mismatch");
  const std::size_t n = u.size();
  if (n == 0) throw Error(ErrorKind::domain, "empty cloud");
  if (n > assignment_cap())
    throw Error(ErrorKind::unsupported, "N = " + std::to_string(n) + " exceeds the assignment cap " +
                                            std::to_string(assignment_cap()));
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = euclidean(u.point(i), v.point(j));
  const auto match = solve_assignment(cost, n);
  // Sum in sorted order of cost for a representation-independent result.
  std::vector<double> picked(n);
  for (std::size_t i = 0; i < n; ++i) picked[i] = cost[i * n + match[i]];
  std::sort(picked.begin(), picked.end());
  double s = 0.0;
  for (double c : picked) s += c;
  return W1Result::exact(s / static_cast<double>(n), W1Method::assignment);
}

// Entropic transport with epsilon-scaling in the log domain. The bracket is
// [c-transform dual value, cost of the rounded feasible plan]; value is the
// rounded primal cost.
// L1 violation of the row marginals accepted as converged.
inline constexpr double kSinkhornTolerance = 1e-7;

inline W1Result w1_sinkhorn(const ParticleCloud& u, const ParticleCloud& v, double reg, std::size_t max_iters = 20000) {
  if (!(reg > 0.0)) throw Error(ErrorKind::domain, "sinkhorn regularization must be positive");
  if (u.dim() != v.dim()) throw Error(ErrorKind::domain, "dimension mismatch");
  const std::size_t n = u.size(), m = v.size();
  if (n == 0 || m == 0) throw Error(ErrorKind::domain, "empty cloud");
  std::vector<double> C(n * m);
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      C[i * m + j] = euclidean(u.point(i), v.point(j));
      cmax = std::max(cmax, C[i * m + j]);
    }
  const double la = -std::log(static_cast<double>(n)), lb = -std::log(static_cast<double>(m));
  const double a = 1.0 / static_cast<double>(n), b = 1.0 / static_cast<double>(m);
  std::vector<double> f(n, 0.0), g(m, 0.0), tmp(std::max(n, m));

  auto update_f = [&](double r) {
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        tmp[j] = (g[j] - C[i * m + j]) / r + lb;
        mx = std::max(mx, tmp[j]);
      }
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp(tmp[j] - mx);
      f[i] = -r * (mx + std::log(s));
    }
  };
  auto update_g = [&](double r) {
    for (std::size_t j = 0; j < m; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        tmp[i] = (f[i] - C[i * m + j]) / r + la;
        mx = std::max(mx, tmp[i]);
      }
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp(tmp[i] - mx);
      g[j] = -r * (mx + std::log(s));
    }
  };
  auto row_violation = [&](double r) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp((f[i] + g[j] - C[i * m + j]) / r + la + lb);
      err += std::abs(s - a);
    }
    return err;
  };

  double r = std::max(reg, cmax);
  std::size_t iters = 0;
  bool converged = false;
  while (true) {
    const bool final_stage = r <= reg;
    double viol = std::numeric_limits<double>::infinity();
    const std::size_t stage_cap = final_stage ? max_iters : std::max<std::size_t>(50, max_iters / 20);
    for (std::size_t k = 0; k < stage_cap && iters < max_iters; ++k, ++iters) {
      update_f(r);
      update_g(r);
      if (k % 5 == 4) {
        viol = row_violation(r);
        if (viol < (final_stage ? kSinkhornTolerance : 1e-6)) break;
      }
    }
    if (final_stage) {
      converged = row_violation(r) < kSinkhornTolerance;
      break;
    }
    r = std::max(reg, r / 2.0);
  }

  // Round the plan onto the transport polytope.
  std::vector<double> P(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) P[i * m + j] = std::exp((f[i] + g[j] - C[i * m + j]) / r + la + lb);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += P[i * m + j];
    const double scale = s > a ? a / s : 1.0;
    for (std::size_t j = 0; j < m; ++j) P[i * m + j] *= scale;
  }
  std::vector<double> col(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) col[j] += P[i * m + j];
  for (std::size_t j = 0; j < m; ++j) {
    const double scale = col[j] > b ? b / col[j] : 1.0;
    for (std::size_t i = 0; i < n; ++i) P[i * m + j] *= scale;
  }
  std::vector<double> er(n, a), ec(m, b);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      er[i] -= P[i * m + j];
      ec[j] -= P[i * m + j];
    }
  double er_mass = 0.0;
  for (double e : er) er_mass += std::max(0.0, e);
  double upper = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double pij = P[i * m + j];
      if (er_mass > 0.0) pij += std::max(0.0, er[i]) * std::max(0.0, ec[j]) / er_mass;
      upper += pij * C[i * m + j];
    }

  // Feasible dual by double c-transform.
  std::vector<double> gt(m), ft(n);
  for (std::size_t j = 0; j < m; ++j) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mn = std::min(mn, C[i * m + j] - f[i]);
    gt[j] = mn;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mn = std::min(mn, C[i * m + j] - gt[j]);
    ft[i] = mn;
  }
  double dual = 0.0;
  for (double x : ft) dual += a * x;
  for (double y : gt) dual += b * y;
  const double lower = std::clamp(dual, 0.0, upper);

  W1Result res;
  res.method = W1Method::sinkhorn;
  res.value = upper;
  res.lower = lower;
  res.upper = upper;
  res.converged = converged;
  return res;
}

// Inverse standard normal CDF (Acklam's rational approximation refined by a
// Halley step).
inline double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = stats::normal_cdf(x) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

// W1 between 1-D Gaussians: E|dm + ds Z| under the comonotone coupling.
inline double w1_gaussian_1d(const GaussianLaw& p, const GaussianLaw& q) {
  if (p.dim() != 1 || q.dim() != 1) throw Error(ErrorKind::unsupported, "w1_gaussian_1d needs d = 1");
  const double dm = p.mean[0] - q.mean[0];
  const double ds = std::abs(std::sqrt(std::max(0.0, p.cov(0, 0))) - std::sqrt(std::max(0.0, q.cov(0, 0))));
  if (ds < 1e-300) return std::abs(dm);
  const double a = dm / ds;
  return ds * (2 * stats::normal_pdf(a) + a * (2 * stats::normal_cdf(a) - 1));
}

// Exact W1 between a 1-D cloud and N(m, s^2): the integral of |F_N - Phi|
// evaluated piecewise in closed form.
inline double w1_to_gaussian_sorted(const std::vector<double>& x, double m, double s) {
  const std::size_t n = x.size();
  if (n == 0) throw Error(ErrorKind::domain, "empty cloud");
  if (s <= 0.0) {
    double acc = 0.0;
    for (double v : x) acc += std::abs(v - m);
    return acc / static_cast<double>(n);
  }
  // H(x) = integral_{-inf}^{x} Phi((t - m)/s) dt
  auto H = [&](double t) {
    const double z = (t - m) / s;
    return s * (z * stats::normal_cdf(z) + stats::normal_pdf(z));
  };
  // integral_{x}^{inf} (1 - Phi((t - m)/s)) dt
  auto J = [&](double t) {
    const double z = (t - m) / s;
    return s * (stats::normal_pdf(z) - z * stats::normal_cdf(-z));
  };
  // integral over [lo, hi] of (Phi - p), both computed without the large H offsets
  auto above = [&](double lo, double hi, double p) { return H(hi) - H(lo) - p * (hi - lo); };
  double acc = H(x.front()) + J(x.back());
  for (std::size_t k = 1; k < n; ++k) {
    const double lo = x[k - 1], hi = x[k];
    if (hi <= lo) continue;
    const double p = static_cast<double>(k) / static_cast<double>(n);
    const double c = m + s * normal_quantile(p);
    if (c <= lo) {
      acc += above(lo, hi, p);
    } else if (c >= hi) {
      acc += -above(lo, hi, p);
    } else {
      acc += -above(lo, c, p) + above(c, hi, p);
    }
  }
  return acc;
}

inline double w1_to_gaussian_1d(const ParticleCloud& cloud, const GaussianLaw& law) {
  if (cloud.dim() != 1 || law.dim() != 1) throw Error(ErrorKind::unsupported, "w1_to_gaussian_1d needs d = 1");
  return w1_to_gaussian_sorted(sorted_values(cloud), law.mean[0], std::sqrt(std::max(0.0, law.cov(0, 0))));
}

// Exact W1 between equal-or-unequal clouds where an exact method exists.
inline W1Result w1_exact(const ParticleCloud& u, const ParticleCloud& v) {
  if (u.dim() == 1 && v.dim() == 1) return w1_1d(u, v);
  return w1_assignment(u, v);
}

}  // namespace mvlab
