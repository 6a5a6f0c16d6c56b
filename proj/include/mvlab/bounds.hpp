#pragma once

// Closed-form theoretical bounds: per-step and uniform-in-time concentration
// curves, the transport-inequality machinery behind the exponential ones, and
// the gate function for the i.i.d. exponential bound. All evaluators are pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>

#include "mvlab/error.hpp"

namespace mvlab::bounds {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// A probability bound clamped to [0, 1] together with its validity gate.
struct BoundValue {
  double value = 1.0;
  bool valid = false;    // the N-gate of the statement holds
  bool vacuous = false;  // the formula carries no information (returned 1)
  bool domain = false;   // a constant is undefined as a real number
  double gate = 0.0;     // smallest admissible N
};

inline double clamp01(double p) {
  if (std::isnan(p)) return 1.0;
  return std::clamp(p, 0.0, 1.0);
}

inline double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

struct PolyStepConstants {
  double a1 = 576.0;
  double a2 = 1.0 / 576.0;
  double a3 = 1.0;
  double alpha = 0.5;

  // Constants back-solved from the truncation proof with k1 = 1: a1 = 3^d * 576,
  // a2 = 1/576; a3 has no closed expression and defaults to 1.
  static PolyStepConstants defaults(std::size_t d, double alpha) {
    return {std::pow(3.0, static_cast<double>(d)) * 576.0, 1.0 / 576.0, 1.0, alpha};
  }
};

// a3 (exp(-a2 N eps^2 / R^2) + R^{-alpha} / eps), valid for N >= max{1, a1 (R/eps)^{d+2}}.
inline BoundValue poly_step_bound(double N, double eps, double R, std::size_t d, const PolyStepConstants& k) {
  if (!(eps > 0.0) || !(R > 0.0)) throw Error(ErrorKind::domain, "poly_step_bound needs eps, R > 0");
  BoundValue b;
  b.gate = std::max(1.0, k.a1 * std::pow(R / eps, static_cast<double>(d) + 2.0));
  b.valid = N >= b.gate;
  b.value = clamp01(k.a3 * (std::exp(-k.a2 * N * eps * eps / (R * R)) + std::pow(R, -k.alpha) / eps));
  return b;
}

// initial_term + C1 eps^{-(1+alpha)} N^{-alpha/(d+2)}, valid for N > N0 (max{1, log+ eps})^{(d+2)/d}.
inline BoundValue poly_uniform_bound(double N, double eps, double C1, double alpha, std::size_t d,
                                     double initial_term, double N0 = 1.0) {
  if (!(eps > 0.0)) throw Error(ErrorKind::domain, "poly_uniform_bound needs eps > 0");
  if (d < 1) throw Error(ErrorKind::domain, "dimension must be positive");
  const double dd = static_cast<double>(d);
  BoundValue b;
  b.gate = N0 * std::pow(std::max(1.0, log_plus(eps)), (dd + 2.0) / dd);
  b.valid = N > b.gate;
  b.value = clamp01(initial_term + C1 * std::pow(eps, -(1.0 + alpha)) * std::pow(N, -alpha / (dd + 2.0)));
  return b;
}

// initial_term + exp(-C1 eps N^{1/(d+2)}) for d > 1, with eps replaced by
// min(eps, 1) when d = 1.
inline BoundValue exp_uniform_bound(double N, double eps, double C1, std::size_t d, double initial_term,
                                    double N0 = 1.0) {
  if (d < 1) throw Error(ErrorKind::domain, "dimension must be at least 1");
  if (!(eps > 0.0)) throw Error(ErrorKind::domain, "exp_uniform_bound needs eps > 0");
  const double dd = static_cast<double>(d);
  const double small = std::pow(1.0 / eps * log_plus(1.0 / eps), dd + 2.0);
  const double other = d > 1 ? std::pow(eps, (dd + 2.0) / (dd - 1.0)) : 1.0;
  const double e = d == 1 ? std::min(eps, 1.0) : eps;
  BoundValue b;
  b.gate = N0 * std::max(small, other);
  b.valid = N >= b.gate;
  b.value = clamp01(initial_term + std::exp(-C1 * e * std::pow(N, 1.0 / (dd + 2.0))));
  return b;
}

// a1 exp(-N a2 min(eps^2, eps)); with square_only the exponent uses eps^2
// (the Gaussian-moment variant).
inline BoundValue iid_exp_bound(double N, double eps, double a1, double a2, double gate_value = 1.0,
                                double N0 = 1.0, bool square_only = false) {
  if (!(a2 > 0.0)) throw Error(ErrorKind::domain, "iid_exp_bound needs a2 > 0");
  if (!(eps > 0.0)) throw Error(ErrorKind::domain, "iid_exp_bound needs eps > 0");
  const double e = square_only ? eps * eps : std::min(eps * eps, eps);
  BoundValue b;
  b.gate = N0 * gate_value;
  b.valid = std::isfinite(b.gate) && N >= b.gate;
  b.value = clamp01(a1 * std::exp(-N * a2 * e));
  return b;
}

// ---------------------------------------------------------------------------
// Transport-inequality machinery.

// alpha(t) = (sqrt(t/C + 1/4) - 1/2)^2 for t >= 0, and 0 for t < 0.
inline double transport_alpha(double t, double C) {
  if (!(C > 0.0)) throw Error(ErrorKind::domain, "transport_alpha needs C > 0");
  if (t <= 0.0) return 0.0;
  // (sqrt(1/4 + x) - 1/2) = x / (sqrt(1/4 + x) + 1/2), stable for small x
  const double x = t / C;
  const double r = x / (std::sqrt(0.25 + x) + 0.5);
  return r * r;
}

// Convex conjugate sup_{t >= 0} {s t - alpha(t)} restricted to s >= 0:
// (Cs)^2 / (4 (1 - Cs)) for 0 <= Cs < 1, +inf beyond.
inline double alpha_star(double s, double C) {
  if (!(C > 0.0)) throw Error(ErrorKind::domain, "alpha_star needs C > 0");
  if (s <= 0.0) return 0.0;
  const double x = C * s;
  if (x >= 1.0) return kInf;
  return x * x / (4.0 * (1.0 - x));
}

// l(x) = x log x - x + 1 (with l(0) = 1).
inline double ell(double x) {
  if (x < 0.0) throw Error(ErrorKind::domain, "ell needs x >= 0");
  if (x == 0.0) return 1.0;
  return x * std::log(x) - x + 1.0;
}

struct PsiValue {
  double value = 0.0;
  bool domain = false;  // 2 l(x) <= 1: the logarithm is not positive
};

// psi(x) = x log(2 l(x)).
inline PsiValue psi(double x) {
  PsiValue p;
  const double two_l = 2.0 * ell(x);
  if (two_l <= 1.0) {
    p.domain = true;
    p.value = two_l > 0.0 ? x * std::log(two_l) : -kInf;
    return p;
  }
  p.value = x * std::log(two_l);
  return p;
}

struct EntropyConstant {
  double log_value = kInf;  // log C_t
  bool domain = false;      // C_t treated as +inf
};

// C_t = 2 (1 + psi(32/(zeta t))) 2^{c_d psi(32/(zeta t))^d}, returned as its logarithm.
inline EntropyConstant entropy_constant(double t, double zeta, double c_d, std::size_t d) {
  if (!(t > 0.0) || !(zeta > 0.0)) throw Error(ErrorKind::domain, "entropy_constant needs t, zeta > 0");
  EntropyConstant e;
  const PsiValue p = psi(32.0 / (zeta * t));
  if (p.domain) {
    e.domain = true;
    e.log_value = kInf;
    return e;
  }
  e.log_value = std::log(2.0) + std::log1p(p.value) +
                c_d * std::pow(p.value, static_cast<double>(d)) * std::numbers::ln2;
  return e;
}

// Gamma(C_t, N) = inf_{lambda > 0} (1 / lambda) { log C_t + N alpha*(lambda / N) }.
// With x = C lambda / N in (0, 1) the objective is
//   C log C_t / (N x) + C x / (4 (1 - x)),
// convex in x; minimized by golden section over log x.
inline double gamma_term(double log_Ct, double N, double C) {
  if (!(C > 0.0) || !(N > 0.0)) throw Error(ErrorKind::domain, "gamma_term needs N, C > 0");
  if (!std::isfinite(log_Ct)) return kInf;
  if (log_Ct <= 0.0) return 0.0;
  auto objective = [&](double y) {
    const double x = std::exp(y);
    return C * log_Ct / (N * x) + C * x / (4.0 * (1.0 - x));
  };
  double lo = -745.0, hi = std::log1p(-1e-15);
  // Narrow to the decade containing the minimum before golden section.
  double best_y = hi, best_f = objective(hi);
  for (double y = lo; y < hi; y += 0.5) {
    const double f = objective(y);
    if (f < best_f) {
      best_f = f;
      best_y = y;
    }
  }
  lo = std::max(-745.0, best_y - 0.5);
  hi = std::min(std::log1p(-1e-15), best_y + 0.5);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = objective(c), fd = objective(d);
  for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = objective(d);
    }
  }
  return std::min({fc, fd, best_f});
}

struct TransportBoundParams {
  double zeta0 = 1.0;  // exponential-moment scale: int e^{zeta0 |x|} d mu <= 2
  double c_d = 1.0;
  std::size_t d = 1;

  double C0() const {
    if (!(zeta0 > 0.0)) throw Error(ErrorKind::domain, "zeta0 must be positive");
    return 2.0 * std::numbers::sqrt2 / zeta0 * (1.5 + std::numbers::ln2);
  }
};

struct BoissardValue : BoundValue {
  double gamma = kInf;  // Gamma_0(C_t, N)
  double log_Ct = kInf;
};

// exp{-N alpha0(t/2 - Gamma0(C_t, N))}; 1 (vacuous) when t <= 2 Gamma0.
inline BoissardValue boissard_tail(double N, double t, const TransportBoundParams& p) {
  if (!(t > 0.0) || !(N > 0.0)) throw Error(ErrorKind::domain, "boissard_tail needs N, t > 0");
  BoissardValue b;
  const double C0 = p.C0();
  const auto ent = entropy_constant(t, p.zeta0, p.c_d, p.d);
  b.domain = ent.domain;
  b.log_Ct = ent.log_value;
  b.gamma = gamma_term(ent.log_value, N, C0);
  b.valid = true;
  b.gate = 1.0;
  const double arg = t / 2.0 - b.gamma;
  if (!(arg > 0.0)) {
    b.value = 1.0;
    b.vacuous = true;
    return b;
  }
  b.value = clamp01(std::exp(-N * transport_alpha(arg, C0)));
  return b;
}

// Upper estimate Gamma0 <= C0 / ((1 + N / log C_t)^{1/2} - 1).
inline double gamma_upper_estimate(double log_Ct, double N, double C0) {
  if (!std::isfinite(log_Ct)) return kInf;
  return C0 / (std::sqrt(1.0 + N / log_Ct) - 1.0);
}

// Linear-in-t exponential tail exp(-L1 N t) with L1 = 1/(48 C0), valid for
// t >= C0/2 and N >= N1(t), the smallest N with Gamma0(C_t, N) <= C0/8.
struct LinearTail : BoundValue {
  double L1 = 0.0;
};

inline double boissard_regime_N1(double t, const TransportBoundParams& p, double N_max = 1e18) {
  const double C0 = p.C0();
  const auto ent = entropy_constant(t, p.zeta0, p.c_d, p.d);
  if (ent.domain) return kInf;
  auto ok = [&](double N) { return gamma_term(ent.log_value, N, C0) <= C0 / 8.0; };
  double hi = 1.0;
  while (!ok(hi)) {
    hi *= 2.0;
    if (hi > N_max) return kInf;
  }
  double lo = std::max(1.0, hi / 2.0);
  if (ok(lo)) return lo;
  while (hi - lo > 1.0) {
    const double mid = std::floor((lo + hi) / 2.0);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline LinearTail linear_tail(double N, double t, const TransportBoundParams& p) {
  LinearTail b;
  const double C0 = p.C0();
  b.L1 = 1.0 / (48.0 * C0);
  b.gate = t >= C0 / 2.0 ? boissard_regime_N1(t, p) : kInf;
  b.valid = t >= C0 / 2.0 && N >= b.gate;
  b.value = clamp01(std::exp(-b.L1 * N * t));
  return b;
}

struct Varsigma {
  double value = kInf;
  double terms[5] = {1.0, kInf, kInf, kInf, kInf};
  bool domain = false;
};

// max{1, log C0_m / m^2, log C0_{gamma t} / (gamma t)^2, 1/t^2, 1/t} with m = gamma t / (delta M).
inline Varsigma varsigma1(double t, double gamma, double delta, double M, const TransportBoundParams& p) {
  if (!(t > 0.0) || !(gamma > 0.0) || !(M > 0.0) || !(delta >= 0.0))
    throw Error(ErrorKind::domain, "varsigma1 needs t, gamma, M > 0 and delta >= 0");
  Varsigma v;
  v.terms[0] = 1.0;
  if (delta == 0.0) {
    v.terms[1] = 0.0;  // m = +inf: the term vanishes
  } else {
    const double m = gamma * t / (delta * M);
    const auto e = entropy_constant(m, p.zeta0, p.c_d, p.d);
    v.domain = v.domain || e.domain;
    v.terms[1] = e.log_value / (m * m);
  }
  const double gt = gamma * t;
  const auto e2 = entropy_constant(gt, p.zeta0, p.c_d, p.d);
  v.domain = v.domain || e2.domain;
  v.terms[2] = e2.log_value / (gt * gt);
  v.terms[3] = 1.0 / (t * t);
  v.terms[4] = 1.0 / t;
  v.value = *std::max_element(std::begin(v.terms), std::end(v.terms));
  return v;
}

}  // namespace mvlab::bounds
