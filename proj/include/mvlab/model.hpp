#pragma once

// Problem data for X_{n+1} = A X_n + delta f(X_n, mu_n, eps_{n+1}), the
// closed-form constants that decide which convergence regime applies, and the
// built-in mean-field models with exactly known Lipschitz data.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlab/error.hpp"
#include "mvlab/keyed_rng.hpp"
#include "mvlab/measure.hpp"

namespace mvlab {

using NoiseSampler = std::function<void(const NoiseKey&, std::span<double>)>;
using InteractionFn = std::function<void(std::span<const double> x, const MeasureView& mu,
                                         std::span<const double> z, std::span<double> out)>;

enum class NoiseFamily { gaussian, bounded_uniform, custom };

inline const char* to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::bounded_uniform: return "bounded-uniform";
    case NoiseFamily::custom: return "custom";
  }
  return "custom";
}

struct NoiseSpec {
  std::size_t dim = 1;
  NoiseFamily family = NoiseFamily::gaussian;
  // standard deviation for gaussian, half-width of the box for bounded-uniform
  double scale = 1.0;
  NoiseSampler sampler;

  void draw(const NoiseKey& key, std::span<double> out) const { sampler(key, out); }
};

inline NoiseSpec gaussian_noise(std::size_t dim, double sd) {
  NoiseSpec s{dim, NoiseFamily::gaussian, sd, {}};
  s.sampler = [sd](const NoiseKey& key, std::span<double> out) {
    KeyedStream rng(key);
    for (double& v : out) v = sd * rng.normal();
  };
  return s;
}

inline NoiseSpec uniform_box_noise(std::size_t dim, double half_width) {
  NoiseSpec s{dim, NoiseFamily::bounded_uniform, half_width, {}};
  s.sampler = [half_width](const NoiseKey& key, std::span<double> out) {
    KeyedStream rng(key);
    for (double& v : out) v = half_width * (2.0 * rng.uniform() - 1.0);
  };
  return s;
}

// Integrals of the Lipschitz modulus D and of D_1(z) = |f(0, delta_0, z)|
// against the noise law. Declared by the model author; never inferred.
struct LipschitzData {
  double sigma = 0.0;         // int D dtheta
  double c0 = 0.0;            // int D_1 dtheta
  double alpha = 0.0;         // moment exponent (0 = not declared)
  double sigma1_alpha = std::numeric_limits<double>::infinity();  // int D^{1+alpha}
  double c1_alpha = std::numeric_limits<double>::infinity();      // int D_1^{1+alpha}
  std::optional<double> M;          // ess sup of D
  std::optional<double> exp_alpha;  // exponential moment exponent
  std::optional<double> omega;      // override; default is -log ||A||
};

enum class InitialKind { iid, exchangeable };

struct InitialLawSpec {
  InitialKind kind = InitialKind::iid;
  // Draws X_0^i for the particle named in the key.
  NoiseSampler sampler;
  // Marginal law of X_0^i when Gaussian.
  std::optional<GaussianLaw> law;
  // Declared finiteness of E|X_0|^{1+alpha} and of an exponential moment.
  bool polynomial_moment = true;
  bool exponential_moment = true;

  void draw(const NoiseKey& key, std::span<double> out) const { sampler(key, out); }
};

// Symmetric square root of a PSD matrix (handles singular covariances).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Gaussian initial law. For the exchangeable family every particle receives
// the same N(0, shift_sd^2 I) shift drawn at the shared particle key.
inline InitialLawSpec gaussian_initial(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                       InitialKind kind = InitialKind::iid, double shift_sd = 0.0) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols())
    throw Error(ErrorKind::invalid_spec, "initial law mean/covariance dimension mismatch");
  InitialLawSpec s;
  s.kind = kind;
  const Eigen::MatrixXd root = psd_sqrt(cov);
  const double shift = kind == InitialKind::exchangeable ? shift_sd : 0.0;
  s.sampler = [mean, root, shift](const NoiseKey& key, std::span<double> out) {
    const auto d = mean.size();
    Eigen::VectorXd z(d);
    KeyedStream rng(key);
    for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.normal();
    Eigen::VectorXd x = mean + root * z;
    if (shift > 0.0) {
      KeyedStream shared(key.with_particle(kSharedParticle));
      for (Eigen::Index k = 0; k < d; ++k) x[k] += shift * shared.normal();
    }
    for (Eigen::Index k = 0; k < d; ++k) out[static_cast<std::size_t>(k)] = x[k];
  };
  GaussianLaw law{mean, cov};
  if (shift > 0.0) law.cov += shift * shift * Eigen::MatrixXd::Identity(mean.size(), mean.size());
  s.law = law;
  return s;
}

// f(x, mu, z) = kappa (mean(mu) - x) + z, with noise dimension equal to d.
struct AffineMeanField {
  double kappa = 1.0;
};

struct ModelSpec {
  std::string name = "custom";
  std::size_t dim = 1;
  Eigen::MatrixXd A;
  double delta = 0.0;
  InteractionFn interaction;
  std::optional<AffineMeanField> affine;
  NoiseSpec noise;
  LipschitzData lip;
  InitialLawSpec initial;
  // At most one invariant measure for every N (declared, not checked).
  bool unique_invariant = false;
  // Parameters used to build a built-in model; empty for custom models.
  std::map<std::string, double> builtin_params;
};

// Largest singular value by power iteration on A^T A.
inline double operator_norm(const Eigen::MatrixXd& A, int max_iter = 100000) {
  if (!A.allFinite()) throw Error(ErrorKind::invalid_spec, "matrix has non-finite entries");
  const Eigen::Index n = A.cols();
  if (n == 0) return 0.0;
  const Eigen::MatrixXd G = A.transpose() * A;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i) + 0.01 * static_cast<double>(i * i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = G * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / wn;
    if (it > 2 && std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Rayleigh quotient of the converged vector.
  lambda = v.dot(G * v);
  return std::sqrt(std::max(0.0, lambda));
}

// e^{-omega}: the declared override when present, else ||A||.
inline double contraction_factor(const ModelSpec& spec) {
  if (spec.lip.omega) return std::exp(-*spec.lip.omega);
  return operator_norm(spec.A);
}

struct DerivedConstants {
  double norm_A = 0.0;
  double exp_neg_omega = 0.0;  // e^{-omega}
  double omega = 0.0;          // +inf when A = 0
  double delta = 0.0;
  double sigma = 0.0;
  double gamma0 = 0.0;
  double a0 = 0.0;
  double chi = 0.0;
  double theta_rate = 0.0;
  std::optional<double> a_alpha;  // needs alpha > 0
  std::optional<double> kappa1;
  std::optional<double> chi1;  // need M
  std::optional<double> chi2;
  std::optional<double> M;
  double alpha = 0.0;
};

inline void check_spec_well_formed(const ModelSpec& spec) {
  if (spec.dim == 0) throw Error(ErrorKind::invalid_spec, "state dimension must be positive");
  if (static_cast<std::size_t>(spec.A.rows()) != spec.dim || static_cast<std::size_t>(spec.A.cols()) != spec.dim)
    throw Error(ErrorKind::invalid_spec, "A must be d x d");
  if (!spec.A.allFinite()) throw Error(ErrorKind::invalid_spec, "A has non-finite entries");
  if (!(spec.delta >= 0.0) || !std::isfinite(spec.delta))
    throw Error(ErrorKind::invalid_spec, "delta must be a finite nonnegative number");
  const auto& l = spec.lip;
  if (!(l.sigma >= 0.0) || !(l.c0 >= 0.0) || !std::isfinite(l.sigma) || !std::isfinite(l.c0))
    throw Error(ErrorKind::invalid_spec, "sigma and c0 must be finite and nonnegative");
  if (l.M && l.sigma > *l.M) throw Error(ErrorKind::invalid_spec, "sigma exceeds the declared bound M");
  if (!spec.interaction) throw Error(ErrorKind::invalid_spec, "interaction function missing");
  if (!spec.noise.sampler) throw Error(ErrorKind::invalid_spec, "noise sampler missing");
  if (!spec.initial.sampler) throw Error(ErrorKind::invalid_spec, "initial law sampler missing");
}

inline DerivedConstants derived_constants(const ModelSpec& spec, double gamma0) {
  check_spec_well_formed(spec);
  const auto& l = spec.lip;
  DerivedConstants c;
  c.norm_A = operator_norm(spec.A);
  if (l.omega && c.norm_A > std::exp(-*l.omega) + 1e-12)
    throw Error(ErrorKind::invalid_spec, "declared omega violates ||A|| <= e^{-omega}");
  c.exp_neg_omega = contraction_factor(spec);
  c.omega = c.exp_neg_omega > 0 ? -std::log(c.exp_neg_omega) : std::numeric_limits<double>::infinity();
  c.delta = spec.delta;
  c.sigma = l.sigma;
  c.gamma0 = gamma0;
  c.alpha = l.alpha;
  if (l.sigma == 0.0) throw Error(ErrorKind::domain, "sigma = 0: division by zero in a0 (degenerate interaction)");
  c.a0 = (1.0 - c.exp_neg_omega) / (2.0 * l.sigma);
  c.chi = c.exp_neg_omega + 2.0 * spec.delta * l.sigma;
  c.theta_rate = (1.0 - 2.0 * l.sigma * gamma0) / c.chi;
  if (l.alpha > 0.0 && std::isfinite(l.sigma1_alpha) && l.sigma1_alpha > 0.0) {
    const double a = l.alpha;
    c.a_alpha = (std::pow(4.0, -a) - std::pow(c.exp_neg_omega, 1.0 + a)) / (2.0 * l.sigma1_alpha);
    c.kappa1 = std::pow(4.0, a) * (std::pow(c.exp_neg_omega, 1.0 + a) +
                                   2.0 * std::pow(spec.delta, 1.0 + a) * l.sigma1_alpha);
  }
  if (l.M) {
    c.M = *l.M;
    c.chi1 = c.exp_neg_omega + spec.delta * *l.M;
    c.chi2 = c.exp_neg_omega + 2.0 * spec.delta * *l.M;
  }
  return c;
}

struct AssumptionFlags {
  bool a1 = false;  // int D dtheta finite
  bool a2 = false;  // int D_1 dtheta finite
  bool a3 = false;  // ||A|| <= e^{-omega}, omega > 0
  bool a4 = false;  // (1+alpha)-moments
  bool a5 = false;  // E W1(mu_0^N, mu_0) -> 0 premise (i.i.d. initial data with finite mean)
  bool a6 = false;  // at most one invariant measure (declared)
  bool a7 = false;  // bounded D and exponential moments
  bool iid_initial = false;
};

struct ValidationReport {
  AssumptionFlags assumptions;
  bool th2_regime = false;   // delta < a0
  bool th3_regime = false;   // delta < a0 and A4
  bool th5_regime = false;   // delta < min{a^{1/(1+alpha)}, a0 - gamma0}
  bool th6_regime = false;   // delta < min{a0 - gamma0, (1 - e^{-omega})/(2M)}
  bool thm6_regime = false;  // delta < (1 - e^{-omega} - gamma)/(2M)
  std::optional<double> gamma;
  DerivedConstants constants;
  std::vector<std::string> diagnostics;

  std::string diagnostics_text() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < diagnostics.size(); ++i) os << (i ? "; " : "") << diagnostics[i];
    return os.str();
  }
};

// Regime flags recomputed from the constants and assumption flags alone.
inline void derive_regimes(const DerivedConstants& c, const AssumptionFlags& a, std::optional<double> gamma,
                           ValidationReport& r, std::vector<std::string>* diag = nullptr) {
  const bool base = a.a1 && a.a2 && a.a3;
  r.th2_regime = base && c.delta >= 0.0 && c.delta < c.a0;
  r.th3_regime = r.th2_regime && a.a4;
  {
    bool ok = base && a.a4 && c.a_alpha.has_value() && *c.a_alpha > 0.0;
    if (ok) {
      const double lim = std::min(std::pow(*c.a_alpha, 1.0 / (1.0 + c.alpha)), c.a0 - c.gamma0);
      ok = c.delta < lim;
    } else if (diag) {
      diag->push_back("polynomial-concentration regime needs alpha > 0 with a(alpha) > 0");
    }
    r.th5_regime = ok;
  }
  if (!c.M) {
    r.th6_regime = false;
    r.thm6_regime = false;
    if (diag) diag->push_back("Assumption 3.7(i) unavailable");
    return;
  }
  const double M = *c.M;
  const double gap = 1.0 - c.exp_neg_omega;
  r.th6_regime = a.a3 && a.a7 && c.delta < std::min(c.a0 - c.gamma0, gap / (2.0 * M));
  if (!a.a7 && diag) diag->push_back("exponential moments not declared");
  if (gamma) {
    r.thm6_regime = a.a3 && a.a7 && a.iid_initial && *gamma > 0.0 && *gamma < gap &&
                    c.delta < (gap - *gamma) / (2.0 * M);
  } else {
    r.thm6_regime = false;
    if (diag) diag->push_back("i.i.d. exponential regime not requested (gamma absent)");
  }
}

inline ValidationReport validate_model(const ModelSpec& spec, double gamma0,
                                       std::optional<double> gamma = std::nullopt) {
  ValidationReport r;
  r.gamma = gamma;
  if (!(gamma0 > 0.0)) throw Error(ErrorKind::regime, "gamma0 must be positive");
  r.constants = derived_constants(spec, gamma0);
  const auto& c = r.constants;
  if (gamma0 >= c.a0)
    throw Error(ErrorKind::regime, "gamma0 = " + std::to_string(gamma0) + " must lie in (0, a0 = " +
                                       std::to_string(c.a0) + ")");
  const auto& l = spec.lip;
  auto& a = r.assumptions;
  a.a1 = std::isfinite(l.sigma);
  a.a2 = std::isfinite(l.c0);
  a.a3 = c.exp_neg_omega < 1.0 && c.norm_A <= c.exp_neg_omega + 1e-12;
  a.a4 = l.alpha > 0.0 && std::isfinite(l.sigma1_alpha) && std::isfinite(l.c1_alpha) && spec.initial.polynomial_moment;
  a.iid_initial = spec.initial.kind == InitialKind::iid;
  a.a5 = a.iid_initial;
  a.a6 = spec.unique_invariant;
  a.a7 = l.M.has_value() && l.exp_alpha.has_value() && spec.initial.exponential_moment;
  if (!a.a3) r.diagnostics.push_back("||A|| >= 1: no contraction exponent omega > 0");
  if (!a.a4) r.diagnostics.push_back("(1+alpha)-moments not declared");
  if (!a.a6) r.diagnostics.push_back("unique invariant measure not declared");
  derive_regimes(c, a, gamma, r, &r.diagnostics);
  if (!r.th2_regime)
    r.diagnostics.push_back("delta = " + std::to_string(spec.delta) + " is not below a0 = " + std::to_string(c.a0));
  return r;
}

// E|z|^p for z ~ N(0, sd^2 I_d).
inline double gaussian_abs_moment(double sd, std::size_t d, double p) {
  const double dd = static_cast<double>(d);
  return std::pow(sd, p) * std::pow(2.0, p / 2.0) * std::exp(std::lgamma((dd + p) / 2.0) - std::lgamma(dd / 2.0));
}

// E|z|^p for z uniform on [-b, b]^d (exact for d = 1, midpoint rule otherwise).
inline double uniform_box_abs_moment(double b, std::size_t d, double p) {
  if (d == 1) return std::pow(b, p) / (p + 1.0);
  const auto per_axis = static_cast<std::size_t>(std::max(
      2.0, std::floor(std::pow(4.0e6, 1.0 / static_cast<double>(d)))));
  std::vector<std::size_t> idx(d, 0);
  double total = 0.0;
  std::size_t count = 0;
  const double h = 2.0 / static_cast<double>(per_axis);
  while (true) {
    double r2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double u = -1.0 + (static_cast<double>(idx[k]) + 0.5) * h;
      r2 += u * u;
    }
    total += std::pow(r2, p / 2.0);
    ++count;
    std::size_t k = 0;
    while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == d) break;
  }
  return std::pow(b, p) * total / static_cast<double>(count);
}

namespace detail {

inline double take_param(std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double v = it->second;
  params.erase(it);
  return v;
}

inline InteractionFn affine_mean_field(double kappa) {
  return [kappa](std::span<const double> x, const MeasureView& mu, std::span<const double> z,
                 std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k)
      out[k] = kappa * (mu.mean[static_cast<Eigen::Index>(k)] - x[k]) + z[k];
  };
}

}  // namespace detail

// Mean-field model f = kappa (mean(mu) - x) + z without the kappa > 0 check;
// kappa = 0 gives independent particles. builtin_model() is the public entry.
inline ModelSpec make_mean_field_model(bool bounded, std::map<std::string, double> params) {
  const std::map<std::string, double> original = params;
  const double dval = detail::take_param(params, "d", 1.0);
  if (dval < 1.0 || dval != std::floor(dval)) throw Error(ErrorKind::invalid_spec, "d must be a positive integer");
  const auto d = static_cast<std::size_t>(dval);
  const double kappa = detail::take_param(params, "kappa", 1.0);
  const double a = detail::take_param(params, "A", 0.5);
  const double delta = detail::take_param(params, "delta", 0.1);
  const double scale = bounded ? detail::take_param(params, "half_width", 1.0)
                               : detail::take_param(params, "sigma_eps", 1.0);
  const double m0 = detail::take_param(params, "m0", 1.0);
  const double s0 = detail::take_param(params, "s0", 0.5);
  const double shift_sd = detail::take_param(params, "shift_sd", 0.0);
  const double alpha = detail::take_param(params, "alpha", 0.5);
  const double exp_alpha = detail::take_param(params, "exp_alpha", 1.0);
  const double exchangeable = detail::take_param(params, "exchangeable", 0.0);
  if (!params.empty()) throw Error(ErrorKind::invalid_spec, "unknown model parameter '" + params.begin()->first + "'");
  if (!(scale >= 0.0)) throw Error(ErrorKind::invalid_spec, "noise scale must be nonnegative");
  if (!(s0 >= 0.0) || !(shift_sd >= 0.0)) throw Error(ErrorKind::invalid_spec, "initial spreads must be nonnegative");
  if (!(alpha > 0.0)) throw Error(ErrorKind::invalid_spec, "alpha must be positive");

  ModelSpec spec;
  spec.name = bounded ? "mean-field-bounded" : "mean-field-gaussian";
  spec.builtin_params = original;
  spec.dim = d;
  spec.A = a * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  spec.delta = delta;
  spec.affine = AffineMeanField{kappa};
  spec.interaction = detail::affine_mean_field(kappa);
  spec.noise = bounded ? uniform_box_noise(d, scale) : gaussian_noise(d, scale);

  auto& l = spec.lip;
  // Means are 1-Lipschitz under W1, so D(z) = kappa for every z.
  l.sigma = kappa;
  l.M = kappa;
  l.alpha = alpha;
  l.sigma1_alpha = std::pow(kappa, 1.0 + alpha);
  if (bounded) {
    l.c0 = uniform_box_abs_moment(scale, d, 1.0);
    l.c1_alpha = uniform_box_abs_moment(scale, d, 1.0 + alpha);
  } else {
    l.c0 = gaussian_abs_moment(scale, d, 1.0);
    l.c1_alpha = gaussian_abs_moment(scale, d, 1.0 + alpha);
  }
  l.exp_alpha = exp_alpha;

  const auto di = static_cast<Eigen::Index>(d);
  const InitialKind kind = exchangeable != 0.0 ? InitialKind::exchangeable : InitialKind::iid;
  spec.initial = gaussian_initial(Eigen::VectorXd::Constant(di, m0), s0 * s0 * Eigen::MatrixXd::Identity(di, di),
                                  kind, shift_sd);
  // Full-support noise plus the affine recursion gives an irreducible chain.
  spec.unique_invariant = true;
  return spec;
}

inline ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params = {}) {
  bool bounded;
  if (name == "mean-field-gaussian")
    bounded = false;
  else if (name == "mean-field-bounded")
    bounded = true;
  else
    throw Error(ErrorKind::invalid_spec, "unknown builtin model '" + name + "'");
  auto it = params.find("kappa");
  if (it != params.end() && !(it->second > 0.0))
    throw Error(ErrorKind::invalid_spec, "kappa must be positive");
  return make_mean_field_model(bounded, params);
}

inline Eigen::MatrixXd noise_covariance(const NoiseSpec& noise) {
  const auto m = static_cast<Eigen::Index>(noise.dim);
  switch (noise.family) {
    case NoiseFamily::gaussian:
      return noise.scale * noise.scale * Eigen::MatrixXd::Identity(m, m);
    case NoiseFamily::bounded_uniform:
      return noise.scale * noise.scale / 3.0 * Eigen::MatrixXd::Identity(m, m);
    case NoiseFamily::custom:
      break;
  }
  throw Error(ErrorKind::unsupported, "no closed-form covariance for custom noise");
}

// Solves S = B S B^T + Q by fixed-point iteration.
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                               double tol = 1e-14, int max_iter = 1000000) {
  Eigen::MatrixXd S = Q;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd next = B * S * B.transpose() + Q;
    const double diff = (next - S).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    S = std::move(next);
    if (diff <= tol * scale) return S;
  }
  throw Error(ErrorKind::numeric, "discrete Lyapunov iteration did not converge");
}

// Exact law of the nonlinear chain at step n (nullopt = the fixed point) for
// the affine mean-field model with Gaussian noise and Gaussian mu_0:
// mean_{n+1} = A mean_n, Sigma_{n+1} = B Sigma_n B^T + delta^2 Sigma_eps with B = A - delta kappa I.
inline GaussianLaw exact_law_linear(const ModelSpec& spec, std::optional<std::size_t> n) {
  if (!spec.affine) throw Error(ErrorKind::unsupported, "exact law needs an affine mean-field model");
  if (spec.noise.family != NoiseFamily::gaussian)
    throw Error(ErrorKind::unsupported, "exact law needs Gaussian noise");
  if (!spec.initial.law) throw Error(ErrorKind::unsupported, "exact law needs a Gaussian initial law");
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd B = spec.A - spec.delta * spec.affine->kappa * I;
  const Eigen::MatrixXd Q = spec.delta * spec.delta * noise_covariance(spec.noise);
  GaussianLaw law = *spec.initial.law;
  if (!n) {
    law.mean = Eigen::VectorXd::Zero(d);
    if (operator_norm(spec.A) >= 1.0) throw Error(ErrorKind::regime, "mean recursion does not contract");
    law.cov = solve_discrete_lyapunov(B, Q);
    return law;
  }
  for (std::size_t k = 0; k < *n; ++k) {
    law.mean = spec.A * law.mean;
    law.cov = B * law.cov * B.transpose() + Q;
  }
  return law;
}

}  // namespace mvlab
