#pragma once

// Model construction from a config reference: builtin names with parameter
// overrides, or an affine mean-field model written out inline.

#include <cmath>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mvlab/error.hpp"
#include "mvlab/harness/strict_json.hpp"
#include "mvlab/model.hpp"

namespace mvlab::harness {

struct ModelRef {
  std::string builtin = "mean-field-gaussian";
  std::map<std::string, double> params;
  std::optional<Json> inline_spec;  // affine mean-field model given field by field
};

namespace detail {

[[noreturn]] inline void inline_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::invalid_spec, "model.inline." + field + ": " + msg);
}

inline double inline_number(const Json& j, const std::string& field, double fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number()) inline_error(field, "expected a number");
  return j[field].get<double>();
}

// A scalar s means s * I; otherwise a d x d array of rows.
inline Eigen::MatrixXd inline_matrix(const Json& v, std::size_t d, const std::string& field) {
  const auto n = static_cast<Eigen::Index>(d);
  if (v.is_number()) return v.get<double>() * Eigen::MatrixXd::Identity(n, n);
  if (!v.is_array() || v.size() != d) inline_error(field, "expected a number or " + std::to_string(d) + " rows");
  Eigen::MatrixXd m(n, n);
  for (std::size_t r = 0; r < d; ++r) {
    if (!v[r].is_array() || v[r].size() != d) inline_error(field, "row " + std::to_string(r) + " must have d entries");
    for (std::size_t c = 0; c < d; ++c) {
      if (!v[r][c].is_number()) inline_error(field, "entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
    }
  }
  return m;
}

inline Eigen::VectorXd inline_vector(const Json& v, std::size_t d, const std::string& field) {
  const auto n = static_cast<Eigen::Index>(d);
  if (v.is_number()) return Eigen::VectorXd::Constant(n, v.get<double>());
  if (!v.is_array() || v.size() != d) inline_error(field, "expected a number or " + std::to_string(d) + " entries");
  Eigen::VectorXd x(n);
  for (std::size_t k = 0; k < d; ++k) {
    if (!v[k].is_number()) inline_error(field, "entries must be numbers");
    x[static_cast<Eigen::Index>(k)] = v[k].get<double>();
  }
  return x;
}

}  // namespace detail

// f(x, mu, z) = kappa (mean(mu) - x) + z with general A, noise family and
// Gaussian initial law. `kappa_override` replaces kappa (0 gives the
// non-interacting control).
inline ModelSpec build_inline_model(const Json& j, std::optional<double> kappa_override = std::nullopt) {
  using detail::inline_error;
  if (!j.is_object()) throw Error(ErrorKind::invalid_spec, "model.inline: expected an object");
  const double dval = detail::inline_number(j, "dim", 1.0);
  if (dval < 1.0 || dval != std::floor(dval)) inline_error("dim", "must be a positive integer");
  const auto d = static_cast<std::size_t>(dval);
  const auto di = static_cast<Eigen::Index>(d);
  const double kappa = kappa_override ? *kappa_override : detail::inline_number(j, "kappa", 1.0);
  if (!kappa_override && !(kappa > 0.0)) inline_error("kappa", "must be positive");
  const double alpha = detail::inline_number(j, "alpha", 0.5);
  if (!(alpha > 0.0)) inline_error("alpha", "must be positive");

  ModelSpec spec;
  spec.name = "inline";
  spec.dim = d;
  spec.A = j.contains("A") ? detail::inline_matrix(j["A"], d, "A") : 0.5 * Eigen::MatrixXd::Identity(di, di);
  spec.delta = detail::inline_number(j, "delta", 0.1);
  spec.affine = AffineMeanField{kappa};
  spec.interaction = mvlab::detail::affine_mean_field(kappa);

  std::string family = "gaussian";
  double scale = 1.0;
  if (j.contains("noise")) {
    const Json& nz = j["noise"];
    if (!nz.is_object()) inline_error("noise", "expected an object");
    if (nz.contains("family")) {
      if (!nz["family"].is_string()) inline_error("noise.family", "expected a string");
      family = nz["family"].get<std::string>();
    }
    scale = detail::inline_number(nz, "scale", 1.0);
  }
  if (!(scale >= 0.0)) inline_error("noise.scale", "must be nonnegative");
  auto& l = spec.lip;
  l.sigma = kappa;
  l.M = kappa;
  l.alpha = alpha;
  l.sigma1_alpha = std::pow(kappa, 1.0 + alpha);
  l.exp_alpha = detail::inline_number(j, "exp_alpha", 1.0);
  if (family == "gaussian") {
    spec.noise = gaussian_noise(d, scale);
    l.c0 = gaussian_abs_moment(scale, d, 1.0);
    l.c1_alpha = gaussian_abs_moment(scale, d, 1.0 + alpha);
  } else if (family == "bounded-uniform") {
    spec.noise = uniform_box_noise(d, scale);
    l.c0 = uniform_box_abs_moment(scale, d, 1.0);
    l.c1_alpha = uniform_box_abs_moment(scale, d, 1.0 + alpha);
  } else {
    inline_error("noise.family", "expected 'gaussian' or 'bounded-uniform'");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Constant(di, 1.0);
  Eigen::MatrixXd cov = 0.25 * Eigen::MatrixXd::Identity(di, di);
  double shift_sd = 0.0;
  if (j.contains("initial")) {
    const Json& in = j["initial"];
    if (!in.is_object()) inline_error("initial", "expected an object");
    if (in.contains("mean")) mean = detail::inline_vector(in["mean"], d, "initial.mean");
    if (in.contains("cov")) cov = detail::inline_matrix(in["cov"], d, "initial.cov");
    shift_sd = detail::inline_number(in, "shift_sd", 0.0);
    if (!(shift_sd >= 0.0)) inline_error("initial.shift_sd", "must be nonnegative");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) inline_error("initial.cov", "must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().minCoeff() < -1e-12)
    inline_error("initial.cov", "must be positive semidefinite");
  spec.initial = gaussian_initial(mean, cov, shift_sd > 0.0 ? InitialKind::exchangeable : InitialKind::iid, shift_sd);
  spec.unique_invariant = true;
  check_spec_well_formed(spec);
  return spec;
}

inline ModelSpec build_model(const ModelRef& ref, std::optional<double> kappa_override = std::nullopt) {
  if (ref.inline_spec) return build_inline_model(*ref.inline_spec, kappa_override);
  if (!kappa_override) return builtin_model(ref.builtin, ref.params);
  if (ref.builtin != "mean-field-gaussian" && ref.builtin != "mean-field-bounded")
    throw Error(ErrorKind::invalid_spec, "unknown builtin model '" + ref.builtin + "'");
  auto params = ref.params;
  params["kappa"] = *kappa_override;
  return make_mean_field_model(ref.builtin == "mean-field-bounded", params);
}

}  // namespace mvlab::harness
