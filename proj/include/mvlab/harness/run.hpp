#pragma once

// Experiment orchestration: one runner per kind, each producing a ResultTable
// with a fixed schema; persistence to <out>/<kind>-<hash>/ and reruns from a
// manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvlab/analysis.hpp"
#include "mvlab/bounds.hpp"
#include "mvlab/dynamics.hpp"
#include "mvlab/error.hpp"
#include "mvlab/harness/config.hpp"
#include "mvlab/harness/models.hpp"
#include "mvlab/harness/table.hpp"
#include "mvlab/model.hpp"
#include "mvlab/stats.hpp"
#include "mvlab/transport.hpp"

namespace mvlab::harness {

struct RunContext {
  const ExperimentConfig& cfg;
  std::ostream* log = nullptr;

  void note(const std::string& msg) const {
    if (log) *log << "[" << to_string(cfg.kind) << "] " << msg << std::endl;
  }
};

namespace detail {

inline std::size_t max_of(const std::vector<std::size_t>& v) { return *std::max_element(v.begin(), v.end()); }

inline std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t iN) { return seed + iN * 0x10001ULL; }

inline Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(json_number(v[i]));
  return out;
}

inline void record_model_constants(ResultTable& t, const ModelSpec& spec, const ValidationReport& r) {
  const auto& c = r.constants;
  Json m;
  m["name"] = spec.name;
  m["dim"] = spec.dim;
  m["norm_A"] = json_number(c.norm_A);
  m["exp_neg_omega"] = json_number(c.exp_neg_omega);
  m["delta"] = json_number(c.delta);
  m["sigma"] = json_number(c.sigma);
  m["a0"] = json_number(c.a0);
  m["chi"] = json_number(c.chi);
  m["theta"] = json_number(c.theta_rate);
  m["alpha"] = json_number(c.alpha);
  if (c.M) m["M"] = json_number(*c.M);
  if (c.a_alpha) m["a_alpha"] = json_number(*c.a_alpha);
  m["noise"] = to_string(spec.noise.family);
  m["noise_scale"] = json_number(spec.noise.scale);
  Json p = Json::object();
  for (const auto& [k, v] : spec.builtin_params) p[k] = json_number(v);
  m["params"] = p;
  t.constants["model"] = m;
  t.constants["regimes"] = {{"th2", r.th2_regime}, {"th3", r.th3_regime}, {"th5", r.th5_regime},
                            {"th6", r.th6_regime}, {"thm6", r.thm6_regime}};
}

[[noreturn]] inline void refuse(const std::string& what, const ValidationReport& r) {
  throw Error(ErrorKind::regime, what + " refused: " + r.diagnostics_text());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reference laws mu_n.

class ReferenceLaw {
 public:
  // Exact Gaussian law where computable and the distance to it is exact
  // (d = 1); otherwise a large interacting cloud propagated to each n.
  ReferenceLaw(const ModelSpec& spec, const ExperimentConfig& cfg, const std::vector<std::size_t>& times,
               std::size_t max_N, const RunContext& ctx)
      : spec_(spec) {
    const std::string mode = cfg.options.reference;
    const bool closed_form = spec.dim == 1 && spec.affine && spec.noise.family == NoiseFamily::gaussian &&
                             spec.initial.law.has_value();
    if (mode == "exact" && !closed_form)
      throw Error(ErrorKind::unsupported, "no exact reference law for this model (needs d = 1, affine model, "
                                          "Gaussian noise and Gaussian initial law)");
    exact_ = mode != "particles" && closed_form;
    // Time 0 is known exactly whenever the initial law is Gaussian.
    exact_initial_ = mode == "auto" && spec.dim == 1 && spec.initial.law.has_value();
    std::vector<std::size_t> need;
    for (std::size_t n : times) {
      if (exact_ || (n == 0 && exact_initial_)) {
        laws_[n] = n == 0 ? *spec.initial.law : exact_law_linear(spec, n);
      } else {
        need.push_back(n);
      }
    }
    if (exact_) {
      description_ = "exact-gaussian";
      return;
    }
    n_ref_ = cfg.options.N_ref ? cfg.options.N_ref : 10 * max_N;
    if (n_ref_ < 10 * max_N)
      throw Error(ErrorKind::config, "options.N_ref = " + std::to_string(n_ref_) + " is below 10 x max N = " +
                                         std::to_string(10 * max_N));
    description_ = "particles(N_ref=" + std::to_string(n_ref_) + ")";
    if (exact_initial_) description_ = "exact-gaussian at n=0, " + description_;
    if (need.empty()) return;
    need = detail::sorted_unique(need);
    ctx.note("propagating reference cloud N_ref=" + std::to_string(n_ref_) + " to n=" + std::to_string(need.back()));
    std::size_t slot = 0;
    for_each_step(spec, n_ref_, need.back(), cfg.seed, kReferenceReplicate, [&](const ParticleCloud& c) {
      if (slot < need.size() && c.time() == need[slot]) {
        if (!c.all_finite()) throw Error(ErrorKind::numeric, "reference cloud diverged at n=" + std::to_string(c.time()));
        if (spec.dim == 1)
          sorted_[c.time()] = sorted_values(c);
        else
          clouds_[c.time()] = c;
        ++slot;
      }
    });
  }

  double distance(std::size_t n, const ParticleCloud& cloud) const {
    if (!cloud.all_finite()) throw Error(ErrorKind::numeric, "particle cloud diverged at n=" + std::to_string(n));
    if (auto it = laws_.find(n); it != laws_.end()) return w1_to_gaussian_1d(cloud, it->second);
    if (auto it = sorted_.find(n); it != sorted_.end()) return w1_sorted(sorted_values(cloud), it->second);
    if (auto it = clouds_.find(n); it != clouds_.end()) return w1_clouds(cloud, it->second);
    throw Error(ErrorKind::domain, "reference law not prepared for n=" + std::to_string(n));
  }

  const std::string& description() const { return description_; }
  std::size_t n_ref() const { return n_ref_; }

 private:
  const ModelSpec& spec_;
  bool exact_ = false;
  bool exact_initial_ = false;
  std::size_t n_ref_ = 0;
  std::string description_;
  std::map<std::size_t, GaussianLaw> laws_;
  std::map<std::size_t, std::vector<double>> sorted_;
  std::map<std::size_t, ParticleCloud> clouds_;
};

// Particle approximation of the fixed point, at tolerance = Monte Carlo floor
// unless a tolerance is configured.
inline FixedPointReport fixed_point_for(const ModelSpec& spec, const ExperimentConfig& cfg, std::size_t N_ref,
                                        const RunContext& ctx) {
  ctx.note("fitting Monte Carlo floor for N_ref=" + std::to_string(N_ref));
  FixedPointOptions opt;
  opt.threads = cfg.threads;
  opt.floor = estimate_mc_floor(spec, N_ref, cfg.seed, 40, 4, cfg.threads);
  const double tol = cfg.options.tol > 0.0 ? cfg.options.tol : opt.floor->floor;
  ctx.note("Picard iteration, tolerance " + format_number(tol));
  return picard_fixed_point(spec, N_ref, tol, cfg.options.max_iter, cfg.seed, opt);
}

// ---------------------------------------------------------------------------
// Runners.

inline ResultTable run_validate(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto r = validate_model(spec, cfg.options.gamma0, cfg.options.gamma);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  t.columns = {"key", "value"};
  const auto& a = r.assumptions;
  const auto& c = r.constants;
  auto opt_num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("none"); };
  t.add({"th2_regime", r.th2_regime});
  t.add({"th3_regime", r.th3_regime});
  t.add({"th5_regime", r.th5_regime});
  t.add({"th6_regime", r.th6_regime});
  t.add({"thm6_regime", r.thm6_regime});
  t.add({"a1_sigma_finite", a.a1});
  t.add({"a2_c0_finite", a.a2});
  t.add({"a3_contraction", a.a3});
  t.add({"a4_moments", a.a4});
  t.add({"a5_initial_convergence", a.a5});
  t.add({"a6_unique_invariant", a.a6});
  t.add({"a7_bounded_exponential", a.a7});
  t.add({"iid_initial", a.iid_initial});
  t.add({"norm_A", c.norm_A});
  t.add({"omega", c.omega});
  t.add({"delta", c.delta});
  t.add({"sigma", c.sigma});
  t.add({"gamma0", c.gamma0});
  t.add({"a0", c.a0});
  t.add({"chi", c.chi});
  t.add({"theta", c.theta_rate});
  t.add({"a_alpha", opt_num(c.a_alpha)});
  t.add({"kappa1", opt_num(c.kappa1)});
  t.add({"chi1", opt_num(c.chi1)});
  t.add({"chi2", opt_num(c.chi2)});
  t.add({"diagnostics", r.diagnostics_text()});
  t.summary["th2_regime"] = r.th2_regime;
  t.summary["diagnostics"] = r.diagnostics;
  return t;
}

inline ResultTable run_simulate(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto r = validate_model(spec, cfg.options.gamma0, cfg.options.gamma);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const std::vector<std::size_t> times = [&] {
    if (!cfg.grid.n.empty()) return detail::sorted_unique(cfg.grid.n);
    std::vector<std::size_t> all(cfg.options.T ? cfg.options.T + 1 : 51);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }();
  const std::size_t horizon = times.back();
  t.columns = {"N", "replicate", "n"};
  for (std::size_t k = 0; k < spec.dim; ++k) t.columns.push_back("mean_" + std::to_string(k + 1));
  t.columns.push_back("abs_moment");
  for (std::size_t iN = 0; iN < cfg.grid.N.size(); ++iN) {
    const std::size_t N = cfg.grid.N[iN];
    ctx.note("simulating N=" + std::to_string(N));
    std::vector<std::vector<std::vector<Cell>>> rows(cfg.replicates);
    parallel_for(cfg.replicates, cfg.threads, [&](std::size_t rep) {
      std::size_t slot = 0;
      for_each_step(spec, N, horizon, detail::cell_seed(cfg.seed, iN), rep, [&](const ParticleCloud& c) {
        if (slot >= times.size() || c.time() != times[slot]) return;
        if (!c.all_finite()) throw Error(ErrorKind::numeric, "cloud diverged at n=" + std::to_string(c.time()));
        std::vector<Cell> row{N, rep, c.time()};
        const Eigen::VectorXd m = c.mean();
        for (Eigen::Index k = 0; k < m.size(); ++k) row.emplace_back(m[k]);
        row.emplace_back(c.abs_moment());
        rows[rep].push_back(std::move(row));
        ++slot;
      });
    });
    for (auto& rep_rows : rows)
      for (auto& row : rep_rows) t.add(std::move(row));
  }
  t.summary["horizon"] = horizon;
  return t;
}

inline ResultTable run_fixed_point(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto r = validate_model(spec, cfg.options.gamma0, cfg.options.gamma);
  if (!r.th2_regime) detail::refuse("fixed-point iteration", r);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const std::size_t N_ref = cfg.options.N_ref ? cfg.options.N_ref : 100000;
  const auto fp = fixed_point_for(spec, cfg, N_ref, ctx);
  t.columns = {"iteration", "gap"};
  for (std::size_t k = 0; k < fp.gaps.size(); ++k) t.add({k + 1, fp.gaps[k]});
  auto& s = t.summary;
  s["N_ref"] = N_ref;
  s["converged"] = fp.converged;
  s["iterations"] = fp.iterations;
  s["tolerance"] = json_number(fp.tolerance);
  s["mc_floor"] = json_number(fp.mc_floor);
  s["floor_constant"] = json_number(fp.floor_constant);
  s["fitted_rate"] = json_number(fp.fitted_rate);
  s["chi"] = json_number(r.constants.chi);
  s["final_mean"] = detail::vector_json(fp.final_cloud.mean());
  s["final_abs_moment"] = json_number(fp.final_cloud.abs_moment());
  const bool closed_form = spec.dim == 1 && spec.affine && spec.noise.family == NoiseFamily::gaussian &&
                           spec.initial.law.has_value();
  if (closed_form) {
    const GaussianLaw exact = exact_law_linear(spec, std::nullopt);
    const double w1 = w1_to_gaussian_1d(fp.final_cloud, exact);
    s["exact_mean"] = json_number(exact.mean[0]);
    s["exact_variance"] = json_number(exact.cov(0, 0));
    s["w1_to_exact"] = json_number(w1);
    s["within_3_floor"] = w1 <= 3.0 * fp.mc_floor;
    t.reference = "exact-gaussian (Lyapunov)";
  } else {
    t.reference = "none";
  }
  if (!fp.converged) ctx.note("did not reach the tolerance within max_iter");
  return t;
}

namespace detail {

// Consecutive-N comparison allowing 2 combined standard errors of slack.
inline bool decreasing_within_2se(const std::vector<SweepCell>& cells) {
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (!(cells[i].mean < cells[i - 1].mean + 2.0 * std::hypot(cells[i].stderr_, cells[i - 1].stderr_)))
      return false;
  return true;
}

inline bool strictly_decreasing(const std::vector<SweepCell>& cells) {
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (!(cells[i].mean < cells[i - 1].mean)) return false;
  return true;
}

}  // namespace detail

inline ResultTable run_poc_sweep(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto r = validate_model(spec, cfg.options.gamma0, cfg.options.gamma);
  if (!r.th2_regime) detail::refuse("propagation-of-chaos sweep", r);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const auto ns = detail::sorted_unique(cfg.grid.n);
  const ReferenceLaw ref(spec, cfg, ns, detail::max_of(cfg.grid.N), ctx);
  t.reference = ref.description();
  ctx.note("sweeping " + std::to_string(cfg.grid.N.size()) + " x " + std::to_string(ns.size()) + " cells");
  const auto table = sweep_w1(spec, cfg.grid.N, ns, cfg.replicates, cfg.seed,
                              {[&](std::size_t n, const ParticleCloud& c) { return ref.distance(n, c); }}, cfg.threads);
  t.columns = {"N", "n", "mean_w1", "stderr"};
  for (std::size_t iN = 0; iN < table.Ns.size(); ++iN)
    for (std::size_t j = 0; j < ns.size(); ++j)
      t.add({table.Ns[iN], ns[j], table.cells[0][iN][j].mean, table.cells[0][iN][j].stderr_});
  Json per_n = Json::array();
  bool all_within = true, all_strict = true;
  for (std::size_t j = 0; j < ns.size(); ++j) {
    std::vector<SweepCell> col;
    for (std::size_t iN = 0; iN < table.Ns.size(); ++iN) col.push_back(table.cells[0][iN][j]);
    const bool within = detail::decreasing_within_2se(col), strict = detail::strictly_decreasing(col);
    all_within = all_within && within;
    all_strict = all_strict && strict;
    per_n.push_back({{"n", ns[j]}, {"decreasing_within_2se", within}, {"strictly_decreasing", strict}});
  }
  t.summary["per_n"] = per_n;
  t.summary["decreasing_within_2se"] = all_within;
  t.summary["strictly_decreasing"] = all_strict;
  return t;
}

inline ResultTable run_uniform_sweep(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto r = validate_model(spec, cfg.options.gamma0, cfg.options.gamma);
  if (!r.th2_regime) detail::refuse("uniform-in-time sweep", r);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const auto ns = detail::sorted_unique(cfg.grid.n);
  const std::size_t max_N = detail::max_of(cfg.grid.N);
  const ReferenceLaw ref(spec, cfg, ns, max_N, ctx);
  t.reference = ref.description() + "; fixed point by Picard iteration";

  const std::size_t fp_N = std::max<std::size_t>(1000, cfg.options.N_ref ? cfg.options.N_ref : 10 * max_N);
  const auto fp = fixed_point_for(spec, cfg, fp_N, ctx);
  const std::vector<double> fp_sorted = spec.dim == 1 ? sorted_values(fp.final_cloud) : std::vector<double>{};
  auto to_fixed_point = [&](std::size_t, const ParticleCloud& c) {
    if (spec.dim == 1) return w1_sorted(sorted_values(c), fp_sorted);
    return w1_clouds(c, fp.final_cloud);
  };

  ctx.note("sweeping " + std::to_string(cfg.grid.N.size()) + " x " + std::to_string(ns.size()) + " cells");
  const auto table = sweep_w1(spec, cfg.grid.N, ns, cfg.replicates, cfg.seed,
                              {[&](std::size_t n, const ParticleCloud& c) { return ref.distance(n, c); }, to_fixed_point},
                              cfg.threads);
  t.columns = {"N", "n", "mean_w1_oracle", "stderr_oracle", "mean_w1_fixed_point", "stderr_fixed_point"};
  for (std::size_t iN = 0; iN < table.Ns.size(); ++iN)
    for (std::size_t j = 0; j < ns.size(); ++j)
      t.add({table.Ns[iN], ns[j], table.cells[0][iN][j].mean, table.cells[0][iN][j].stderr_,
             table.cells[1][iN][j].mean, table.cells[1][iN][j].stderr_});

  // sup over n of the mean distance to the reference law, per N
  std::vector<SweepCell> sup(table.Ns.size());
  Json sup_json = Json::array();
  for (std::size_t iN = 0; iN < table.Ns.size(); ++iN) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < ns.size(); ++j)
      if (table.cells[0][iN][j].mean > table.cells[0][iN][arg].mean) arg = j;
    sup[iN] = table.cells[0][iN][arg];
    sup_json.push_back({{"N", table.Ns[iN]}, {"sup_mean_w1", json_number(sup[iN].mean)},
                        {"stderr", json_number(sup[iN].stderr_)}, {"argmax_n", ns[arg]}});
  }
  auto& s = t.summary;
  s["sup_over_n"] = sup_json;
  s["decreasing_within_2se"] = detail::decreasing_within_2se(sup);
  if (table.Ns.size() >= 2) {
    std::vector<double> x, y;
    for (std::size_t iN = 0; iN < table.Ns.size(); ++iN) {
      x.push_back(std::log(static_cast<double>(table.Ns[iN])));
      y.push_back(std::log(sup[iN].mean));
    }
    const auto fit = stats::linear_fit(x, y);
    s["loglog_slope"] = json_number(fit.slope);
    s["loglog_slope_stderr"] = json_number(fit.slope_stderr);
  }
  const auto li = limit_interchange(table, 1);
  s["limit_interchange"] = {{"n_then_N", json_number(li.n_then_N.value)},
                            {"n_then_N_stderr", json_number(li.n_then_N.stderr_)},
                            {"N_then_n", json_number(li.N_then_n.value)},
                            {"N_then_n_stderr", json_number(li.N_then_n.stderr_)},
                            {"difference", json_number(li.difference)},
                            {"combined_stderr", json_number(li.combined_stderr)},
                            {"within_3se", li.difference <= 3.0 * li.combined_stderr}};
  s["fixed_point"] = {{"N_ref", fp_N},
                      {"converged", fp.converged},
                      {"iterations", fp.iterations},
                      {"mc_floor", json_number(fp.mc_floor)},
                      {"tolerance", json_number(fp.tolerance)}};
  return t;
}

inline ResultTable run_tails(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto& o = cfg.options;
  const auto r = validate_model(spec, o.gamma0, o.gamma);
  if (!r.th5_regime && !r.th6_regime && !r.thm6_regime)
    detail::refuse("concentration comparison (no concentration regime holds)", r);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const auto ns = detail::sorted_unique(cfg.grid.n);
  std::vector<std::size_t> times = ns;
  times.push_back(0);
  times = detail::sorted_unique(times);
  const ReferenceLaw ref(spec, cfg, times, detail::max_of(cfg.grid.N), ctx);
  t.reference = ref.description();
  const auto& c = r.constants;
  const double alpha = spec.lip.alpha;
  const double M = c.M ? *c.M : 0.0;
  const bounds::TransportBoundParams tp{o.zeta0, o.c_d, spec.dim};
  t.constants["curves"] = {{"C1", o.C1}, {"N0", o.N0}, {"a1", o.a1}, {"a2", o.a2}, {"gamma0", o.gamma0},
                           {"gamma", o.gamma}, {"zeta0", o.zeta0}, {"c_d", o.c_d}, {"alpha", alpha},
                           {"initial_term", "empirical P(W1(mu_0^N, mu_0) > 2 sigma gamma0 theta^n eps)"}};

  t.columns = {"N",           "n",          "eps",
               "p_hat",       "lo",         "hi",
               "initial_term", "poly_uniform", "poly_uniform_valid",
               "exp_uniform", "exp_uniform_valid", "iid_exp",
               "iid_exp_valid"};
  Json violations = Json::object();
  std::size_t poly_bad = 0, exp_bad = 0, iid_bad = 0, poly_checked = 0, exp_checked = 0, iid_checked = 0;
  bool reliable = true;
  for (std::size_t iN = 0; iN < cfg.grid.N.size(); ++iN) {
    const std::size_t N = cfg.grid.N[iN];
    ctx.note("sampling " + std::to_string(cfg.replicates) + " replicates at N=" + std::to_string(N));
    // samples[rep][slot] over `times`
    std::vector<std::vector<double>> samples(cfg.replicates, std::vector<double>(times.size()));
    parallel_for(cfg.replicates, cfg.threads, [&](std::size_t rep) {
      std::size_t slot = 0;
      for_each_step(spec, N, times.back(), detail::cell_seed(cfg.seed, iN), rep, [&](const ParticleCloud& cl) {
        if (slot < times.size() && cl.time() == times[slot]) samples[rep][slot++] = ref.distance(cl.time(), cl);
      });
    });
    std::vector<double> initial(cfg.replicates);
    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) initial[rep] = samples[rep][0];
    for (std::size_t n : ns) {
      const std::size_t slot = static_cast<std::size_t>(std::find(times.begin(), times.end(), n) - times.begin());
      std::vector<double> w(cfg.replicates);
      for (std::size_t rep = 0; rep < cfg.replicates; ++rep) w[rep] = samples[rep][slot];
      const auto curve = tail_estimator(w, cfg.grid.eps);
      reliable = reliable && curve.reliable;
      for (const auto& pt : curve.points) {
        const double thr = 2.0 * c.sigma * o.gamma0 * std::pow(c.theta_rate, static_cast<double>(n)) * pt.eps;
        const double init = static_cast<double>(std::count_if(initial.begin(), initial.end(),
                                                               [&](double v) { return v > thr; })) /
                            static_cast<double>(initial.size());
        const auto poly = bounds::poly_uniform_bound(static_cast<double>(N), pt.eps, o.C1, alpha, spec.dim, init, o.N0);
        const auto expu = bounds::exp_uniform_bound(static_cast<double>(N), pt.eps, o.C1, spec.dim, init, o.N0);
        const bool poly_ok = r.th5_regime && poly.valid;
        const bool exp_ok = r.th6_regime && expu.valid;
        double iid_value = 1.0;
        bool iid_ok = false;
        if (M > 0.0) {
          const auto vs = bounds::varsigma1(pt.eps, o.gamma, spec.delta, M, tp);
          const auto iid = bounds::iid_exp_bound(static_cast<double>(N), pt.eps, o.a1, o.a2, vs.value, o.N0);
          iid_value = iid.value;
          iid_ok = r.thm6_regime && iid.valid && !vs.domain;
        }
        auto check = [&](bool ok, double value, std::size_t& checked, std::size_t& bad) {
          if (!ok || !(value < 1.0)) return;
          ++checked;
          if (pt.p_hat > value) ++bad;
        };
        check(poly_ok, poly.value, poly_checked, poly_bad);
        check(exp_ok, expu.value, exp_checked, exp_bad);
        check(iid_ok, iid_value, iid_checked, iid_bad);
        t.add({N, n, pt.eps, pt.p_hat, pt.lo, pt.hi, init, poly.value, poly_ok, expu.value, exp_ok, iid_value, iid_ok});
      }
    }
  }
  auto& s = t.summary;
  s["reliable"] = reliable;
  s["ordering"] = {
      {"poly_uniform", {{"checked", poly_checked}, {"violations", poly_bad}}},
      {"exp_uniform", {{"checked", exp_checked}, {"violations", exp_bad}}},
      {"iid_exp", {{"checked", iid_checked}, {"violations", iid_bad}}},
  };
  s["ordering_holds"] = poly_bad + exp_bad + iid_bad == 0;
  return t;
}

inline ResultTable run_chaos(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto& o = cfg.options;
  const auto r = validate_model(spec, o.gamma0, o.gamma);
  if (!r.th2_regime) detail::refuse("chaoticity experiment", r);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const std::size_t T = o.T ? o.T : 2000;
  const std::size_t burn = o.burn_in ? o.burn_in : T / 2;
  t.constants["chaos"] = {{"k", o.k}, {"T", T}, {"burn_in", burn}, {"battery_size", kChaosBatterySize},
                          {"battery_version", kChaosBatteryVersion}};
  t.reference = "none (product-moment discrepancy of the k-particle marginal)";
  t.columns = {"variant", "N", "k", "statistic", "stderr", "mc_floor", "pair_correlation"};
  std::vector<std::pair<std::string, ModelSpec>> variants{{"interacting", spec}};
  if (o.chaos_control) variants.emplace_back("independent", build_model(cfg.model, 0.0));
  Json& s = t.summary;
  for (const auto& [name, model] : variants) {
    std::vector<SweepCell> cells;
    bool below_floor = true;
    for (std::size_t iN = 0; iN < cfg.grid.N.size(); ++iN) {
      const std::size_t N = cfg.grid.N[iN];
      ctx.note(name + " N=" + std::to_string(N));
      const auto rep = chaos_statistic(model, N, o.k, T, burn, detail::cell_seed(cfg.seed, iN), cfg.replicates,
                                       cfg.threads);
      t.add({name, N, o.k, rep.statistic, rep.stderr_, rep.mc_floor, rep.pair_correlation});
      cells.push_back({rep.statistic, rep.stderr_});
      below_floor = below_floor && rep.statistic <= rep.mc_floor;
    }
    s[name] = {{"decreasing_within_2se", detail::decreasing_within_2se(cells)}, {"below_mc_floor", below_floor}};
  }
  return t;
}

inline ResultTable run_bounds(const RunContext& ctx, const ModelSpec& spec) {
  const auto& cfg = ctx.cfg;
  const auto& o = cfg.options;
  const auto r = validate_model(spec, o.gamma0, o.gamma);
  ResultTable t;
  detail::record_model_constants(t, spec, r);
  const std::size_t d = spec.dim;
  const double alpha = spec.lip.alpha;
  auto poly_k = bounds::PolyStepConstants::defaults(d, alpha);
  poly_k.a3 = o.a3;
  const bounds::TransportBoundParams tp{o.zeta0, o.c_d, d};
  const double M = r.constants.M ? *r.constants.M : 0.0;
  t.constants["curves"] = {{"C1", o.C1}, {"N0", o.N0}, {"a1", o.a1}, {"a2", o.a2}, {"gamma", o.gamma},
                           {"R", o.R}, {"zeta0", o.zeta0}, {"c_d", o.c_d}, {"C0", tp.C0()},
                           {"poly_step", {{"a1", poly_k.a1}, {"a2", poly_k.a2}, {"a3", poly_k.a3}}},
                           {"initial_term", 0.0}};
  t.reference = "none (formula evaluation)";
  t.columns = {"N",           "eps",           "poly_step",   "poly_step_valid",   "poly_uniform",
               "poly_uniform_valid", "exp_uniform", "exp_uniform_valid", "iid_exp", "iid_exp_valid",
               "boissard",    "boissard_valid", "linear_tail", "linear_tail_valid", "varsigma1",
               "varsigma1_domain"};
  ctx.note("evaluating " + std::to_string(cfg.grid.N.size() * cfg.grid.eps.size()) + " grid points");
  for (std::size_t N_int : cfg.grid.N)
    for (double eps : cfg.grid.eps) {
      const double N = static_cast<double>(N_int);
      const auto ps = bounds::poly_step_bound(N, eps, o.R, d, poly_k);
      const auto pu = bounds::poly_uniform_bound(N, eps, o.C1, alpha, d, 0.0, o.N0);
      const auto eu = bounds::exp_uniform_bound(N, eps, o.C1, d, 0.0, o.N0);
      double iid_value = 1.0, vs_value = bounds::kInf;
      bool iid_ok = false, vs_domain = true;
      if (M > 0.0) {
        const auto vs = bounds::varsigma1(eps, o.gamma, spec.delta, M, tp);
        const auto iid = bounds::iid_exp_bound(N, eps, o.a1, o.a2, vs.value, o.N0);
        iid_value = iid.value;
        vs_value = vs.value;
        vs_domain = vs.domain;
        iid_ok = r.thm6_regime && iid.valid && !vs.domain;
      }
      const auto bt = bounds::boissard_tail(N, eps, tp);
      const auto lt = bounds::linear_tail(N, eps, tp);
      t.add({N_int, eps, ps.value, ps.valid, pu.value, r.th5_regime && pu.valid, eu.value, r.th6_regime && eu.valid,
             iid_value, iid_ok, bt.value, !bt.vacuous && !bt.domain, lt.value, lt.valid && !bt.domain, vs_value,
             vs_domain});
    }
  return t;
}

// ---------------------------------------------------------------------------
// Dispatch, persistence and reruns.

inline ResultTable run(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  const RunContext ctx{cfg, log};
  const ModelSpec spec = build_model(cfg.model);
  ResultTable t;
  switch (cfg.kind) {
    case ExperimentKind::validate: t = run_validate(ctx, spec); break;
    case ExperimentKind::simulate: t = run_simulate(ctx, spec); break;
    case ExperimentKind::fixed_point: t = run_fixed_point(ctx, spec); break;
    case ExperimentKind::poc_sweep: t = run_poc_sweep(ctx, spec); break;
    case ExperimentKind::uniform_sweep: t = run_uniform_sweep(ctx, spec); break;
    case ExperimentKind::tails: t = run_tails(ctx, spec); break;
    case ExperimentKind::chaos: t = run_chaos(ctx, spec); break;
    case ExperimentKind::bounds: t = run_bounds(ctx, spec); break;
  }
  t.kind = to_string(cfg.kind);
  return t;
}

struct RunOutput {
  ResultTable table;
  std::filesystem::path dir;
  Json manifest;
};

inline std::filesystem::path output_dir(const ExperimentConfig& cfg) {
  return std::filesystem::path(cfg.out_dir) / (to_string(cfg.kind) + "-" + config_hash(cfg));
}

inline Json make_manifest(const ExperimentConfig& cfg, const ResultTable& t, double wall_time) {
  Json m;
  m["tool_version"] = kToolVersion;
  m["kind"] = to_string(cfg.kind);
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json(cfg);
  m["execution"] = {{"output", cfg.out_dir}, {"threads", cfg.threads}};
  m["columns"] = t.columns;
  m["rows"] = t.rows.size();
  m["reference"] = t.reference;
  m["constants"] = t.constants;
  m["summary"] = t.summary;
  m["wall_time_seconds"] = wall_time;
  return m;
}

inline RunOutput run_and_persist(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  RunOutput out;
  out.table = run(cfg, log);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.dir = output_dir(cfg);
  make_dirs(out.dir);
  out.manifest = make_manifest(cfg, out.table, wall);
  write_text(out.dir / "results.csv", out.table.csv());
  write_text(out.dir / "manifest.json", out.manifest.dump(2) + "\n");
  return out;
}

// Config recorded in a manifest. Output directory and thread count come from
// the manifest unless overridden.
inline ExperimentConfig config_from_manifest(const std::string& path) {
  const JsonDocument doc = parse_strict_json(read_file(path), path);
  if (!doc.value.is_object() || !doc.value.contains("config") || !doc.value.contains("config_hash"))
    throw Error(ErrorKind::config, path + ": not a run manifest (missing 'config' or 'config_hash')");
  JsonDocument inner{doc.value["config"], path + " config", {}};
  ExperimentConfig cfg = config_from_document(inner);
  if (config_hash(cfg) != doc.value["config_hash"].get<std::string>())
    throw Error(ErrorKind::config, path + ": config does not match the recorded hash");
  if (doc.value.contains("execution")) {
    const Json& e = doc.value["execution"];
    if (e.contains("output")) cfg.out_dir = e["output"].get<std::string>();
    if (e.contains("threads")) cfg.threads = std::max<std::size_t>(1, e["threads"].get<std::size_t>());
  }
  return cfg;
}

}  // namespace mvlab::harness
