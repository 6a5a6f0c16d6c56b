// Acceptance run: one PASS/FAIL line per criterion with pinned workloads and
// tolerances. Exit status is the number of failed criteria (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvlab/mvlab.hpp"

namespace fs = std::filesystem;
using namespace mvlab;
using namespace mvlab::harness;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Verdict()> body;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

fs::path g_out;
std::size_t g_threads = 1;
std::vector<fs::path> g_manifests;

RunOutput run_config(const std::string& text) {
  auto cfg = parse_config_text(text, "acceptance");
  cfg.out_dir = (g_out / "first").string();
  cfg.threads = g_threads;
  auto out = run_and_persist(cfg, nullptr);
  g_manifests.push_back(out.dir / "manifest.json");
  return out;
}

// Brute-force minimum over permutations of the mean matching cost.
double brute_force_w1(const ParticleCloud& u, const ParticleCloud& v) {
  const std::size_t n = u.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += euclidean(u.point(i), v.point(perm[i]));
    best = std::min(best, s / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Verdict solver_oracles() {
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<std::size_t> size(1, 7), dim(1, 3);
  std::normal_distribution<double> normal;
  double worst_assign = 0.0, worst_1d = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = size(gen), d = dim(gen);
    ParticleCloud u(n, d), v(n, d);
    for (double& x : u.data()) x = normal(gen);
    for (double& x : v.data()) x = 2.0 * normal(gen) + 0.5;
    const double a = w1_assignment(u, v).value;
    worst_assign = std::max(worst_assign, std::abs(a - brute_force_w1(u, v)));
    if (d == 1) worst_1d = std::max(worst_1d, std::abs(w1_1d(u, v).value - a));
  }
  return {worst_assign <= 1e-10 && worst_1d <= 1e-12,
          "max |assignment - brute force| = " + fmt(worst_assign) + " (tol 1e-10), max |1d - assignment| = " +
              fmt(worst_1d) + " (tol 1e-12)"};
}

Verdict fixed_point_vs_lyapunov() {
  const auto out = run_config(R"({"kind": "fixed-point", "seed": 101, "options": {"N_ref": 100000}})");
  const auto& s = out.manifest["summary"];
  const double w1 = s["w1_to_exact"].get<double>(), floor = s["mc_floor"].get<double>();
  const double bound = std::min(3.0 * floor, 0.02);
  return {s["converged"].get<bool>() && w1 <= bound,
          "W1(fixed point, Lyapunov law) = " + fmt(w1) + " <= min(3 x floor, 0.02) = " + fmt(bound) + " (c = " +
              fmt(s["floor_constant"].get<double>()) + ", " + std::to_string(s["iterations"].get<int>()) +
              " iterations)"};
}

Verdict contraction_rate() {
  const auto spec = builtin_model("mean-field-gaussian");
  const auto law_b = gaussian_initial(Eigen::VectorXd::Constant(1, -2.0), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto r = contraction_certificate(spec, spec.initial, law_b, 30, 1000, 20, 303, g_threads);
  const double limit = std::log(0.7) + 0.05;
  return {!r.degenerate && r.slope <= limit,
          "fitted slope = " + fmt(r.slope) + " (stderr " + fmt(r.slope_stderr) + ") <= log 0.7 + 0.05 = " + fmt(limit)};
}

RunOutput g_uniform;

Verdict uniform_in_time() {
  g_uniform = run_config(R"({"kind": "uniform-sweep", "seed": 404, "grid": {"N": [100, 1000, 10000], "n_range": [1, 200]},
                             "replicates": 50})");
  const auto& s = g_uniform.manifest["summary"];
  const double slope = s["loglog_slope"].get<double>();
  const bool mono = s["decreasing_within_2se"].get<bool>();
  std::string sups;
  for (const auto& e : s["sup_over_n"]) sups += " " + fmt(e["sup_mean_w1"].get<double>());
  return {mono && std::abs(slope + 0.5) <= 0.15, "sup_n mean W1 per N:" + sups + "; decreasing within 2 se: " +
                                                     (mono ? "yes" : "no") + "; log-log slope = " + fmt(slope) +
                                                     " (target -0.5 +- 0.15)"};
}

Verdict limit_interchange_check() {
  if (g_uniform.manifest.is_null()) return {false, "uniform sweep did not run"};
  const auto& li = g_uniform.manifest["summary"]["limit_interchange"];
  const double diff = li["difference"].get<double>(), se = li["combined_stderr"].get<double>();
  return {diff <= 3.0 * se, "|n-then-N - N-then-n| = " + fmt(diff) + " <= 3 x combined stderr = " + fmt(3.0 * se) +
                                " (n-then-N " + fmt(li["n_then_N"].get<double>()) + ", N-then-n " +
                                fmt(li["N_then_n"].get<double>()) + ")"};
}

Verdict chaoticity() {
  const auto out = run_config(R"({"kind": "chaos", "seed": 505, "grid": {"N": [64, 128, 256, 512]}, "replicates": 20,
                                  "options": {"k": 2, "T": 2000, "chaos_control": true}})");
  const auto& s = out.manifest["summary"];
  const bool dec = s["interacting"]["decreasing_within_2se"].get<bool>();
  const bool ctrl = s["independent"]["below_mc_floor"].get<bool>();
  std::string stats;
  for (const auto& row : out.table.rows)
    if (row[0] == "interacting") stats += " " + row[3];
  return {dec && ctrl, "statistic per N:" + stats + "; decreasing within 2 se: " + (dec ? "yes" : "no") +
                           "; kappa = 0 control at or below MC floor: " + (ctrl ? "yes" : "no")};
}

Verdict onestep() {
  const auto spec = builtin_model("mean-field-gaussian");
  auto f = [](std::span<const double> x) { return std::tanh(x[0]); };
  std::vector<double> xs, ys;
  bool within = true;
  std::string detail;
  for (std::size_t N : {100u, 1000u, 10000u}) {
    const auto cloud = sample_initial(spec, N, NoiseKey{707, NoiseStream::system, 0, 0, 0});
    const auto r = onestep_mc_error(spec, cloud, f, 1.0, 1000, 708 + N, 100, g_threads);
    within = within && r.within_bound;
    xs.push_back(std::log(static_cast<double>(N)));
    ys.push_back(std::log(r.mean_error));
    detail += " N=" + std::to_string(N) + ": " + fmt(r.mean_error) + " <= " + fmt(r.bound) + " + " + fmt(r.slack) + ";";
  }
  const double slope = stats::linear_fit(xs, ys).slope;
  return {within && std::abs(slope + 0.5) <= 0.15, detail + " log-log slope = " + fmt(slope) + " (target -0.5 +- 0.15)"};
}

Verdict concentration_ordering() {
  const char* eps = "[0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0]";
  const auto gauss = run_config(std::string(R"({"kind": "tails", "seed": 808, "grid": {"N": [1000], "n": [50], "eps": )") +
                                eps + R"(}, "replicates": 10000})");
  const auto bounded = run_config(
      std::string(R"({"kind": "tails", "seed": 809, "model": {"builtin": "mean-field-bounded"},
                      "grid": {"N": [1000], "n": [50], "eps": )") +
      eps + R"(}, "replicates": 10000, "options": {"N_ref": 1000000}})");
  auto part = [](const Json& s, const char* curve) {
    return std::make_pair(s["ordering"][curve]["checked"].get<std::size_t>(),
                          s["ordering"][curve]["violations"].get<std::size_t>());
  };
  const auto poly = part(gauss.manifest["summary"], "poly_uniform");
  const auto expu = part(bounded.manifest["summary"], "exp_uniform");
  const auto iid = part(bounded.manifest["summary"], "iid_exp");
  auto say = [](const char* name, std::pair<std::size_t, std::size_t> p) {
    return std::string(name) + ": " + std::to_string(p.second) + " violations over " + std::to_string(p.first) +
           " checked points" + (p.first == 0 ? " (gate never holds at N = 1000; vacuous)" : "");
  };
  return {poly.second == 0 && expu.second == 0 && iid.second == 0,
          say("polynomial (Gaussian noise)", poly) + "; " + say("exponential (bounded noise)", expu) + "; " +
              say("i.i.d. exponential (bounded noise)", iid)};
}

Verdict formulas() {
  std::vector<std::pair<std::string, double>> errs;
  auto spec = builtin_model("mean-field-gaussian");
  const auto c = derived_constants(spec, 0.05);
  errs.emplace_back("a0", std::abs(c.a0 - 0.25));
  errs.emplace_back("chi", std::abs(c.chi - 0.7));
  errs.emplace_back("theta", std::abs(c.theta_rate - 9.0 / 7.0));
  const auto c4 = derived_constants(builtin_model("mean-field-gaussian", {{"A", 0.25}, {"alpha", 1.0}}), 0.05);
  errs.emplace_back("a(1)", std::abs(c4.a_alpha.value_or(1e9) - 0.09375));
  errs.emplace_back("covering", std::abs(static_cast<double>(covering_count(1.0, 1.0, 1).value) - 162.0));
  errs.emplace_back("alpha(2)", std::abs(bounds::transport_alpha(2.0, 1.0) - 1.0));
  errs.emplace_back("l(e)", std::abs(bounds::ell(std::numbers::e) - 1.0));
  errs.emplace_back("psi(e)", std::abs(bounds::psi(std::numbers::e).value - std::numbers::e * std::log(2.0)));
  bool ok = true;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e <= 1e-12;
    detail += name + " " + fmt(e) + "; ";
  }
  return {ok, "abs errors: " + detail + "tol 1e-12"};
}

Verdict determinism() {
  // every kind at least once; the heavy manifests come from the runs above
  run_config(R"({"kind": "validate", "seed": 1})");
  run_config(R"({"kind": "simulate", "seed": 2, "grid": {"N": [50, 100], "n": [0, 5, 10]}, "replicates": 2})");
  run_config(R"({"kind": "poc-sweep", "seed": 3, "grid": {"N": [100, 1000], "n": [10, 100]}, "replicates": 10})");
  run_config(R"({"kind": "bounds", "seed": 4, "grid": {"N": [100, 10000], "eps": [0.1, 1.0]}})");
  std::size_t identical = 0;
  std::string bad;
  auto strip = [](Json m) {
    m.erase("wall_time_seconds");
    m.erase("execution");
    return m.dump();
  };
  for (const auto& manifest : g_manifests) {
    auto cfg = config_from_manifest(manifest.string());
    cfg.out_dir = (g_out / "rerun").string();
    const auto again = run_and_persist(cfg, nullptr);
    const bool same_csv = read_file((manifest.parent_path() / "results.csv").string()) ==
                          read_file((again.dir / "results.csv").string());
    const bool same_manifest = strip(Json::parse(read_file(manifest.string()))) ==
                               strip(Json::parse(read_file((again.dir / "manifest.json").string())));
    if (same_csv && same_manifest)
      ++identical;
    else
      bad += " " + manifest.parent_path().filename().string();
  }
  return {identical == g_manifests.size() && !g_manifests.empty(),
          std::to_string(identical) + "/" + std::to_string(g_manifests.size()) +
              " reruns byte-identical (results.csv; manifest without wall time)" + (bad.empty() ? "" : "; differ:" + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  g_out = fs::temp_directory_path() / "mvlab-acceptance";
  for (int i = 1; i + 1 < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out") g_out = argv[++i];
    else if (a == "--threads") g_threads = std::max(1, std::stoi(argv[++i]));
  }
  fs::remove_all(g_out);
  fs::create_directories(g_out);

  const std::vector<Criterion> criteria{
      {1, "W1 solver oracle equivalence", 10, solver_oracles},
      {2, "fixed point vs Lyapunov law", 120, fixed_point_vs_lyapunov},
      {3, "contraction rate", 120, contraction_rate},
      {4, "uniform-in-time propagation of chaos", 600, uniform_in_time},
      {5, "limit interchange", 60, limit_interchange_check},
      {6, "chaoticity surrogate", 300, chaoticity},
      {7, "one-step Monte Carlo error", 180, onestep},
      {8, "concentration ordering", 900, concentration_ordering},
      {9, "formula values", 10, formulas},
      {10, "determinism from manifests", 1800, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = v.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << v.detail << " ["
              << fmt(secs) << " s, budget " << c.budget_seconds << " s" << (in_time ? "" : ", OVER BUDGET") << "]"
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
