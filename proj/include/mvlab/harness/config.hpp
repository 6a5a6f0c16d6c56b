#pragma once

// Experiment configuration: strict parsing, documented defaults and the
// canonical form used for hashing and manifests.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvlab/error.hpp"
#include "mvlab/harness/models.hpp"
#include "mvlab/harness/strict_json.hpp"

namespace mvlab::harness {

enum class ExperimentKind { simulate, fixed_point, poc_sweep, uniform_sweep, tails, chaos, bounds, validate };

inline const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names{
      {ExperimentKind::simulate, "simulate"},   {ExperimentKind::fixed_point, "fixed-point"},
      {ExperimentKind::poc_sweep, "poc-sweep"}, {ExperimentKind::uniform_sweep, "uniform-sweep"},
      {ExperimentKind::tails, "tails"},         {ExperimentKind::chaos, "chaos"},
      {ExperimentKind::bounds, "bounds"},       {ExperimentKind::validate, "validate"}};
  return names;
}

inline std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kind_names())
    if (kind == k) return name;
  return "validate";
}

inline std::optional<ExperimentKind> kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kind_names())
    if (name == s) return kind;
  return std::nullopt;
}

struct Grids {
  std::vector<std::size_t> N;
  std::vector<std::size_t> n;
  std::vector<double> eps;
};

// Every tunable of every kind. Zero means "derive" where noted.
struct Options {
  double gamma0 = 0.1;
  double gamma = 0.1;
  std::size_t N_ref = 0;        // fixed-point / reference clouds; 0 -> 10 x max N (10^5 for fixed-point)
  double tol = 0.0;             // fixed-point tolerance; 0 -> the Monte Carlo floor
  std::size_t max_iter = 200;
  std::size_t k = 2;            // chaos marginal order
  std::size_t T = 0;            // chaos horizon / simulate horizon; 0 -> kind default
  std::size_t burn_in = 0;      // 0 -> T / 2
  bool chaos_control = true;    // also run the non-interacting control (builtin models)
  std::string reference = "auto";  // auto | exact | particles
  // constants of the theoretical curves
  double C1 = 1.0;
  double N0 = 1.0;
  double a1 = 1.0;
  double a2 = 1.0;
  double a3 = 1.0;
  double R = 2.0;  // truncation radius of the per-step polynomial bound
  double zeta0 = 1.0;
  double c_d = 1.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::validate;
  std::uint64_t seed = 0;
  ModelRef model;
  Grids grid;
  std::size_t replicates = 0;  // 0 -> kind default
  Options options;
  // Not part of the experiment identity.
  std::string out_dir = "runs";
  std::size_t threads = 1;
};

inline std::size_t default_replicates(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simulate: return 1;
    case ExperimentKind::poc_sweep:
    case ExperimentKind::uniform_sweep:
    case ExperimentKind::chaos: return 20;
    case ExperimentKind::tails: return 1000;
    default: return 0;
  }
}

// Canonical JSON of the experiment identity (sorted keys, every default filled).
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed;
  Json m;
  if (c.model.inline_spec) {
    m["inline"] = *c.model.inline_spec;
  } else {
    m["builtin"] = c.model.builtin;
    m["params"] = Json::object();
    for (const auto& [k, v] : c.model.params) m["params"][k] = v;
  }
  j["model"] = m;
  j["grid"] = {{"N", c.grid.N}, {"n", c.grid.n}, {"eps", c.grid.eps}};
  j["replicates"] = c.replicates;
  const auto& o = c.options;
  j["options"] = {{"gamma0", o.gamma0}, {"gamma", o.gamma},     {"N_ref", o.N_ref},
                  {"tol", o.tol},       {"max_iter", o.max_iter}, {"k", o.k},
                  {"T", o.T},           {"burn_in", o.burn_in}, {"chaos_control", o.chaos_control},
                  {"reference", o.reference}, {"C1", o.C1},     {"N0", o.N0},
                  {"a1", o.a1},         {"a2", o.a2},           {"a3", o.a3},
                  {"R", o.R},           {"zeta0", o.zeta0},     {"c_d", o.c_d}};
  return j;
}

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

namespace detail {

[[noreturn]] inline void schema_error(const JsonDocument& doc, const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::config, doc.where(path) + ": " + path + ": " + msg);
}

inline double get_number(const JsonDocument& doc, const Json& v, const std::string& path) {
  if (!v.is_number()) schema_error(doc, path, "expected a number");
  return v.get<double>();
}

inline std::size_t get_count(const JsonDocument& doc, const Json& v, const std::string& path) {
  if (!v.is_number_unsigned()) schema_error(doc, path, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

inline std::vector<std::size_t> get_count_list(const JsonDocument& doc, const Json& v, const std::string& path) {
  if (!v.is_array()) schema_error(doc, path, "expected an array of positive integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_count(doc, v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

// Builds a config from a parsed document. `kind_override` comes from the CLI
// subcommand; a config naming a different kind is rejected.
inline ExperimentConfig config_from_document(const JsonDocument& doc,
                                             std::optional<ExperimentKind> kind_override = std::nullopt) {
  using detail::schema_error;
  const Json& j = doc.value;
  if (!j.is_object()) schema_error(doc, "", "top level must be an object");
  require_known_keys(doc, j, "", {"kind", "seed", "model", "grid", "replicates", "options", "output", "threads"});
  ExperimentConfig c;

  if (j.contains("kind")) {
    if (!j["kind"].is_string()) schema_error(doc, "kind", "expected a string");
    const auto k = kind_from_string(j["kind"].get<std::string>());
    if (!k) schema_error(doc, "kind", "unknown experiment kind '" + j["kind"].get<std::string>() + "'");
    if (kind_override && *kind_override != *k)
      schema_error(doc, "kind", "config is for '" + to_string(*k) + "' but '" + to_string(*kind_override) +
                                    "' was requested");
    c.kind = *k;
  } else if (kind_override) {
    c.kind = *kind_override;
  } else {
    schema_error(doc, "kind", "missing experiment kind");
  }

  if (!j.contains("seed")) schema_error(doc, "seed", "missing seed (mandatory)");
  if (!j["seed"].is_number_unsigned()) schema_error(doc, "seed", "expected an unsigned 64-bit integer");
  c.seed = j["seed"].get<std::uint64_t>();

  if (j.contains("model")) {
    const Json& m = j["model"];
    if (!m.is_object()) schema_error(doc, "model", "expected an object");
    require_known_keys(doc, m, "model", {"builtin", "params", "inline"});
    if (m.contains("inline")) {
      if (m.contains("builtin") || m.contains("params"))
        schema_error(doc, "model", "give either 'builtin' (+ 'params') or 'inline', not both");
      if (!m["inline"].is_object()) schema_error(doc, "model.inline", "expected an object");
      require_known_keys(doc, m["inline"], "model.inline",
                         {"dim", "A", "delta", "kappa", "noise", "initial", "alpha", "exp_alpha"});
      if (m["inline"].contains("noise"))
        require_known_keys(doc, m["inline"]["noise"], "model.inline.noise", {"family", "scale"});
      if (m["inline"].contains("initial"))
        require_known_keys(doc, m["inline"]["initial"], "model.inline.initial", {"mean", "cov", "shift_sd"});
      c.model.inline_spec = m["inline"];
    } else {
      if (m.contains("builtin")) {
        if (!m["builtin"].is_string()) schema_error(doc, "model.builtin", "expected a string");
        c.model.builtin = m["builtin"].get<std::string>();
      }
      if (m.contains("params")) {
        if (!m["params"].is_object()) schema_error(doc, "model.params", "expected an object");
        for (auto it = m["params"].begin(); it != m["params"].end(); ++it)
          c.model.params[it.key()] = detail::get_number(doc, it.value(), "model.params." + it.key());
      }
    }
  }

  if (j.contains("grid")) {
    const Json& g = j["grid"];
    if (!g.is_object()) schema_error(doc, "grid", "expected an object");
    require_known_keys(doc, g, "grid", {"N", "n", "n_range", "eps"});
    if (g.contains("N")) c.grid.N = detail::get_count_list(doc, g["N"], "grid.N");
    if (g.contains("n") && g.contains("n_range")) schema_error(doc, "grid.n_range", "give either 'n' or 'n_range'");
    if (g.contains("n")) c.grid.n = detail::get_count_list(doc, g["n"], "grid.n");
    if (g.contains("n_range")) {
      const auto r = detail::get_count_list(doc, g["n_range"], "grid.n_range");
      if (r.size() != 2 || r[0] > r[1]) schema_error(doc, "grid.n_range", "expected [first, last] with first <= last");
      for (std::size_t n = r[0]; n <= r[1]; ++n) c.grid.n.push_back(n);
    }
    if (g.contains("eps")) {
      if (!g["eps"].is_array()) schema_error(doc, "grid.eps", "expected an array of positive numbers");
      for (std::size_t i = 0; i < g["eps"].size(); ++i) {
        const std::string p = "grid.eps[" + std::to_string(i) + "]";
        const double e = detail::get_number(doc, g["eps"][i], p);
        if (!(e > 0.0)) schema_error(doc, p, "must be positive");
        c.grid.eps.push_back(e);
      }
    }
    for (std::size_t i = 0; i < c.grid.N.size(); ++i)
      if (c.grid.N[i] == 0) schema_error(doc, "grid.N[" + std::to_string(i) + "]", "must be positive");
  }

  if (j.contains("replicates")) c.replicates = detail::get_count(doc, j["replicates"], "replicates");
  if (c.replicates == 0) c.replicates = default_replicates(c.kind);
  if (j.contains("output")) {
    if (!j["output"].is_string()) schema_error(doc, "output", "expected a string");
    c.out_dir = j["output"].get<std::string>();
  }
  if (j.contains("threads")) c.threads = std::max<std::size_t>(1, detail::get_count(doc, j["threads"], "threads"));

  if (j.contains("options")) {
    const Json& o = j["options"];
    if (!o.is_object()) schema_error(doc, "options", "expected an object");
    require_known_keys(doc, o, "options",
                       {"gamma0", "gamma", "N_ref", "tol", "max_iter", "k", "T", "burn_in", "chaos_control",
                        "reference", "C1", "N0", "a1", "a2", "a3", "R", "zeta0", "c_d"});
    auto& op = c.options;
    auto num = [&](const char* key, double& dst) {
      if (o.contains(key)) dst = detail::get_number(doc, o[key], std::string("options.") + key);
    };
    auto cnt = [&](const char* key, std::size_t& dst) {
      if (o.contains(key)) dst = detail::get_count(doc, o[key], std::string("options.") + key);
    };
    num("gamma0", op.gamma0);
    num("gamma", op.gamma);
    cnt("N_ref", op.N_ref);
    num("tol", op.tol);
    cnt("max_iter", op.max_iter);
    cnt("k", op.k);
    cnt("T", op.T);
    cnt("burn_in", op.burn_in);
    num("C1", op.C1);
    num("N0", op.N0);
    num("a1", op.a1);
    num("a2", op.a2);
    num("a3", op.a3);
    num("R", op.R);
    num("zeta0", op.zeta0);
    num("c_d", op.c_d);
    if (o.contains("chaos_control")) {
      if (!o["chaos_control"].is_boolean()) schema_error(doc, "options.chaos_control", "expected a boolean");
      op.chaos_control = o["chaos_control"].get<bool>();
    }
    if (o.contains("reference")) {
      if (!o["reference"].is_string()) schema_error(doc, "options.reference", "expected a string");
      op.reference = o["reference"].get<std::string>();
      if (op.reference != "auto" && op.reference != "exact" && op.reference != "particles")
        schema_error(doc, "options.reference", "expected one of auto, exact, particles");
    }
  }

  // Grids required per kind.
  auto need = [&](bool ok, const std::string& field) {
    if (!ok) schema_error(doc, field, "must be a nonempty list for " + to_string(c.kind));
  };
  switch (c.kind) {
    case ExperimentKind::simulate: need(!c.grid.N.empty(), "grid.N"); break;
    case ExperimentKind::poc_sweep:
    case ExperimentKind::uniform_sweep:
      need(!c.grid.N.empty(), "grid.N");
      need(!c.grid.n.empty(), "grid.n");
      break;
    case ExperimentKind::tails:
      need(!c.grid.N.empty(), "grid.N");
      need(!c.grid.n.empty(), "grid.n");
      need(!c.grid.eps.empty(), "grid.eps");
      break;
    case ExperimentKind::chaos: need(!c.grid.N.empty(), "grid.N"); break;
    case ExperimentKind::bounds:
      need(!c.grid.N.empty(), "grid.N");
      need(!c.grid.eps.empty(), "grid.eps");
      break;
    default: break;
  }
  if ((c.kind == ExperimentKind::poc_sweep || c.kind == ExperimentKind::uniform_sweep ||
       c.kind == ExperimentKind::chaos) && c.replicates < 2)
    schema_error(doc, "replicates", "need at least 2 replicates for standard errors");
  try {
    (void)build_model(c.model);
  } catch (const Error& e) {
    schema_error(doc, "model", e.what());
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin,
                                          std::optional<ExperimentKind> kind_override = std::nullopt) {
  return config_from_document(parse_strict_json(text, origin), kind_override);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline ExperimentConfig parse_config(const std::string& path,
                                     std::optional<ExperimentKind> kind_override = std::nullopt) {
  return parse_config_text(read_file(path), path, kind_override);
}

}  // namespace mvlab::harness
