// mvlab: runs one experiment kind from a strict JSON config and writes
// <out>/<kind>-<hash>/{results.csv, manifest.json}.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mvlab/harness.hpp"

namespace {

using mvlab::Error;
using mvlab::ErrorKind;
namespace h = mvlab::harness;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::io:
    case ErrorKind::invalid_spec: return 2;
    case ErrorKind::regime: return 3;
    case ErrorKind::numeric:
    case ErrorKind::domain:
    case ErrorKind::unsupported: return 4;
  }
  return 4;
}

struct Flags {
  std::string config;
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

void report(const h::RunOutput& out, const Flags& flags) {
  if (out.table.kind == "validate") {
    for (const auto& row : out.table.rows) std::cout << row[0] << "=" << row[1] << "\n";
  } else if (!flags.quiet) {
    std::cout << out.manifest["summary"].dump() << "\n";
  }
  std::cout << "output: " << out.dir.string() << "\n";
}

int run_kind(h::ExperimentKind kind, const Flags& flags) {
  h::JsonDocument doc = h::parse_strict_json(h::read_file(flags.config), flags.config);
  if (flags.seed && doc.value.is_object()) doc.value["seed"] = *flags.seed;
  h::ExperimentConfig cfg = h::config_from_document(doc, kind);
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.threads) cfg.threads = std::max<std::size_t>(1, *flags.threads);
  report(h::run_and_persist(cfg, flags.quiet ? nullptr : &std::cerr), flags);
  return 0;
}

int rerun(const Flags& flags) {
  h::ExperimentConfig cfg = h::config_from_manifest(flags.manifest);
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.threads) cfg.threads = std::max<std::size_t>(1, *flags.threads);
  report(h::run_and_persist(cfg, flags.quiet ? nullptr : &std::cerr), flags);
  return 0;
}

void add_common(CLI::App* sub, Flags& flags) {
  sub->add_option("--out", flags.out, "Output directory (overrides the config)");
  sub->add_option("--threads", flags.threads, "Worker threads");
  sub->add_flag("--quiet", flags.quiet, "Suppress progress and summary output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field particle system experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::optional<h::ExperimentKind> chosen;
  for (const auto& [kind, name] : h::kind_names()) {
    auto* sub = app.add_subcommand(name, "Run a " + name + " experiment");
    sub->add_option("--config", flags.config, "Experiment config (strict JSON)")->required();
    sub->add_option("--seed", flags.seed, "Seed override");
    add_common(sub, flags);
    sub->callback([&chosen, kind = kind] { chosen = kind; });
  }
  auto* re = app.add_subcommand("rerun", "Re-run an experiment from its manifest");
  re->add_option("--manifest", flags.manifest, "manifest.json of a previous run")->required();
  add_common(re, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return chosen ? run_kind(*chosen, flags) : rerun(flags);
  } catch (const Error& e) {
    std::cerr << "mvlab: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "mvlab: numeric: " << e.what() << "\n";
    return 4;
  }
}
