// snmdp-lab <subcommand> --config <path> [--seed N] [--workers N] [--out DIR]

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snmdp/snmdp.h"

namespace {

int report(snmdp_status status) {
  if (status != SNMDP_OK) std::fprintf(stderr, "snmdp-lab: %s\n", snmdp_last_error());
  return static_cast<int>(status);
}

int run(const std::string& sub, const std::string& config, const std::optional<std::uint64_t>& seed,
        const std::optional<unsigned>& workers, const std::string& out) {
  snmdp_experiment* ex = nullptr;
  if (snmdp_status s = snmdp_experiment_from_file(sub.c_str(), config.c_str(), &ex); s != SNMDP_OK) return report(s);
  snmdp_status status = SNMDP_OK;
  if (seed) status = snmdp_experiment_set_seed(ex, *seed);
  if (status == SNMDP_OK && workers) status = snmdp_experiment_set_workers(ex, *workers);
  if (status == SNMDP_OK) status = snmdp_experiment_set_out_dir(ex, out.c_str());
  if (status != SNMDP_OK) {
    snmdp_experiment_destroy(ex);
    return report(status);
  }

  status = snmdp_experiment_run(ex);
  std::printf("%s %s (config %016llx, seed %llu)\n", sub.c_str(), status == SNMDP_OK ? "ok" : "FAILED",
              static_cast<unsigned long long>(snmdp_experiment_config_hash(ex)),
              static_cast<unsigned long long>(snmdp_experiment_seed(ex)));
  std::printf("%s\n", snmdp_experiment_summary(ex));
  for (size_t i = 0; i < snmdp_experiment_file_count(ex); ++i) std::printf("wrote %s\n", snmdp_experiment_file(ex, i));
  snmdp_experiment_destroy(ex);
  return static_cast<int>(status);
}

const std::map<std::string, std::string> kDescriptions = {
    {"tabular-contract", "contraction and fixed-point checks on random tabular MDPs"},
    {"td-analysis", "linear TD(0) convergence conditions against simulation"},
    {"grad-bounds", "histogram-head gradient bounds and least-squares witnesses"},
    {"influence", "influence-function rate and corollary residuals"},
    {"train", "DQN and histogram agents on CartPole or Mountain Car"},
    {"plot-data", "learning-curve tables from a train episodes.csv"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiments on state-noisy MDPs", "snmdp-lab"};
  app.set_version_flag("--version", std::string(snmdp_version()));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out = "results";

  for (size_t i = 0; i < snmdp_subcommand_count(); ++i) {
    CLI::App* sub = app.add_subcommand(snmdp_subcommand_name(i));
    if (auto it = kDescriptions.find(sub->get_name()); it != kDescriptions.end()) sub->description(it->second);
    sub->add_option("--config", config, "TOML configuration file")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--workers", workers, "worker threads (default: all cores)");
    sub->add_option("--out", out, "output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return run(app.get_subcommands().front()->get_name(), config, seed, workers, out);
}
