#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snmdp/agents.hpp"
#include "snmdp/contraction.hpp"
#include "snmdp/heads.hpp"
#include "snmdp/linear_td.hpp"

namespace snmdp::harness {

enum class Subcommand { tabular_contract, td_analysis, grad_bounds, influence, train, plot_data };

const char* to_string(Subcommand s);
Subcommand subcommand_from_string(const std::string& name);
const std::vector<Subcommand>& all_subcommands();

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitCheckFailed = 2;
inline constexpr int kExitRuntime = 3;

// ---- subcommand configs ----------------------------------------------------

struct TabularContractConfig {
  ContractionOptions options;
};

struct TdAnalysisConfig {
  ConvergenceOptions convergence;
  std::vector<NoiseCase> cases{std::begin(kAllNoiseCases), std::end(kAllNoiseCases)};
  bool divergence = true;
  std::vector<double> divergence_scales = {1.0, 10.0, 100.0};
  std::size_t divergence_steps = 200'000;
  RandomSystemSpec divergence_system;  // base system for the case-(ii) construction
};

struct GradBoundsConfig {
  GradientBoundOptions options;
  bool per_draw_rows = true;  // false keeps only the per-configuration summary
};

struct InfluenceConfig {
  std::size_t instances = 50;
  std::vector<double> eps_values = {1e-3, 1e-4, 1e-5};
  double min_order = 0.9;  // accepted observed rate per decade
  double max_order = 1.1;
  std::size_t corollary_instances = 50;
  double eta_scale = 1e-3;
};

struct AgentSpec {
  std::string name;
  AgentConfig config;
};

struct TrainSweepConfig {
  ControlTask env = ControlTask::cartpole;
  std::size_t episode_cap = kEpisodeCap;
  std::vector<AgentSpec> agents;
  bool noise_free = true;
  std::vector<double> gaussian_std;
  std::vector<double> pgd_epsilon;
  int pgd_iterations = 3;
  std::optional<double> pgd_step_size;
  double pgd_temperature = 1.0;
  std::vector<NoiseSite> sites = {NoiseSite::both};
  std::size_t seeds = 5;
  double final_fraction = 0.1;
  std::size_t smoothing_window = 10;
};

struct PlotDataConfig {
  std::filesystem::path input;  // episodes CSV written by train
  std::size_t window = 10;
};

// ---- training sweep ----------------------------------------------------------

struct RunSpec {
  std::size_t run_id = 0;
  std::size_t agent_index = 0;
  std::size_t seed_index = 0;
  NoiseInjection injection;
  std::string group;  // agent/noise-kind/site/strength label shared across seeds
};

struct RunOutcome {
  RunSpec spec;
  TrainResult result;
  double final_return = 0.0;
};

struct GroupSummary {
  std::string group;
  std::string agent;
  std::string loss_kind;
  std::string noise_kind;  // none | gaussian | pgd
  std::string site;
  double noise_param = 0.0;
  std::size_t runs = 0;
  double mean_final_return = 0.0;
  double stderr_final_return = 0.0;
  std::size_t diverged_runs = 0;
  std::size_t bound_violations = 0;
};

struct TrainSweepResult {
  std::vector<RunOutcome> runs;  // run_id order
  std::vector<GroupSummary> groups;
};

// Enumerates agent x (noise-free, gaussian x strength x site, pgd x strength x
// site) x seed, with run ids in that order.
std::vector<RunSpec> enumerate_runs(const TrainSweepConfig& config);

// Runs every spec on `workers` threads (0 = hardware concurrency). Each run
// seeds from derive_seed(master_seed, run_id), so results do not depend on
// the worker count.
TrainSweepResult run_training_sweep(const TrainSweepConfig& config, std::uint64_t master_seed, unsigned workers,
                                    const std::function<void(const RunOutcome&)>& on_done = {});

// ---- learning curves ---------------------------------------------------------

// Trailing moving average; the first window-1 points average what exists.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

struct Curve {
  std::vector<double> mean;
  std::vector<double> stderr_band;  // sample standard deviation / sqrt(runs); 0 for one run
};

// Smooths each run, then averages across runs over the common episode prefix.
Curve average_curves(const std::vector<std::vector<double>>& runs, std::size_t window);

struct MeanStderr {
  double mean = 0.0;
  double stderr_value = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

// ---- experiments -----------------------------------------------------------

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config `seed` key
  unsigned workers = 0;
  std::filesystem::path out_dir = "results";
};

struct Outcome {
  int status = kExitOk;
  std::string summary;
  std::vector<std::filesystem::path> files;
};

// A parsed and schema-validated configuration for one subcommand.
class Experiment {
 public:
  static Experiment from_file(Subcommand sub, const std::filesystem::path& path);
  static Experiment from_string(Subcommand sub, const std::string& text, const std::string& origin = "<string>");

  Subcommand subcommand() const { return sub_; }
  std::uint64_t config_hash() const { return hash_; }
  std::uint64_t config_seed() const { return seed_; }
  const std::string& canonical() const { return canonical_; }

  const TabularContractConfig& tabular_contract() const;
  const TdAnalysisConfig& td_analysis() const;
  const GradBoundsConfig& grad_bounds() const;
  const InfluenceConfig& influence() const;
  const TrainSweepConfig& train() const;
  const PlotDataConfig& plot_data() const;

  // Writes the subcommand's files into options.out_dir. Runtime failures
  // surface as status 3; failed checks as status 2.
  Outcome run(const RunOptions& options) const;

 private:
  Experiment() = default;
  struct Configs;

  Subcommand sub_ = Subcommand::tabular_contract;
  std::uint64_t hash_ = 0;
  std::uint64_t seed_ = 0;
  std::string canonical_;
  std::shared_ptr<const Configs> configs_;
};

// Reads SNMDP_LOG (trace, debug, info, warn, error, off) once; default info.
void init_logging();

}  // namespace snmdp::harness
