#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "pool.hpp"
#include "snmdp/harness.hpp"
#include "snmdp/rng.hpp"

#include <spdlog/spdlog.h>

namespace snmdp::harness {

namespace {

std::string short_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string group_label(const std::string& agent, const NoiseInjection& inj) {
  if (inj.site == NoiseSite::none) return agent + "_none";
  return agent + "_" + inj.kind() + "_" + to_string(inj.site) + "_" + short_real(inj.strength());
}

}  // namespace

std::vector<RunSpec> enumerate_runs(const TrainSweepConfig& config) {
  std::vector<NoiseInjection> injections;
  if (config.noise_free) injections.push_back(NoiseInjection{});
  for (double std : config.gaussian_std)
    for (NoiseSite site : config.sites) injections.push_back({site, GaussianNoise{std}, config.pgd_temperature});
  for (double eps : config.pgd_epsilon)
    for (NoiseSite site : config.sites)
      injections.push_back(
          {site, PgdNoise{eps, config.pgd_iterations, config.pgd_step_size}, config.pgd_temperature});

  std::vector<RunSpec> runs;
  for (std::size_t a = 0; a < config.agents.size(); ++a)
    for (const auto& inj : injections)
      for (std::size_t s = 0; s < config.seeds; ++s) {
        RunSpec r;
        r.run_id = runs.size();
        r.agent_index = a;
        r.seed_index = s;
        r.injection = inj;
        r.group = group_label(config.agents[a].name, inj);
        runs.push_back(std::move(r));
      }
  return runs;
}

TrainSweepResult run_training_sweep(const TrainSweepConfig& config, std::uint64_t master_seed, unsigned workers,
                                    const std::function<void(const RunOutcome&)>& on_done) {
  const std::vector<RunSpec> specs = enumerate_runs(config);
  TrainSweepResult out;
  out.runs.resize(specs.size());
  std::mutex done_mutex;
  parallel_for(specs.size(), workers, [&](std::size_t i) {
    const RunSpec& spec = specs[i];
    TrainConfig tc{config.env, config.episode_cap, config.agents[spec.agent_index].config, spec.injection};
    RunOutcome r;
    r.spec = spec;
    r.result = train(tc, derive_seed(master_seed, spec.run_id));
    r.final_return = r.result.final_return(config.final_fraction);
    spdlog::info("run {}/{} {} seed {}: final return {:.1f}{}", i + 1, specs.size(), spec.group, spec.seed_index,
                 r.final_return, r.result.diverged ? " (diverged)" : "");
    out.runs[i] = r;
    if (on_done) {
      std::lock_guard<std::mutex> lock(done_mutex);
      on_done(out.runs[i]);
    }
  });

  for (const auto& r : out.runs) {
    auto it = std::find_if(out.groups.begin(), out.groups.end(),
                           [&](const GroupSummary& g) { return g.group == r.spec.group; });
    if (it == out.groups.end()) {
      GroupSummary g;
      const AgentSpec& agent = config.agents[r.spec.agent_index];
      g.group = r.spec.group;
      g.agent = agent.name;
      g.loss_kind = to_string(agent.config.loss_kind);
      g.site = to_string(r.spec.injection.site);
      g.noise_kind = r.spec.injection.site == NoiseSite::none ? "none" : r.spec.injection.kind();
      g.noise_param = r.spec.injection.site == NoiseSite::none ? 0.0 : r.spec.injection.strength();
      out.groups.push_back(g);
      it = out.groups.end() - 1;
    }
    ++it->runs;
    if (r.result.diverged) ++it->diverged_runs;
    it->bound_violations += r.result.bound_violations;
  }
  for (auto& g : out.groups) {
    std::vector<double> finals;
    for (const auto& r : out.runs)
      if (r.spec.group == g.group) finals.push_back(r.final_return);
    const MeanStderr ms = mean_stderr(finals);
    g.mean_final_return = ms.mean;
    g.stderr_final_return = ms.stderr_value;
  }
  return out;
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0) window = 1;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += values[j];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double n = static_cast<double>(xs.size());
  r.stderr_value = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return r;
}

Curve average_curves(const std::vector<std::vector<double>>& runs, std::size_t window) {
  Curve c;
  if (runs.empty()) return c;
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  std::vector<std::vector<double>> smoothed;
  for (const auto& r : runs) smoothed.push_back(smooth(r, window));
  c.mean.resize(len);
  c.stderr_band.resize(len);
  std::vector<double> column(runs.size());
  for (std::size_t e = 0; e < len; ++e) {
    for (std::size_t i = 0; i < runs.size(); ++i) column[i] = smoothed[i][e];
    const MeanStderr ms = mean_stderr(column);
    c.mean[e] = ms.mean;
    c.stderr_band[e] = ms.stderr_value;
  }
  return c;
}

}  // namespace snmdp::harness
