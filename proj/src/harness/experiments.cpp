#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "csv.hpp"
#include "pool.hpp"
#include "snmdp/error.hpp"
#include "snmdp/harness.hpp"
#include "snmdp/rng.hpp"

namespace snmdp::harness {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDivergenceStream = 3'000'000'000ULL;
constexpr std::size_t kMaxListed = 20;

struct Context {
  FileHeader header;
  fs::path dir;
  unsigned workers = 0;
  Outcome* outcome = nullptr;

  CsvWriter open(const std::string& name, const std::vector<std::string>& columns) const {
    outcome->files.push_back(dir / name);
    return CsvWriter(dir / name, header, columns);
  }
};

std::string fmt_real(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---- tabular-contract --------------------------------------------------------

void run_tabular(const TabularContractConfig& c, std::uint64_t seed, const Context& ctx) {
  const ContractionReport report = tabular_contraction_suite(seed, c.options);
  CsvWriter rows = ctx.open("contract.csv", {"pair_id", "mdp_id", "metric", "ratio", "bound", "pass"});
  for (const auto& r : report.rows) rows.row(r.pair_id, r.mdp_id, r.metric, r.ratio, r.bound, r.pass);
  rows.close();

  const auto summaries = report.summarize();
  CsvWriter sum = ctx.open("contract_summary.csv", {"metric", "count", "failures", "max_ratio", "bound", "pass"});
  for (const auto& s : summaries) sum.row(s.metric, s.count, s.failures, s.max_ratio, s.bound, s.failures == 0);
  sum.close();

  std::ostringstream os;
  os << report.rows.size() << " rows over " << summaries.size() << " metrics";
  for (const auto& s : summaries)
    os << "\n  " << s.metric << ": " << (s.failures ? "FAIL" : "pass") << " max " << fmt_real(s.max_ratio)
       << " bound " << fmt_real(s.bound) << " (" << s.count << " rows)";
  if (!report.all_pass()) {
    CsvWriter cex = ctx.open("counterexamples.csv", {"description"});
    for (const auto& d : report.counterexamples) cex.row(d);
    cex.close();
    os << "\n" << report.counterexamples.size() << " counterexamples:";
    for (std::size_t i = 0; i < std::min(kMaxListed, report.counterexamples.size()); ++i)
      os << "\n  " << report.counterexamples[i];
    ctx.outcome->status = kExitCheckFailed;
  }
  ctx.outcome->summary = os.str();
}

// ---- td-analysis -------------------------------------------------------------

void write_contingency_row(CsvWriter& w, const std::string& label, const ContingencyTable& t) {
  w.row(label, t.counts[1][1], t.counts[1][0], t.counts[0][1], t.counts[0][0]);
}

void run_td(const TdAnalysisConfig& c, std::uint64_t seed, const Context& ctx) {
  std::vector<std::vector<ConvergenceRow>> per_system(c.convergence.systems);
  parallel_for(c.convergence.systems, ctx.workers, [&](std::size_t id) {
    per_system[id] = td_convergence_system(seed, id, c.convergence);
    spdlog::debug("td system {} done", id);
  });
  std::vector<ConvergenceRow> rows;
  for (auto& sys : per_system)
    for (auto& r : sys)
      if (std::find(c.cases.begin(), c.cases.end(), r.noise_case) != c.cases.end()) rows.push_back(r);

  CsvWriter out = ctx.open("td_analysis.csv", {"system_id", "case", "min_eig_A", "min_eig_condition_matrix",
                                               "condition_holds", "empirical_converged", "final_residual",
                                               "diverged_seeds"});
  for (const auto& r : rows)
    out.row(r.system_id, to_string(r.noise_case), r.min_eig_a, r.min_eig_condition, r.condition_holds,
            r.empirical_converged, r.final_residual, r.diverged_seeds);
  out.close();

  CsvWriter table = ctx.open("contingency.csv", {"case", "holds_converged", "holds_not_converged",
                                                 "fails_converged", "fails_not_converged"});
  const ContingencyTable all = contingency(rows);
  write_contingency_row(table, "all", all);
  for (NoiseCase nc : c.cases) write_contingency_row(table, to_string(nc), contingency(rows, nc));
  table.close();

  std::ostringstream os;
  os << rows.size() << " system/case rows; condition holds: " << all.counts[1][1] << " converged, "
     << all.counts[1][0] << " not converged; condition fails: " << all.counts[0][1] << " converged, "
     << all.counts[0][0] << " not converged";
  if (all.counts[1][0] > 0) {
    ctx.outcome->status = kExitCheckFailed;
    os << "\ncounterexamples (condition holds, not converged):";
    std::size_t listed = 0;
    for (const auto& r : rows)
      if (r.condition_holds && !r.empirical_converged && listed++ < kMaxListed)
        os << "\n  system " << r.system_id << " case " << to_string(r.noise_case) << " residual "
           << fmt_real(r.final_residual) << " min_eig_A " << fmt_real(r.min_eig_a);
  }

  if (c.divergence) {
    Rng rng = make_stream(seed, kDivergenceStream);
    const LinearTDSystem base = random_linear_system(rng, c.divergence_system);
    const auto probes = divergence_sweep(base, c.divergence_scales, c.divergence_steps, rng());
    CsvWriter div = ctx.open("divergence.csv", {"scale", "min_eig_condition_matrix", "flagged_divergent",
                                                "distance_next", "distance_none", "diverges"});
    bool any = false;
    for (const auto& p : probes) {
      div.row(p.c, p.min_eig_condition, p.flagged_divergent, p.distance_next, p.distance_none, p.diverges());
      any = any || p.diverges();
    }
    div.close();
    os << "\ndivergence probes: " << std::count_if(probes.begin(), probes.end(), [](auto& p) { return p.diverges(); })
       << " of " << probes.size() << " diverge or miss the fixed point by > 10x";
    if (!any) ctx.outcome->status = kExitCheckFailed;
  }
  ctx.outcome->summary = os.str();
}

// ---- grad-bounds -------------------------------------------------------------

void run_grad(const GradBoundsConfig& c, std::uint64_t seed, const Context& ctx) {
  const GradientBoundReport report = gradient_bound_analysis(seed, c.options, c.per_draw_rows);
  if (c.per_draw_rows) {
    CsvWriter rows = ctx.open("grad_bounds.csv", {"trial", "loss_kind", "mode", "k", "l", "input_scale",
                                                  "grad_norm", "bound", "within_bound"});
    for (const auto& r : report.rows)
      rows.row(r.trial, r.loss_kind, r.mode, r.k, r.l, r.input_scale, r.grad_norm, r.bound, r.within_bound);
    rows.close();
  }
  CsvWriter sum = ctx.open("grad_bounds_summary.csv", {"mode", "k", "l", "bound", "max_histogram_grad",
                                                       "witness_grad", "histogram_within", "witness_exceeds"});
  std::ostringstream os;
  os << report.summaries.size() << " configurations x " << c.options.draws << " draws";
  for (const auto& s : report.summaries) {
    sum.row(s.mode, s.k, s.l, s.bound, s.max_histogram_grad, s.witness_grad, s.histogram_within, s.witness_exceeds);
    os << "\n  " << s.mode << " k=" << s.k << " l=" << fmt_real(s.l) << ": max/bound "
       << fmt_real(s.max_histogram_grad / s.bound) << (s.histogram_within ? "" : " EXCEEDS") << ", witness/bound "
       << fmt_real(s.witness_grad / s.bound) << (s.witness_exceeds ? "" : " TOO SMALL");
  }
  sum.close();
  if (!report.all_pass()) ctx.outcome->status = kExitCheckFailed;
  ctx.outcome->summary = os.str();
}

// ---- influence ---------------------------------------------------------------

void run_influence(const InfluenceConfig& c, std::uint64_t seed, const Context& ctx) {
  const auto rate = influence_rate_check(seed, c.instances, c.eps_values);
  CsvWriter r = ctx.open("influence_rate.csv", {"instance", "eps", "error", "observed_order", "pass"});
  std::size_t rate_fail = 0;
  for (const auto& row : rate) {
    const bool pass = std::isnan(row.observed_order) ||
                      (row.observed_order >= c.min_order && row.observed_order <= c.max_order);
    if (!pass) ++rate_fail;
    r.row(row.instance, row.eps, row.error, row.observed_order, pass);
  }
  r.close();

  const auto cor = corollary_sweep(seed, c.corollary_instances, c.eta_scale);
  CsvWriter k = ctx.open("corollary.csv", {"instance", "residual", "residual_half", "shrink_factor", "pass"});
  std::size_t cor_fail = 0;
  for (const auto& row : cor) {
    if (!row.pass()) ++cor_fail;
    k.row(row.instance, row.residual, row.residual_half, row.residual / row.residual_half, row.pass());
  }
  k.close();

  std::ostringstream os;
  os << rate.size() << " rate rows, " << rate_fail << " outside [" << fmt_real(c.min_order) << ", "
     << fmt_real(c.max_order) << "]; " << cor.size() << " corollary instances, " << cor_fail
     << " shrink by less than 3 when eta is halved";
  if (rate_fail || cor_fail) ctx.outcome->status = kExitCheckFailed;
  ctx.outcome->summary = os.str();
}

// ---- train / plot-data -------------------------------------------------------

struct CurveSet {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> runs;

  void add(const std::string& group, std::vector<double> returns) {
    if (!runs.count(group)) order.push_back(group);
    runs[group].push_back(std::move(returns));
  }
};

void write_curves(const CurveSet& set, std::size_t window, const Context& ctx, const std::string& subdir) {
  for (const auto& g : set.order) {
    const Curve curve = average_curves(set.runs.at(g), window);
    CsvWriter w = ctx.open((fs::path(subdir) / (g + ".csv")).string(), {"episode", "mean", "stderr"});
    for (std::size_t e = 0; e < curve.mean.size(); ++e) w.row(e, curve.mean[e], curve.stderr_band[e]);
    w.close();
  }
}

void run_train(const TrainSweepConfig& c, std::uint64_t seed, const Context& ctx) {
  const TrainSweepResult res = run_training_sweep(c, seed, ctx.workers);

  CsvWriter ep = ctx.open("episodes.csv", {"run_id", "group", "agent", "loss_kind", "noise_kind", "site",
                                           "noise_param", "seed_index", "episode", "return", "steps",
                                           "mean_state_grad_norm"});
  CsvWriter runs = ctx.open("runs.csv", {"run_id", "group", "agent", "loss_kind", "noise_kind", "site", "noise_param",
                                         "seed_index", "episodes", "final_return", "diverged", "total_updates",
                                         "bound_violations", "max_grad_to_bound", "target_sync_consistent"});
  CurveSet curves;
  std::size_t violations = 0;
  for (const auto& r : res.runs) {
    const AgentSpec& agent = c.agents[r.spec.agent_index];
    const bool clean = r.spec.injection.site == NoiseSite::none;
    const std::string kind = clean ? "none" : r.spec.injection.kind();
    const double param = clean ? 0.0 : r.spec.injection.strength();
    const char* loss = to_string(agent.config.loss_kind);
    const char* site = to_string(r.spec.injection.site);
    std::vector<double> returns;
    for (const auto& e : r.result.episodes) {
      ep.row(r.spec.run_id, r.spec.group, agent.name, loss, kind, site, param, r.spec.seed_index, e.episode, e.ret,
             e.steps, e.mean_state_grad_norm);
      returns.push_back(e.ret);
    }
    runs.row(r.spec.run_id, r.spec.group, agent.name, loss, kind, site, param, r.spec.seed_index,
             r.result.episodes.size(), r.final_return, r.result.diverged, r.result.total_updates,
             r.result.bound_violations, r.result.max_grad_to_bound, r.result.target_sync_consistent);
    violations += r.result.bound_violations;
    curves.add(r.spec.group, std::move(returns));
  }
  ep.close();
  runs.close();

  CsvWriter fin = ctx.open("final.csv", {"group", "agent", "loss_kind", "noise_kind", "site", "noise_param", "runs",
                                         "mean_final_return", "stderr_final_return", "diverged_runs",
                                         "bound_violations"});
  std::ostringstream os;
  os << res.runs.size() << " runs; final return = mean over the last " << fmt_real(100.0 * c.final_fraction)
     << "% of episodes";
  for (const auto& g : res.groups) {
    fin.row(g.group, g.agent, g.loss_kind, g.noise_kind, g.site, g.noise_param, g.runs, g.mean_final_return,
            g.stderr_final_return, g.diverged_runs, g.bound_violations);
    os << "\n  " << g.group << ": " << fmt_real(g.mean_final_return, 5) << " +- " << fmt_real(g.stderr_final_return, 3)
       << " (" << g.runs << " runs" << (g.diverged_runs ? ", " + std::to_string(g.diverged_runs) + " diverged" : "")
       << ")";
  }
  fin.close();
  write_curves(curves, c.smoothing_window, ctx, "curves");
  if (violations > 0) {
    os << "\n" << violations << " histogram gradient-bound violations";
    ctx.outcome->status = kExitCheckFailed;
  }
  ctx.outcome->summary = os.str();
}

void run_plot(const PlotDataConfig& c, const Context& ctx) {
  const auto rows = read_csv(c.input);
  if (rows.empty()) throw ConfigError("plot-data: '" + c.input.string() + "' has no header row");
  const auto& head = rows.front();
  auto column = [&](const std::string& name) {
    auto it = std::find(head.begin(), head.end(), name);
    if (it == head.end()) throw ConfigError("plot-data: '" + c.input.string() + "' lacks column '" + name + "'");
    return static_cast<std::size_t>(it - head.begin());
  };
  const std::size_t run_col = column("run_id"), group_col = column("group"), ep_col = column("episode"),
                    ret_col = column("return");

  // group -> run_id -> (episode, return)
  std::vector<std::string> order;
  std::map<std::string, std::map<long long, std::vector<std::pair<long long, double>>>> data;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != head.size())
      throw ConfigError("plot-data: row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
    try {
      if (!data.count(r[group_col])) order.push_back(r[group_col]);
      data[r[group_col]][std::stoll(r[run_col])].emplace_back(std::stoll(r[ep_col]), std::stod(r[ret_col]));
    } catch (const std::logic_error&) {
      throw ConfigError("plot-data: unparsable number in row " + std::to_string(i));
    }
  }
  CurveSet curves;
  for (const auto& g : order) {
    for (auto& [run, eps] : data[g]) {
      std::sort(eps.begin(), eps.end());
      std::vector<double> returns;
      for (const auto& [e, v] : eps) returns.push_back(v);
      curves.add(g, std::move(returns));
    }
  }
  write_curves(curves, c.window, ctx, "");
  std::ostringstream os;
  os << curves.order.size() << " curves from " << rows.size() - 1 << " episode rows";
  ctx.outcome->summary = os.str();
}

}  // namespace

Outcome Experiment::run(const RunOptions& options) const {
  Outcome outcome;
  Context ctx;
  const std::uint64_t seed = options.seed.value_or(seed_);
  ctx.header = {hash_, seed, to_string(sub_)};
  ctx.dir = options.out_dir;
  ctx.workers = options.workers;
  ctx.outcome = &outcome;
  try {
    fs::create_directories(ctx.dir);
    switch (sub_) {
      case Subcommand::tabular_contract: run_tabular(tabular_contract(), seed, ctx); break;
      case Subcommand::td_analysis: run_td(td_analysis(), seed, ctx); break;
      case Subcommand::grad_bounds: run_grad(grad_bounds(), seed, ctx); break;
      case Subcommand::influence: run_influence(influence(), seed, ctx); break;
      case Subcommand::train: run_train(train(), seed, ctx); break;
      case Subcommand::plot_data: run_plot(plot_data(), ctx); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    outcome.status = kExitRuntime;
    outcome.summary = std::string(to_string(sub_)) + " failed: " + e.what();
  }
  return outcome;
}

void init_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_logger_mt("snmdp");
    logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("SNMDP_LOG")) {
      level = spdlog::level::from_str(env);
      // from_str maps unknown names to off; keep info for those.
      if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
    }
    spdlog::set_level(level);
  });
}

}  // namespace snmdp::harness
