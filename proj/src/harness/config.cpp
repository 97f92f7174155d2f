#include <cctype>
#include <fstream>
#include <sstream>

#include "schema.hpp"
#include "snmdp/harness.hpp"
#include "snmdp/rng.hpp"

namespace snmdp::harness {

struct Experiment::Configs {
  TabularContractConfig tabular_contract;
  TdAnalysisConfig td_analysis;
  GradBoundsConfig grad_bounds;
  InfluenceConfig influence;
  TrainSweepConfig train;
  PlotDataConfig plot_data;
};

namespace {

constexpr Subcommand kAll[] = {Subcommand::tabular_contract, Subcommand::td_analysis, Subcommand::grad_bounds,
                               Subcommand::influence,        Subcommand::train,       Subcommand::plot_data};

template <class F>
auto parse_enum(Section& s, const std::string& key, F&& from_string, decltype(from_string(std::string())) def) {
  if (!s.has(key)) {
    s.text(key, "");
    return def;
  }
  const std::string name = s.text(key, "");
  try {
    return from_string(name);
  } catch (const ConfigError& e) {
    s.invalid(key, e.what());
  }
}

TabularContractConfig parse_tabular(Section& root) {
  ContractionOptions o;
  o.trials = root.count("trials", o.trials);
  o.pairs_per_mdp = root.count("pairs_per_mdp", o.pairs_per_mdp);
  o.value_range = root.real("value_range", o.value_range);
  o.p_values = root.reals("p_values", o.p_values);
  o.adversarial = root.flag("adversarial", o.adversarial);
  o.fixed_point_tol = root.real("fixed_point_tol", o.fixed_point_tol);

  Section mdp = root.table("mdp");
  o.min_states = mdp.count("min_states", o.min_states);
  o.max_states = mdp.count("max_states", o.max_states);
  o.min_actions = mdp.count("min_actions", o.min_actions);
  o.max_actions = mdp.count("max_actions", o.max_actions);
  o.gamma = mdp.real("gamma", o.gamma);
  o.reward_min = mdp.real("reward_min", o.reward_min);
  o.reward_max = mdp.real("reward_max", o.reward_max);
  mdp.finish();

  Section noise = root.table("noise");
  o.max_set_size = noise.count("max_set_size", o.max_set_size);
  noise.finish();

  Section dist = root.table("distributional");
  o.distributional = dist.flag("enabled", o.distributional);
  o.max_atoms = dist.count("max_atoms", o.max_atoms);
  o.atom_cap = dist.count("atom_cap", o.atom_cap);
  o.dist_fixed_point_tol = dist.real("fixed_point_tol", o.dist_fixed_point_tol);
  dist.finish();

  // Battery sizes scale with trials unless given.
  Section props = root.table("properties");
  o.property_instances = props.count("instances", o.trials / 2);
  props.finish();

  Section mini = root.table("minimality");
  o.minimality_trials = mini.count("trials", o.trials / 5);
  o.minimality_max_states = mini.count("max_states", o.minimality_max_states);
  o.minimality_max_set_size = mini.count("max_set_size", o.minimality_max_set_size);
  mini.finish();

  o.validate();
  return {o};
}

RandomSystemSpec parse_system(Section s) {
  RandomSystemSpec spec;
  spec.min_dim = s.count("min_dim", spec.min_dim);
  spec.max_dim = s.count("max_dim", spec.max_dim);
  spec.max_states = s.count("max_states", spec.max_states);
  spec.gamma = s.real("gamma", spec.gamma);
  spec.uniform_mix = s.real("uniform_mix", spec.uniform_mix);
  spec.rho = s.reals("rho", spec.rho);
  s.finish();
  if (spec.min_dim == 0 || spec.min_dim > spec.max_dim) s.invalid("min_dim", "need 1 <= min_dim <= max_dim");
  if (spec.max_states < 2) s.invalid("max_states", "need at least 2 states");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) s.invalid("gamma", "must be in (0, 1)");
  if (!(spec.uniform_mix > 0.0 && spec.uniform_mix <= 1.0)) s.invalid("uniform_mix", "must be in (0, 1]");
  if (spec.rho.empty()) s.invalid("rho", "need at least one perturbation scale");
  for (double r : spec.rho)
    if (!(r >= 0.0)) s.invalid("rho", "scales must be non-negative");
  return spec;
}

TdAnalysisConfig parse_td(Section& root) {
  TdAnalysisConfig c;
  c.convergence.systems = root.count("systems", c.convergence.systems);
  c.convergence.seeds = root.count("seeds", c.convergence.seeds);
  if (c.convergence.seeds == 0) root.invalid("seeds", "need at least one seed");

  std::vector<std::string> names;
  for (NoiseCase nc : c.cases) names.emplace_back(to_string(nc));
  names = root.texts("cases", names);
  c.cases.clear();
  for (const auto& n : names) {
    try {
      c.cases.push_back(noise_case_from_string(n));
    } catch (const ConfigError& e) {
      root.invalid("cases", e.what());
    }
  }

  c.convergence.system = parse_system(root.table("system"));

  Section sched = root.table("schedule");
  c.convergence.min_steps = sched.count("min_steps", c.convergence.min_steps);
  c.convergence.max_steps = sched.count("max_steps", c.convergence.max_steps);
  c.convergence.converged_residual = sched.real("converged_residual", c.convergence.converged_residual);
  sched.finish();
  if (c.convergence.min_steps == 0 || c.convergence.min_steps > c.convergence.max_steps)
    sched.invalid("min_steps", "need 1 <= min_steps <= max_steps");
  if (!(c.convergence.converged_residual > 0.0)) sched.invalid("converged_residual", "must be positive");

  Section div = root.table("divergence");
  c.divergence = div.flag("enabled", c.divergence);
  c.divergence_scales = div.reals("scales", c.divergence_scales);
  c.divergence_steps = div.count("steps", c.divergence_steps);
  c.divergence_system = parse_system(div.table("system"));
  div.finish();
  if (c.divergence && c.divergence_scales.empty()) div.invalid("scales", "need at least one scale");
  for (double s : c.divergence_scales)
    if (!(s > 0.0)) div.invalid("scales", "scales must be positive");
  if (c.divergence && c.divergence_steps == 0) div.invalid("steps", "must be positive");
  return c;
}

GradBoundsConfig parse_grad(Section& root) {
  GradBoundsConfig c;
  GradientBoundOptions& o = c.options;
  o.draws = root.count("draws", o.draws);
  o.k_values = root.counts("k", o.k_values);
  o.l_values = root.reals("l", o.l_values);
  o.dim = root.count("dim", o.dim);
  o.width = root.count("width", o.width);
  o.max_input_norm = root.real("max_input_norm", o.max_input_norm);
  o.witness_factor = root.real("witness_factor", o.witness_factor);
  c.per_draw_rows = root.flag("per_draw_rows", c.per_draw_rows);
  for (std::size_t k : o.k_values)
    if (k < 2) root.invalid("k", "bin counts must be at least 2");
  for (double l : o.l_values)
    if (!(l > 0.0)) root.invalid("l", "norm bounds must be positive");
  if (o.dim == 0 || o.width == 0) root.invalid("dim", "dim and width must be positive");
  if (!(o.max_input_norm >= 1.0)) root.invalid("max_input_norm", "must be at least 1");
  if (!(o.witness_factor > 0.0)) root.invalid("witness_factor", "must be positive");
  return c;
}

InfluenceConfig parse_influence(Section& root) {
  InfluenceConfig c;
  c.instances = root.count("instances", c.instances);
  c.eps_values = root.reals("eps", c.eps_values);
  c.min_order = root.real("min_order", c.min_order);
  c.max_order = root.real("max_order", c.max_order);
  Section cor = root.table("corollary");
  c.corollary_instances = cor.count("instances", c.corollary_instances);
  c.eta_scale = cor.real("eta_scale", c.eta_scale);
  cor.finish();
  for (double e : c.eps_values)
    if (!(e > 0.0 && e < 1.0)) root.invalid("eps", "values must be in (0, 1)");
  if (!(c.min_order <= c.max_order)) root.invalid("min_order", "must not exceed max_order");
  if (!(c.eta_scale > 0.0)) cor.invalid("eta_scale", "must be positive");
  return c;
}

// Environment-dependent defaults; histogram agents minimise the batch-mean
// loss, so their default rate is scaled by the batch size.
AgentConfig agent_defaults(ControlTask env, LossKind loss, std::size_t batch_size) {
  AgentConfig a;
  a.loss_kind = loss;
  a.batch_size = batch_size;
  a.gamma = 0.95;
  a.total_steps = 200'000;
  double base_rate = 1e-3;
  if (env == ControlTask::cartpole) {
    a.k = 20;
    a.v_min = 0.0;
    a.v_max = 20.0;
  } else {
    a.k = 2;
    a.v_min = -20.0;
    a.v_max = 0.0;
    base_rate = 5e-4;
  }
  a.learning_rate = loss == LossKind::histogram ? base_rate * static_cast<double>(batch_size) : base_rate;
  if (loss == LossKind::histogram) a.norm_bound = 5.0;
  return a;
}

AgentSpec parse_agent(Section s, ControlTask env) {
  AgentSpec spec;
  spec.name = s.text("name", "");
  const LossKind loss = parse_enum(s, "loss", loss_kind_from_string, LossKind::least_squares);
  if (spec.name.empty()) spec.name = loss == LossKind::histogram ? "hist" : "dqn";
  const std::size_t batch = s.count("batch_size", 32);
  AgentConfig a = agent_defaults(env, loss, batch);
  a.k = s.count("k", a.k);
  a.head_mode = parse_enum(s, "head", head_mode_from_string, a.head_mode);
  a.width = s.count("width", a.width);
  a.depth = s.count("depth", a.depth);
  a.activation = parse_enum(s, "activation", activation_from_string, a.activation);
  if (s.has("norm_bound"))
    a.norm_bound = s.real("norm_bound", 0.0);
  else
    s.optional_real("norm_bound");
  a.v_min = s.real("v_min", a.v_min);
  a.v_max = s.real("v_max", a.v_max);
  a.target_projection = parse_enum(s, "target_projection", target_projection_from_string, a.target_projection);
  a.gamma = s.real("gamma", a.gamma);
  a.learning_rate = s.real("learning_rate", a.learning_rate);
  a.replay_capacity = s.count("replay_capacity", a.replay_capacity);
  a.target_sync = s.count("target_sync", a.target_sync);
  a.learning_starts = s.count("learning_starts", a.learning_starts);
  a.epsilon_start = s.real("epsilon_start", a.epsilon_start);
  a.epsilon_end = s.real("epsilon_end", a.epsilon_end);
  a.exploration_fraction = s.real("exploration_fraction", a.exploration_fraction);
  a.total_steps = s.count("total_steps", a.total_steps);
  s.finish();
  for (char ch : spec.name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_'))
      s.invalid("name", "use letters, digits, '-' and '_' only");
  a.validate();
  spec.config = a;
  return spec;
}

TrainSweepConfig parse_train(Section& root) {
  TrainSweepConfig c;
  c.env = parse_enum(root, "env", control_task_from_string, c.env);
  c.episode_cap = root.count("episode_cap", c.episode_cap);
  c.seeds = root.count("seeds", c.seeds);
  c.final_fraction = root.real("final_fraction", c.final_fraction);
  c.smoothing_window = root.count("smoothing_window", c.smoothing_window);
  if (c.seeds == 0) root.invalid("seeds", "need at least one seed");
  if (c.episode_cap == 0) root.invalid("episode_cap", "must be positive");
  if (!(c.final_fraction > 0.0 && c.final_fraction <= 1.0)) root.invalid("final_fraction", "must be in (0, 1]");
  if (c.smoothing_window == 0) root.invalid("smoothing_window", "must be positive");

  Section noise = root.table("noise");
  c.noise_free = noise.flag("noise_free", c.noise_free);
  c.gaussian_std = noise.reals("gaussian_std", c.gaussian_std);
  c.pgd_epsilon = noise.reals("pgd_epsilon", c.pgd_epsilon);
  const std::size_t iterations = noise.count("pgd_iterations", static_cast<std::size_t>(c.pgd_iterations));
  c.pgd_step_size = noise.optional_real("pgd_step_size");
  c.pgd_temperature = noise.real("pgd_temperature", c.pgd_temperature);
  std::vector<std::string> sites;
  for (NoiseSite s : c.sites) sites.emplace_back(to_string(s));
  sites = noise.texts("sites", sites);
  noise.finish();
  c.sites.clear();
  for (const auto& n : sites) {
    try {
      const NoiseSite site = noise_site_from_string(n);
      if (site == NoiseSite::none) noise.invalid("sites", "use noise_free for the clean runs");
      c.sites.push_back(site);
    } catch (const ConfigError& e) {
      noise.invalid("sites", e.what());
    }
  }
  if (iterations == 0 || iterations > 1000) noise.invalid("pgd_iterations", "must be in [1, 1000]");
  c.pgd_iterations = static_cast<int>(iterations);
  for (double s : c.gaussian_std)
    if (!(s > 0.0)) noise.invalid("gaussian_std", "values must be positive");
  for (double e : c.pgd_epsilon)
    if (!(e > 0.0)) noise.invalid("pgd_epsilon", "values must be positive");
  if (c.pgd_step_size && !(*c.pgd_step_size > 0.0)) noise.invalid("pgd_step_size", "must be positive");
  if (!(c.pgd_temperature > 0.0)) noise.invalid("pgd_temperature", "must be positive");
  if ((!c.gaussian_std.empty() || !c.pgd_epsilon.empty()) && c.sites.empty())
    noise.invalid("sites", "noisy runs need at least one site");

  for (Section& a : root.tables("agent")) c.agents.push_back(parse_agent(a, c.env));
  if (c.agents.empty()) root.invalid("agent", "need at least one [[agent]] table");
  for (std::size_t i = 0; i < c.agents.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (c.agents[i].name == c.agents[j].name) root.invalid("agent", "duplicate agent name '" + c.agents[i].name + "'");
  return c;
}

PlotDataConfig parse_plot(Section& root) {
  PlotDataConfig c;
  c.input = root.text("input", "");
  if (c.input.empty()) root.invalid("input", "path to an episodes CSV is required");
  c.window = root.count("window", c.window);
  if (c.window == 0) root.invalid("window", "must be positive");
  return c;
}

}  // namespace

const char* to_string(Subcommand s) {
  switch (s) {
    case Subcommand::tabular_contract: return "tabular-contract";
    case Subcommand::td_analysis: return "td-analysis";
    case Subcommand::grad_bounds: return "grad-bounds";
    case Subcommand::influence: return "influence";
    case Subcommand::train: return "train";
    case Subcommand::plot_data: return "plot-data";
  }
  return "?";
}

Subcommand subcommand_from_string(const std::string& name) {
  for (Subcommand s : kAll)
    if (name == to_string(s)) return s;
  throw ConfigError("unknown subcommand '" + name + "'");
}

const std::vector<Subcommand>& all_subcommands() {
  static const std::vector<Subcommand> v(std::begin(kAll), std::end(kAll));
  return v;
}

Experiment Experiment::from_file(Subcommand sub, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(sub, ss.str(), path.string());
}

Experiment Experiment::from_string(Subcommand sub, const std::string& text, const std::string& origin) {
  toml::table table;
  try {
    table = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }

  Experiment ex;
  ex.sub_ = sub;
  auto configs = std::make_shared<Configs>();
  Section root(table, "");
  ex.seed_ = root.u64("seed", 0);
  switch (sub) {
    case Subcommand::tabular_contract: configs->tabular_contract = parse_tabular(root); break;
    case Subcommand::td_analysis: configs->td_analysis = parse_td(root); break;
    case Subcommand::grad_bounds: configs->grad_bounds = parse_grad(root); break;
    case Subcommand::influence: configs->influence = parse_influence(root); break;
    case Subcommand::train: configs->train = parse_train(root); break;
    case Subcommand::plot_data: configs->plot_data = parse_plot(root); break;
  }
  root.finish();
  ex.configs_ = std::move(configs);

  // Tables print with sorted keys, so the text is a canonical form.
  table.erase("seed");
  std::ostringstream os;
  os << toml::toml_formatter(table, toml::format_flags::none);
  ex.canonical_ = std::string(to_string(sub)) + "\n" + os.str();
  ex.hash_ = fnv1a64(ex.canonical_);
  return ex;
}

const TabularContractConfig& Experiment::tabular_contract() const { return configs_->tabular_contract; }
const TdAnalysisConfig& Experiment::td_analysis() const { return configs_->td_analysis; }
const GradBoundsConfig& Experiment::grad_bounds() const { return configs_->grad_bounds; }
const InfluenceConfig& Experiment::influence() const { return configs_->influence; }
const TrainSweepConfig& Experiment::train() const { return configs_->train; }
const PlotDataConfig& Experiment::plot_data() const { return configs_->plot_data; }

}  // namespace snmdp::harness
