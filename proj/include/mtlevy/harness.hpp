#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlevy/controller.hpp"
#include "mtlevy/embeddings.hpp"
#include "mtlevy/envs.hpp"
#include "mtlevy/io.hpp"
#include "mtlevy/learner.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy {

enum class Method { kMtLevy, kEpsilonGreedy, kBoltzmann, kEzGreedy };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kMtLevy: return "mt_levy";
    case Method::kEpsilonGreedy: return "epsilon_greedy";
    case Method::kBoltzmann: return "boltzmann";
    case Method::kEzGreedy: return "ez_greedy";
  }
  throw std::logic_error("method_name: unknown method");
}

inline Method method_from_name(const std::string& name) {
  if (name == "mt_levy") return Method::kMtLevy;
  if (name == "epsilon_greedy") return Method::kEpsilonGreedy;
  if (name == "boltzmann") return Method::kBoltzmann;
  if (name == "ez_greedy") return Method::kEzGreedy;
  throw ConfigError("config key 'method': unknown method '" + name + "'");
}

struct EnvSpec {
  std::string kind = "chain";  // "chain" | "grid"
  int n_tasks = 0;
  int width = 0;
  int height = 0;
  RewardMode reward_mode = RewardMode::kSparse;
  int horizon = 0;  // 0 -> 4N (chain) or 4(width+height) (grid)
  GridWorld::Cell start{0, 0};
  std::vector<GridWorld::Cell> goals;  // empty -> deterministic default layout
  std::optional<GridWorld::Cell> object_cell;
};

struct Hyperparameters {
  double alpha_bar = 1.0;
  double rho_bar = 0.1;
  double tau = 0.01;
  int n_neighbors = 5;
  double lambda = 1.0;
  double epsilon = 0.1;
  double temperature = 1.0;
  double lr = 0.1;
  double gamma = 0.99;
  double optimism = 0.0;
};

struct AblationFlags {
  bool no_behavior_sharing = false;
  bool no_temporal_extension = false;
  bool no_success_tracking = false;
  bool exclude_self_from_candidates = false;

  bool any() const {
    return no_behavior_sharing || no_temporal_extension ||
           no_success_tracking || exclude_self_from_candidates;
  }
};

struct ExperimentConfig {
  EnvSpec env;
  Method method = Method::kMtLevy;
  AblationFlags ablations;
  Hyperparameters hp;
  long long budget = 0;
  std::vector<std::uint64_t> seeds;
  std::string embeddings_path;  // empty -> synthetic in-memory embeddings
  std::string output_dir = "out";
  long long checkpoint_interval = 0;  // 0 -> budget / 50
  int eval_episodes = 20;
  int key_probe_episodes = -1;  // -1 -> 0 for chain, 50 for grid
  bool dump_episodes = false;
  bool dump_qtables = false;

  long long effective_checkpoint_interval() const {
    if (checkpoint_interval > 0) return checkpoint_interval;
    return std::max<long long>(1, budget / 50);
  }
  int effective_key_probes() const {
    if (key_probe_episodes >= 0) return key_probe_episodes;
    return env.kind == "grid" ? 50 : 0;
  }
  int effective_horizon() const {
    if (env.horizon > 0) return env.horizon;
    return env.kind == "grid" ? 4 * (env.width + env.height)
                              : 4 * env.n_tasks;
  }

  std::string condition_label() const {
    std::string label = method_name(method);
    if (ablations.no_behavior_sharing) label += "-no_behavior_sharing";
    if (ablations.no_temporal_extension) label += "-no_temporal_extension";
    if (ablations.no_success_tracking) label += "-no_success_tracking";
    if (ablations.exclude_self_from_candidates)
      label += "-exclude_self_from_candidates";
    return label;
  }

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

namespace detail {

inline void expect_keys(const nlohmann::json& j,
                        const std::set<std::string>& allowed,
                        const std::string& scope) {
  if (!j.is_object())
    throw ConfigError("config: " + scope + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw ConfigError("config: unknown key '" + item.key() + "' in " +
                        scope);
  }
}

inline long long get_int(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number_integer())
    throw ConfigError("config key '" + key + "': expected an integer");
  return j.at(key).get<long long>();
}

inline double get_number(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number())
    throw ConfigError("config key '" + key + "': expected a number");
  return j.at(key).get<double>();
}

inline std::string get_string(const nlohmann::json& j,
                              const std::string& key) {
  if (!j.at(key).is_string())
    throw ConfigError("config key '" + key + "': expected a string");
  return j.at(key).get<std::string>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_boolean())
    throw ConfigError("config key '" + key + "': expected a boolean");
  return j.at(key).get<bool>();
}

inline GridWorld::Cell get_cell(const nlohmann::json& v,
                                const std::string& key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
      !v[1].is_number_integer())
    throw ConfigError("config key '" + key + "': expected [x, y]");
  return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  if (env.kind != "chain" && env.kind != "grid")
    throw ConfigError("config key 'env': must be \"chain\" or \"grid\"");
  if (env.n_tasks < 1)
    throw ConfigError("config key 'N': must be a positive task count");
  if (env.kind == "grid") {
    if (env.width < 1 || env.height < 1)
      throw ConfigError("config key 'width'/'height': required and positive "
                        "for grid environments");
    if (!env.goals.empty() &&
        static_cast<int>(env.goals.size()) != env.n_tasks)
      throw ConfigError("config key 'goals': need one goal per task");
  } else {
    if (env.width != 0 || env.height != 0)
      throw ConfigError("config key 'width'/'height': only valid for grid "
                        "environments");
    if (!env.goals.empty())
      throw ConfigError("config key 'goals': only valid for grid environments");
    if (env.object_cell)
      throw ConfigError(
          "config key 'object_cell': only valid for grid environments");
  }
  if (env.horizon < 0)
    throw ConfigError("config key 'horizon': must be positive");
  if (budget < 1) throw ConfigError("config key 'budget': must be > 0");
  if (seeds.empty())
    throw ConfigError("config key 'seeds': must be a nonempty list");
  if (ablations.any() && method != Method::kMtLevy)
    throw ConfigError(
        "config key 'ablations': ablation flags are only valid with method "
        "mt_levy");
  if (!(hp.alpha_bar >= 0.0))
    throw ConfigError("config key 'alpha_bar': must be >= 0");
  if (!(hp.rho_bar > 0.0 && hp.rho_bar < 1.0))
    throw ConfigError("config key 'rho_bar': must lie in (0,1)");
  if (!(hp.tau > 0.0 && hp.tau <= 1.0))
    throw ConfigError("config key 'tau': must lie in (0,1]");
  if (hp.n_neighbors < 1)
    throw ConfigError("config key 'n_neighbors': must be >= 1");
  if (!(hp.lambda > 0.0))
    throw ConfigError("config key 'lambda': must be > 0");
  if (!(hp.epsilon >= 0.0 && hp.epsilon <= 1.0))
    throw ConfigError("config key 'epsilon': must lie in [0,1]");
  if (!(hp.temperature > 0.0))
    throw ConfigError("config key 'temperature': must be > 0");
  if (!(hp.lr > 0.0 && hp.lr <= 1.0))
    throw ConfigError("config key 'lr': must lie in (0,1]");
  if (!(hp.gamma >= 0.0 && hp.gamma < 1.0))
    throw ConfigError("config key 'gamma': must lie in [0,1)");
  if (!std::isfinite(hp.optimism))
    throw ConfigError("config key 'optimism': must be finite");
  if (checkpoint_interval < 0)
    throw ConfigError("config key 'checkpoint_interval': must be > 0");
  if (eval_episodes < 1)
    throw ConfigError("config key 'eval_episodes': must be >= 1");
  if (key_probe_episodes < -1)
    throw ConfigError("config key 'key_probe_episodes': must be >= 0");
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kTopKeys = {
      "env",           "N",
      "width",         "height",
      "reward_mode",   "horizon",
      "start",         "goals",
      "object_cell",   "method",
      "ablations",     "hyperparameters",
      "budget",        "seeds",
      "embeddings_path", "output_dir",
      "checkpoint_interval", "eval_episodes",
      "key_probe_episodes",  "dump_episodes",
      "dump_qtables"};
  static const std::set<std::string> kHpKeys = {
      "alpha_bar", "rho_bar",     "tau", "n_neighbors", "lambda",
      "epsilon",   "temperature", "lr",  "gamma",       "optimism"};
  static const std::set<std::string> kAblationKeys = {
      "no_behavior_sharing", "no_temporal_extension", "no_success_tracking",
      "exclude_self_from_candidates"};

  detail::expect_keys(j, kTopKeys, "the top level");
  for (const char* required : {"env", "N", "method", "budget", "seeds"}) {
    if (!j.contains(required))
      throw ConfigError("config key '" + std::string(required) +
                        "': required");
  }

  ExperimentConfig cfg;
  cfg.env.kind = detail::get_string(j, "env");
  cfg.env.n_tasks = static_cast<int>(detail::get_int(j, "N"));
  if (j.contains("width"))
    cfg.env.width = static_cast<int>(detail::get_int(j, "width"));
  if (j.contains("height"))
    cfg.env.height = static_cast<int>(detail::get_int(j, "height"));
  if (j.contains("reward_mode")) {
    const std::string mode = detail::get_string(j, "reward_mode");
    if (mode == "sparse") cfg.env.reward_mode = RewardMode::kSparse;
    else if (mode == "dense") cfg.env.reward_mode = RewardMode::kDense;
    else
      throw ConfigError(
          "config key 'reward_mode': must be \"sparse\" or \"dense\"");
  }
  if (j.contains("horizon")) {
    cfg.env.horizon = static_cast<int>(detail::get_int(j, "horizon"));
    if (cfg.env.horizon < 1)
      throw ConfigError("config key 'horizon': must be positive");
  }
  if (j.contains("start")) cfg.env.start = detail::get_cell(j.at("start"), "start");
  if (j.contains("goals")) {
    if (!j.at("goals").is_array())
      throw ConfigError("config key 'goals': expected an array of [x, y]");
    for (const auto& g : j.at("goals"))
      cfg.env.goals.push_back(detail::get_cell(g, "goals"));
  }
  if (j.contains("object_cell"))
    cfg.env.object_cell = detail::get_cell(j.at("object_cell"), "object_cell");

  cfg.method = method_from_name(detail::get_string(j, "method"));

  if (j.contains("ablations")) {
    const auto& ja = j.at("ablations");
    detail::expect_keys(ja, kAblationKeys, "'ablations'");
    if (ja.contains("no_behavior_sharing"))
      cfg.ablations.no_behavior_sharing =
          detail::get_bool(ja, "no_behavior_sharing");
    if (ja.contains("no_temporal_extension"))
      cfg.ablations.no_temporal_extension =
          detail::get_bool(ja, "no_temporal_extension");
    if (ja.contains("no_success_tracking"))
      cfg.ablations.no_success_tracking =
          detail::get_bool(ja, "no_success_tracking");
    if (ja.contains("exclude_self_from_candidates"))
      cfg.ablations.exclude_self_from_candidates =
          detail::get_bool(ja, "exclude_self_from_candidates");
  }

  if (j.contains("hyperparameters")) {
    const auto& jh = j.at("hyperparameters");
    detail::expect_keys(jh, kHpKeys, "'hyperparameters'");
    if (jh.contains("alpha_bar")) cfg.hp.alpha_bar = detail::get_number(jh, "alpha_bar");
    if (jh.contains("rho_bar")) cfg.hp.rho_bar = detail::get_number(jh, "rho_bar");
    if (jh.contains("tau")) cfg.hp.tau = detail::get_number(jh, "tau");
    if (jh.contains("n_neighbors"))
      cfg.hp.n_neighbors = static_cast<int>(detail::get_int(jh, "n_neighbors"));
    if (jh.contains("lambda")) cfg.hp.lambda = detail::get_number(jh, "lambda");
    if (jh.contains("epsilon")) cfg.hp.epsilon = detail::get_number(jh, "epsilon");
    if (jh.contains("temperature"))
      cfg.hp.temperature = detail::get_number(jh, "temperature");
    if (jh.contains("lr")) cfg.hp.lr = detail::get_number(jh, "lr");
    if (jh.contains("gamma")) cfg.hp.gamma = detail::get_number(jh, "gamma");
    if (jh.contains("optimism"))
      cfg.hp.optimism = detail::get_number(jh, "optimism");
  }

  cfg.budget = detail::get_int(j, "budget");
  if (!j.at("seeds").is_array())
    throw ConfigError("config key 'seeds': expected an array of integers");
  for (const auto& s : j.at("seeds")) {
    if (!s.is_number_integer() || s.get<long long>() < 0)
      throw ConfigError("config key 'seeds': expected nonnegative integers");
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  if (j.contains("embeddings_path"))
    cfg.embeddings_path = detail::get_string(j, "embeddings_path");
  if (j.contains("output_dir"))
    cfg.output_dir = detail::get_string(j, "output_dir");
  if (j.contains("checkpoint_interval"))
    cfg.checkpoint_interval = detail::get_int(j, "checkpoint_interval");
  if (j.contains("eval_episodes"))
    cfg.eval_episodes = static_cast<int>(detail::get_int(j, "eval_episodes"));
  if (j.contains("key_probe_episodes"))
    cfg.key_probe_episodes =
        static_cast<int>(detail::get_int(j, "key_probe_episodes"));
  if (j.contains("dump_episodes"))
    cfg.dump_episodes = detail::get_bool(j, "dump_episodes");
  if (j.contains("dump_qtables"))
    cfg.dump_qtables = detail::get_bool(j, "dump_qtables");

  cfg.validate();
  return cfg;
}

inline ExperimentConfig ExperimentConfig::load(
    const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(j);
}

inline std::unique_ptr<TaskEnv> make_env(const ExperimentConfig& cfg) {
  if (cfg.env.kind == "grid") {
    std::vector<GridWorld::Cell> goals = cfg.env.goals;
    if (goals.empty())
      goals = GridWorld::default_goals(cfg.env.width, cfg.env.height,
                                       cfg.env.n_tasks);
    return std::make_unique<GridWorld>(cfg.env.width, cfg.env.height,
                                       std::move(goals),
                                       cfg.effective_horizon(),
                                       cfg.env.reward_mode, cfg.env.start,
                                       cfg.env.object_cell);
  }
  return std::make_unique<ChainWorld>(cfg.env.n_tasks,
                                      cfg.effective_horizon(),
                                      cfg.env.reward_mode);
}

inline TaskEmbeddingStore make_embeddings(const ExperimentConfig& cfg) {
  if (!cfg.embeddings_path.empty())
    return TaskEmbeddingStore::load(cfg.embeddings_path);
  if (cfg.env.kind == "grid") {
    std::vector<GridWorld::Cell> goals = cfg.env.goals;
    if (goals.empty())
      goals = GridWorld::default_goals(cfg.env.width, cfg.env.height,
                                       cfg.env.n_tasks);
    return goal_coordinate_store(goals);
  }
  return chain_line_store(cfg.env.n_tasks);
}

// One evaluation-checkpoint row. eval_success averages separate greedy
// rollouts (exploration off); tracked_rho/alpha snapshot the tracker;
// coverage counts distinct states seen in the task's training episodes so
// far; key_dist_low1pct is the mean of the lowest 1% of per-step distances
// to the task's key state.
struct MetricsRow {
  long long step = 0;
  int task = 0;
  double eval_success = 0.0;
  double tracked_rho = 0.0;
  double alpha = 0.0;
  long long coverage = 0;
  double key_dist_low1pct = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,task,eval_success,tracked_rho,alpha,coverage,key_dist_low1pct";

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream ss;
  ss << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    ss << r.step << ',' << r.task << ',' << format_double(r.eval_success)
       << ',' << format_double(r.tracked_rho) << ','
       << format_double(r.alpha) << ',' << r.coverage << ','
       << format_double(r.key_dist_low1pct) << '\n';
  }
  return ss.str();
}

inline std::vector<MetricsRow> read_metrics_csv(
    const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ParseError(path.string() + ":1: bad metrics header");
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 7)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 7 fields");
    MetricsRow r;
    auto num = [&](std::string_view s) {
      double v = 0.0;
      if (!detail::parse_full_double(s, v))
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": non-numeric field '" + std::string(s) + "'");
      return v;
    };
    r.step = static_cast<long long>(num(fields[0]));
    r.task = static_cast<int>(num(fields[1]));
    r.eval_success = num(fields[2]);
    r.tracked_rho = num(fields[3]);
    r.alpha = num(fields[4]);
    r.coverage = static_cast<long long>(num(fields[5]));
    r.key_dist_low1pct = num(fields[6]);
    rows.push_back(r);
  }
  return rows;
}

struct RunResult {
  std::vector<MetricsRow> rows;
  long long total_env_steps = 0;
  std::vector<EpisodeRecord> episodes;  // populated when dump_episodes is set
  nlohmann::ordered_json qtables;       // populated when dump_qtables is set
};

// One fully isolated training run: round-robin episodes across tasks until
// the step budget is spent, tracker updated per episode, greedy evaluation
// and key-state probes at every checkpoint-grid point <= budget.
inline RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int N = cfg.env.n_tasks;
  auto train_env = make_env(cfg);
  auto eval_env = make_env(cfg);
  auto probe_env = make_env(cfg);

  const TaskEmbeddingStore embeddings = make_embeddings(cfg);
  if (embeddings.n_tasks() != N)
    throw ConfigError("config key 'embeddings_path': file has " +
                      std::to_string(embeddings.n_tasks()) +
                      " tasks, environment has " + std::to_string(N));
  const int n_eff = std::min(cfg.hp.n_neighbors, N);
  std::vector<CandidateIndexSet> nearest;
  nearest.reserve(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i) nearest.push_back(n_nearest(embeddings, i, n_eff));

  MultiHeadQTable qtable(N, train_env->n_states(), train_env->n_actions(),
                         cfg.hp.lr, cfg.hp.gamma, cfg.hp.optimism);
  GreedyPolicyTable greedy_bank(qtable);
  SuccessTracker tracker(N, cfg.hp.tau, cfg.hp.rho_bar, cfg.hp.alpha_bar);

  ControllerOptions copts;
  copts.lambda = cfg.hp.lambda;
  copts.no_behavior_sharing = cfg.ablations.no_behavior_sharing;
  copts.no_temporal_extension = cfg.ablations.no_temporal_extension;
  copts.no_success_tracking = cfg.ablations.no_success_tracking;
  copts.exclude_self_from_candidates =
      cfg.ablations.exclude_self_from_candidates;

  auto make_baseline = [&]() -> BaselinePolicy {
    switch (cfg.method) {
      case Method::kEpsilonGreedy:
        return BaselinePolicy::epsilon_greedy(cfg.hp.epsilon);
      case Method::kBoltzmann:
        return BaselinePolicy::boltzmann(cfg.hp.temperature);
      case Method::kEzGreedy:
        // Fixed shape at the rho = 0 adaptation value; the baseline has no
        // success tracking of its own.
        return BaselinePolicy::ez_greedy(
            cfg.hp.epsilon, ParetoII(cfg.hp.alpha_bar + 1.0, cfg.hp.lambda));
      case Method::kMtLevy:
        return BaselinePolicy::epsilon_greedy(cfg.hp.epsilon);  // unused
    }
    throw std::logic_error("make_baseline: unknown method");
  };

  struct BehaviorState {
    ExplorationState ctrl;
    BaselinePolicy base;
  };

  auto behavior_step = [&](BehaviorState& bs, int task, int s,
                           VariateSource& vars) -> StepDecision {
    if (cfg.method == Method::kMtLevy) {
      return controller_step(bs.ctrl, task, s, tracker,
                             nearest[static_cast<std::size_t>(task - 1)],
                             greedy_bank, vars, copts);
    }
    const int a = baseline_act(bs.base, qtable, task, s, vars);
    return {a, task, false};
  };

  auto run_episode = [&](TaskEnv& env, BehaviorState& bs, int task,
                         VariateSource& vars, bool learn) -> EpisodeRecord {
    EpisodeRecord rec;
    rec.task = task;
    bs.ctrl.reset();
    bs.base.reset_episode();
    int s = env.reset(task);
    rec.states.push_back(s);
    while (true) {
      const StepDecision d = behavior_step(bs, task, s, vars);
      const StepOutcome o = env.step(task, s, d.action);
      if (learn)
        qtable.update(task, {s, d.action, o.reward, o.next_state, o.success});
      rec.actions.push_back(d.action);
      rec.action_sources.push_back(d.source_task);
      rec.rewards.push_back(o.reward);
      rec.states.push_back(o.next_state);
      s = o.next_state;
      if (o.done) {
        rec.success = o.success;
        break;
      }
    }
    if (!rec.consistent() ||
        (rec.success && rec.states.back() != env.goal_state(task)))
      throw std::logic_error("run_single: inconsistent episode record");
    return rec;
  };

  auto eval_success_ratio = [&](int task) -> double {
    int successes = 0;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      int s = eval_env->reset(task);
      while (true) {
        const int a = greedy_action(qtable, task, s);
        const StepOutcome o = eval_env->step(task, s, a);
        s = o.next_state;
        if (o.done) {
          successes += o.success ? 1 : 0;
          break;
        }
      }
    }
    return static_cast<double>(successes) /
           static_cast<double>(cfg.eval_episodes);
  };

  UniformSource train_rng(mix_seed({seed, 0x7261696Eull}));
  BehaviorState train_bs{ExplorationState{}, make_baseline()};

  const long long interval = cfg.effective_checkpoint_interval();
  const int key_probes = cfg.effective_key_probes();
  std::vector<std::unordered_set<int>> visited(static_cast<std::size_t>(N));
  std::vector<std::vector<double>> key_window(static_cast<std::size_t>(N));

  RunResult out;
  long long next_checkpoint = interval;
  int checkpoint_index = 0;

  auto emit_checkpoint = [&](long long step_label) {
    ++checkpoint_index;
    for (int task = 1; task <= N; ++task) {
      MetricsRow row;
      row.step = step_label;
      row.task = task;
      row.eval_success = eval_success_ratio(task);
      row.tracked_rho = tracker.rho(task);
      row.alpha = tracker.alpha(task);
      row.coverage = static_cast<long long>(
          visited[static_cast<std::size_t>(task - 1)].size());
      if (key_probes > 0) {
        UniformSource probe_rng(
            mix_seed({seed, 0x70726F6265ull,
                      static_cast<std::uint64_t>(checkpoint_index),
                      static_cast<std::uint64_t>(task)}));
        BehaviorState probe_bs{ExplorationState{}, make_baseline()};
        std::vector<double> pool;
        for (int e = 0; e < key_probes; ++e) {
          const EpisodeRecord rec =
              run_episode(*probe_env, probe_bs, task, probe_rng, false);
          for (std::size_t t = 1; t < rec.states.size(); ++t)
            pool.push_back(probe_env->key_distance(task, rec.states[t]));
        }
        row.key_dist_low1pct = lower_fraction_mean(std::move(pool), 0.01);
      } else {
        row.key_dist_low1pct = lower_fraction_mean(
            key_window[static_cast<std::size_t>(task - 1)], 0.01);
      }
      out.rows.push_back(row);
    }
    for (auto& w : key_window) w.clear();
  };

  int round_robin = 1;
  while (out.total_env_steps < cfg.budget) {
    const int task = round_robin;
    round_robin = round_robin % N + 1;
    const EpisodeRecord rec =
        run_episode(*train_env, train_bs, task, train_rng, true);
    out.total_env_steps += static_cast<long long>(rec.actions.size());
    tracker.update(task, rec.success);
    auto& seen = visited[static_cast<std::size_t>(task - 1)];
    for (int s : rec.states) seen.insert(s);
    if (key_probes == 0) {
      auto& window = key_window[static_cast<std::size_t>(task - 1)];
      for (std::size_t t = 1; t < rec.states.size(); ++t)
        window.push_back(train_env->key_distance(task, rec.states[t]));
    }
    if (cfg.dump_episodes) out.episodes.push_back(rec);
    while (next_checkpoint <= cfg.budget &&
           out.total_env_steps >= next_checkpoint) {
      emit_checkpoint(next_checkpoint);
      next_checkpoint += interval;
    }
  }

  if (cfg.dump_qtables) out.qtables = qtable.to_json();
  return out;
}

inline std::filesystem::path metrics_file_path(const ExperimentConfig& cfg,
                                               std::uint64_t seed) {
  return std::filesystem::path(cfg.output_dir) /
         ("metrics_" + cfg.condition_label() + "_seed" + std::to_string(seed) +
          ".csv");
}

// Runs every seed of the config (bounded worker pool; runs are fully
// isolated) and writes one metrics CSV per seed, plus optional episode and
// Q-table dumps. Returns the written paths in seed order.
inline std::vector<std::filesystem::path> run_experiment(
    const ExperimentConfig& cfg, int workers = 1) {
  cfg.validate();
  if (workers < 1) throw ConfigError("run_experiment: workers must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec)
    throw ConfigError("config key 'output_dir': cannot create '" +
                      cfg.output_dir + "': " + ec.message());

  std::vector<std::filesystem::path> paths(cfg.seeds.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    while (true) {
      const std::size_t idx = cursor.fetch_add(1);
      if (idx >= cfg.seeds.size()) return;
      try {
        const std::uint64_t seed = cfg.seeds[idx];
        const RunResult result = run_single(cfg, seed);
        const auto path = metrics_file_path(cfg, seed);
        write_text_atomic(path, metrics_to_csv(result.rows));
        if (cfg.dump_episodes) {
          write_episodes_jsonl(
              result.episodes,
              std::filesystem::path(cfg.output_dir) /
                  ("episodes_" + cfg.condition_label() + "_seed" +
                   std::to_string(seed) + ".jsonl"));
        }
        if (cfg.dump_qtables) {
          write_text_atomic(std::filesystem::path(cfg.output_dir) /
                                ("qtable_" + cfg.condition_label() + "_seed" +
                                 std::to_string(seed) + ".json"),
                            result.qtables.dump(2) + "\n");
        }
        paths[idx] = path;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int pool = std::min<int>(workers, static_cast<int>(cfg.seeds.size()));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(pool));
  for (int k = 0; k < pool; ++k) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return paths;
}

// Trapezoid-rule area under a checkpoint curve, with the first value extended
// back to step 0 (so a constant-1 curve over B steps scores exactly B).
inline double curve_auc(const std::vector<long long>& steps,
                        const std::vector<double>& values) {
  if (steps.size() != values.size())
    throw std::invalid_argument("curve_auc: size mismatch");
  if (steps.empty()) return 0.0;
  double auc = static_cast<double>(steps.front()) * values.front();
  for (std::size_t k = 1; k < steps.size(); ++k) {
    auc += static_cast<double>(steps[k] - steps[k - 1]) * 0.5 *
           (values[k] + values[k - 1]);
  }
  return auc;
}

// Per condition and checkpoint: mean/min/max across seeds of the
// cross-task mean greedy-evaluation success, plus an AUC sample-efficiency
// score and per-task final means.
inline nlohmann::ordered_json summarize(
    const std::vector<std::filesystem::path>& metric_files) {
  if (metric_files.empty())
    throw ConfigError("summarize: need at least one metrics file");

  struct SeedCurve {
    std::uint64_t seed;
    std::vector<long long> steps;
    std::vector<double> values;                    // mean over tasks
    std::map<int, double> final_per_task;          // task -> final success
  };
  std::map<std::string, std::vector<SeedCurve>> conditions;

  for (const auto& path : metric_files) {
    const std::string name = path.filename().string();
    const std::string prefix = "metrics_";
    const std::string seed_marker = "_seed";
    const std::size_t seed_pos = name.rfind(seed_marker);
    if (name.rfind(prefix, 0) != 0 || seed_pos == std::string::npos ||
        name.size() < 4 || name.substr(name.size() - 4) != ".csv")
      throw ConfigError("summarize: unrecognized metrics filename '" + name +
                        "'");
    const std::string label =
        name.substr(prefix.size(), seed_pos - prefix.size());
    const std::string seed_str = name.substr(
        seed_pos + seed_marker.size(),
        name.size() - 4 - seed_pos - seed_marker.size());
    SeedCurve curve;
    curve.seed = std::stoull(seed_str);

    std::map<long long, std::pair<double, int>> by_step;  // sum, count
    std::map<int, std::pair<long long, double>> final_by_task;
    for (const MetricsRow& r : read_metrics_csv(path)) {
      auto& acc = by_step[r.step];
      acc.first += r.eval_success;
      acc.second += 1;
      auto& fin = final_by_task[r.task];
      if (r.step >= fin.first) fin = {r.step, r.eval_success};
    }
    for (const auto& [step, acc] : by_step) {
      curve.steps.push_back(step);
      curve.values.push_back(acc.first / acc.second);
    }
    for (const auto& [task, fin] : final_by_task)
      curve.final_per_task[task] = fin.second;
    conditions[label].push_back(std::move(curve));
  }

  nlohmann::ordered_json out;
  nlohmann::ordered_json jconditions;
  for (auto& [label, curves] : conditions) {
    std::sort(curves.begin(), curves.end(),
              [](const SeedCurve& a, const SeedCurve& b) {
                return a.seed < b.seed;
              });
    const std::vector<long long>& grid = curves.front().steps;
    for (const SeedCurve& c : curves) {
      if (c.steps != grid)
        throw ConfigError(
            "summarize: inconsistent checkpoint grids across seeds for "
            "condition '" + label + "'");
    }
    nlohmann::ordered_json checkpoints = nlohmann::ordered_json::array();
    std::vector<double> mean_curve;
    std::vector<double> min_curve;
    std::vector<double> max_curve;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      double mn = curves.front().values[k];
      double mx = mn;
      double sum = 0.0;
      for (const SeedCurve& c : curves) {
        mn = std::min(mn, c.values[k]);
        mx = std::max(mx, c.values[k]);
        sum += c.values[k];
      }
      const double mean = sum / static_cast<double>(curves.size());
      mean_curve.push_back(mean);
      min_curve.push_back(mn);
      max_curve.push_back(mx);
      checkpoints.push_back({{"step", grid[k]},
                             {"mean", mean},
                             {"min", mn},
                             {"max", mx}});
    }
    nlohmann::ordered_json per_task;
    for (const auto& [task, value] : curves.front().final_per_task) {
      double sum = 0.0;
      for (const SeedCurve& c : curves) sum += c.final_per_task.at(task);
      per_task[std::to_string(task)] =
          sum / static_cast<double>(curves.size());
    }
    nlohmann::ordered_json jc;
    jc["n_seeds"] = curves.size();
    jc["checkpoints"] = std::move(checkpoints);
    jc["auc"] = curve_auc(grid, mean_curve);
    if (!mean_curve.empty()) {
      jc["final_mean"] = mean_curve.back();
      jc["final_min"] = min_curve.back();
      jc["final_max"] = max_curve.back();
    }
    jc["per_task_final_mean"] = std::move(per_task);
    jconditions[label] = std::move(jc);
  }
  out["conditions"] = std::move(jconditions);
  return out;
}

inline nlohmann::ordered_json summarize_dir(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("summarize: '" + dir.string() + "' is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("metrics_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return summarize(files);
}

}  // namespace mtlevy
