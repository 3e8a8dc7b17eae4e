#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlevy/controller.hpp"
#include "mtlevy/heavy_tail.hpp"
#include "mtlevy/io.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy {

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  bool terminal = false;  // goal reached; horizon truncation bootstraps
};

// One Q-table per task over shared state/action spaces. Entries start at the
// optimism constant, so an unvisited (s, a) reads as that value.
class MultiHeadQTable {
 public:
  MultiHeadQTable(int n_tasks, int n_states, int n_actions,
                  double learning_rate = 0.1, double gamma = 0.99,
                  double optimism = 0.0)
      : n_tasks_(n_tasks),
        n_states_(n_states),
        n_actions_(n_actions),
        lr_(learning_rate),
        gamma_(gamma),
        optimism_(optimism) {
    if (n_tasks < 1 || n_states < 1 || n_actions < 1)
      throw std::invalid_argument("MultiHeadQTable: sizes must be positive");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
      throw std::invalid_argument(
          "MultiHeadQTable: learning_rate must lie in (0,1]");
    if (!(gamma >= 0.0 && gamma < 1.0))
      throw std::invalid_argument("MultiHeadQTable: gamma must lie in [0,1)");
    if (!std::isfinite(optimism))
      throw std::invalid_argument("MultiHeadQTable: optimism must be finite");
    tables_.assign(static_cast<std::size_t>(n_tasks),
                   std::vector<double>(
                       static_cast<std::size_t>(n_states) *
                           static_cast<std::size_t>(n_actions),
                       optimism));
  }

  int n_tasks() const { return n_tasks_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double learning_rate() const { return lr_; }
  double gamma() const { return gamma_; }
  double optimism() const { return optimism_; }

  double q(int task, int state, int action) const {
    return tables_[head(task)][cell(state, action)];
  }

  void set_q(int task, int state, int action, double value) {
    if (!std::isfinite(value))
      throw std::invalid_argument("MultiHeadQTable: Q-values must be finite");
    tables_[head(task)][cell(state, action)] = value;
  }

  double max_q(int task, int state) const {
    const std::vector<double>& t = tables_[head(task)];
    const std::size_t base = cell(state, 0);
    double best = t[base];
    for (int a = 1; a < n_actions_; ++a) best = std::max(best, t[base + a]);
    return best;
  }

  // Q(s,a) += lr * (r + gamma * (0 if terminal else max_a' Q(s',a')) - Q(s,a));
  // returns the new Q(s,a).
  double update(int task, const Transition& t) {
    const double bootstrap = t.terminal ? 0.0 : max_q(task, t.next_state);
    double& cell_ref = tables_[head(task)][cell(t.state, t.action)];
    cell_ref += lr_ * (t.reward + gamma_ * bootstrap - cell_ref);
    return cell_ref;
  }

  // Keyed by task/state/action for checkpoint inspection.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (int task = 1; task <= n_tasks_; ++task) {
      nlohmann::ordered_json jt;
      for (int s = 0; s < n_states_; ++s) {
        nlohmann::ordered_json js;
        for (int a = 0; a < n_actions_; ++a)
          js[std::to_string(a)] = q(task, s, a);
        jt[std::to_string(s)] = std::move(js);
      }
      j[std::to_string(task)] = std::move(jt);
    }
    return j;
  }

  void save_json(const std::filesystem::path& path) const {
    write_text_atomic(path, to_json().dump(2) + "\n");
  }

 private:
  std::size_t head(int task) const {
    if (task < 1 || task > n_tasks_)
      throw std::domain_error("MultiHeadQTable: task index out of range");
    return static_cast<std::size_t>(task - 1);
  }
  std::size_t cell(int state, int action) const {
    if (state < 0 || state >= n_states_)
      throw std::domain_error("MultiHeadQTable: state out of range");
    if (action < 0 || action >= n_actions_)
      throw std::domain_error("MultiHeadQTable: action out of range");
    return static_cast<std::size_t>(state) *
               static_cast<std::size_t>(n_actions_) +
           static_cast<std::size_t>(action);
  }

  int n_tasks_;
  int n_states_;
  int n_actions_;
  double lr_;
  double gamma_;
  double optimism_;
  std::vector<std::vector<double>> tables_;
};

// argmax_a Q(s,a); exact ties resolve to the lowest action index. The
// tie_variate parameter is part of the call contract but unused by this
// deterministic resolution.
inline int greedy_action(const MultiHeadQTable& table, int task, int state,
                         double /*tie_variate*/ = 0.0) {
  int best = 0;
  double best_value = table.q(task, state, 0);
  for (int a = 1; a < table.n_actions(); ++a) {
    const double v = table.q(task, state, a);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

// Greedy policy per head; this is the policy bank handed to the behavior
// controller. Draws no variates.
class GreedyPolicyTable final : public PolicyTable {
 public:
  explicit GreedyPolicyTable(const MultiHeadQTable& table) : table_(&table) {}
  int n_actions() const override { return table_->n_actions(); }
  int act(int task, int state, VariateSource&) const override {
    return greedy_action(*table_, task, state);
  }

 private:
  const MultiHeadQTable* table_;
};

// Softmax over Q(s,.)/temperature, sampled with one uniform variate.
inline int boltzmann_action(const MultiHeadQTable& table, int task, int state,
                            double temperature, double u) {
  if (!(temperature > 0.0))
    throw std::domain_error("boltzmann_action: temperature must be > 0");
  const int A = table.n_actions();
  std::vector<double> w(static_cast<std::size_t>(A));
  const double m = table.max_q(task, state);
  double total = 0.0;
  for (int a = 0; a < A; ++a) {
    w[static_cast<std::size_t>(a)] =
        std::exp((table.q(task, state, a) - m) / temperature);
    total += w[static_cast<std::size_t>(a)];
  }
  double threshold = u * total;
  for (int a = 0; a < A; ++a) {
    threshold -= w[static_cast<std::size_t>(a)];
    if (threshold < 0.0) return a;
  }
  return A - 1;
}

// Single-task exploration baselines. ez-greedy repeats a uniformly random
// own action for a Pareto-sampled duration, with the same counter arithmetic
// as the behavior controller; it differs from the controller's ablated form
// by gating entries on epsilon instead of the duration draw.
struct BaselinePolicy {
  enum class Kind { kEpsilonGreedy, kBoltzmann, kEzGreedy };

  Kind kind = Kind::kEpsilonGreedy;
  double epsilon = 0.1;
  double temperature = 1.0;
  ParetoII pareto{2.0, 1.0};
  ExplorationState ez;  // live repetition state (ez-greedy only)

  static BaselinePolicy epsilon_greedy(double eps) {
    BaselinePolicy p;
    p.kind = Kind::kEpsilonGreedy;
    p.epsilon = check_eps(eps);
    return p;
  }
  static BaselinePolicy boltzmann(double temperature) {
    if (!(temperature > 0.0))
      throw std::invalid_argument("BaselinePolicy: temperature must be > 0");
    BaselinePolicy p;
    p.kind = Kind::kBoltzmann;
    p.temperature = temperature;
    return p;
  }
  static BaselinePolicy ez_greedy(double eps, const ParetoII& durations) {
    BaselinePolicy p;
    p.kind = Kind::kEzGreedy;
    p.epsilon = check_eps(eps);
    p.pareto = durations;
    return p;
  }

  void reset_episode() { ez.reset(); }

 private:
  static double check_eps(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0))
      throw std::invalid_argument("BaselinePolicy: epsilon must lie in [0,1]");
    return eps;
  }
};

inline int baseline_act(BaselinePolicy& policy, const MultiHeadQTable& table,
                        int task, int state, VariateSource& vars) {
  switch (policy.kind) {
    case BaselinePolicy::Kind::kEpsilonGreedy: {
      if (vars.next() < policy.epsilon)
        return uniform_index(table.n_actions(), vars.next());
      return greedy_action(table, task, state);
    }
    case BaselinePolicy::Kind::kBoltzmann:
      return boltzmann_action(table, task, state, policy.temperature,
                              vars.next());
    case BaselinePolicy::Kind::kEzGreedy: {
      ExplorationState& st = policy.ez;
      if (st.counter > 1.0) {
        if (!st.held_action)
          throw std::logic_error(
              "ez-greedy: repeat counter active without a held action");
        const int action = *st.held_action;
        st.counter = std::max(0.0, st.counter - 1.0);
        if (st.counter <= 1.0) {
          st.held_action.reset();
          st.source_task.reset();
        }
        return action;
      }
      if (vars.next() < policy.epsilon) {
        const double c = pareto_sample(policy.pareto, vars.next());
        const int action = uniform_index(table.n_actions(), vars.next());
        st.counter = std::max(0.0, c - 1.0);
        if (st.counter > 1.0) {
          st.held_action = action;
          st.source_task = task;
        } else {
          st.held_action.reset();
          st.source_task.reset();
        }
        return action;
      }
      st.counter = 0.0;
      st.held_action.reset();
      st.source_task.reset();
      return greedy_action(table, task, state);
    }
  }
  throw std::logic_error("baseline_act: unknown policy kind");
}

}  // namespace mtlevy
