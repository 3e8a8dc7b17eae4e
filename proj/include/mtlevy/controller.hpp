#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlevy/embeddings.hpp"
#include "mtlevy/heavy_tail.hpp"
#include "mtlevy/io.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy {

// Exploration-duration shape parameter: alpha = alpha_bar + rho_bar^-(rho/rho_bar).
// Strictly increasing in rho, so higher success ratios shorten and rarefy
// exploration phases.
inline double compute_alpha(double rho, double rho_bar, double alpha_bar) {
  if (!(rho_bar > 0.0 && rho_bar < 1.0))
    throw std::domain_error("compute_alpha: rho_bar must lie in (0,1)");
  return alpha_bar + std::pow(rho_bar, -(rho / rho_bar));
}

// Exploration stays on while rho <= rho_bar; "exceeds" is strict, so the
// boundary rho == rho_bar keeps exploring.
inline bool exploration_enabled(double rho, double rho_bar) {
  return rho <= rho_bar;
}

// Per-task exponentially-moving-average success ratios rho_i together with
// the adaptation constants (smoothing tau, threshold rho_bar, offset
// alpha_bar). Single writer: only the episode-completion path calls update().
class SuccessTracker {
 public:
  SuccessTracker(int n_tasks, double tau = 0.01, double rho_bar = 0.1,
                 double alpha_bar = 1.0)
      : tau_(tau), rho_bar_(rho_bar), alpha_bar_(alpha_bar) {
    if (n_tasks < 1)
      throw std::invalid_argument("SuccessTracker: need at least one task");
    if (!(tau > 0.0 && tau <= 1.0))
      throw std::invalid_argument("SuccessTracker: tau must lie in (0,1]");
    if (!(rho_bar > 0.0 && rho_bar < 1.0))
      throw std::invalid_argument("SuccessTracker: rho_bar must lie in (0,1)");
    if (!(alpha_bar >= 0.0))
      throw std::invalid_argument("SuccessTracker: alpha_bar must be >= 0");
    rho_.assign(static_cast<std::size_t>(n_tasks), 0.0);
  }

  int n_tasks() const { return static_cast<int>(rho_.size()); }
  double tau() const { return tau_; }
  double rho_bar() const { return rho_bar_; }
  double alpha_bar() const { return alpha_bar_; }

  // rho_i <- (1 - tau) * rho_i + tau * [success]; returns the new value.
  double update(int task, bool success) {
    double& r = rho_.at(index(task));
    r = (1.0 - tau_) * r + tau_ * (success ? 1.0 : 0.0);
    return r;
  }

  double rho(int task) const { return rho_.at(index(task)); }
  double alpha(int task) const {
    return compute_alpha(rho(task), rho_bar_, alpha_bar_);
  }
  bool exploration_enabled(int task) const {
    return mtlevy::exploration_enabled(rho(task), rho_bar_);
  }

  // Direct override, for ablation studies and tests.
  void set_rho(int task, double value) {
    if (!(value >= 0.0 && value <= 1.0))
      throw std::invalid_argument("SuccessTracker: rho must lie in [0,1]");
    rho_.at(index(task)) = value;
  }

 private:
  std::size_t index(int task) const {
    if (task < 1 || task > n_tasks())
      throw std::domain_error("SuccessTracker: task index " +
                              std::to_string(task) + " out of range");
    return static_cast<std::size_t>(task - 1);
  }

  std::vector<double> rho_;
  double tau_;
  double rho_bar_;
  double alpha_bar_;
};

// Task-conditioned policy bank usable for both exploitation and sharing.
// act() must be deterministic given (task, state, variates); implementations
// may consume variates but are not required to.
class PolicyTable {
 public:
  virtual ~PolicyTable() = default;
  virtual int n_actions() const = 0;
  virtual int act(int task, int state, VariateSource& vars) const = 0;
};

// Per-episode controller state: the remaining repeat budget (real valued,
// decremented by 1 per step), the held action, and which task produced it.
// held_action is present exactly while a repetition is live (counter > 1).
struct ExplorationState {
  double counter = 0.0;
  std::optional<int> held_action;
  std::optional<int> source_task;

  void reset() { *this = ExplorationState{}; }
};

// {i} union { j in C_{i,n} : rho_j > rho_bar }. Always nonempty; with
// exclude_self the self index is dropped unless no neighbor qualifies.
inline std::vector<int> build_candidates(int task,
                                         const SuccessTracker& tracker,
                                         const CandidateIndexSet& nearest,
                                         bool exclude_self = false) {
  if (nearest.task != task)
    throw std::invalid_argument(
        "build_candidates: candidate set belongs to task " +
        std::to_string(nearest.task));
  std::vector<int> out;
  if (!exclude_self) out.push_back(task);
  for (int j : nearest.neighbors) {
    if (j == task) continue;
    if (tracker.rho(j) > tracker.rho_bar()) out.push_back(j);
  }
  if (out.empty()) out.push_back(task);
  std::sort(out.begin(), out.end());
  return out;
}

// Uniform pick: sorted(candidates)[floor(u * |candidates|)].
inline int select_action_source(const std::vector<int>& candidates,
                                double u) {
  if (candidates.empty())
    throw std::domain_error("select_action_source: empty candidate set");
  std::vector<int> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  return sorted[static_cast<std::size_t>(
      uniform_index(static_cast<int>(sorted.size()), u))];
}

struct ControllerOptions {
  double lambda = 1.0;  // duration scale, in timesteps

  // Ablation switches. no_behavior_sharing pins the candidate set to {i};
  // no_temporal_extension caps a sampled duration at per_step_cap so sharing
  // happens one step at a time; no_success_tracking pins alpha at its
  // rho = 0 value and never disables exploration.
  bool no_behavior_sharing = false;
  bool no_temporal_extension = false;
  bool no_success_tracking = false;
  bool exclude_self_from_candidates = false;
  double per_step_cap = 1.5;
};

struct StepDecision {
  int action = 0;
  int source_task = 0;  // task whose policy produced the action
  bool explored = false;
};

// One behavior-policy step.
//
//   disabled (rho_i > rho_bar):    emit pi_i(s); counter forced to 0, so a
//                                  repetition in flight is aborted.
//   counter <= 1 (decision step):  draw c ~ ParetoII(alpha(rho_i), lambda).
//                                  c > 1 enters exploration mode: draw a
//                                  source k from the candidates and hold its
//                                  action. Holding the agent's own index
//                                  emits a uniformly random action (the
//                                  greedy head has no sampling noise of its
//                                  own to contribute). c <= 1 emits pi_i(s).
//   counter > 1 (repetition):      re-emit the held action, no policy call.
//
// Every branch returns counter = max(0, working counter - 1). Variate order
// on a decision step: duration, then source, then (own-source only) action.
inline StepDecision controller_step(ExplorationState& state, int task,
                                    int env_state,
                                    const SuccessTracker& tracker,
                                    const CandidateIndexSet& nearest,
                                    const PolicyTable& policies,
                                    VariateSource& vars,
                                    const ControllerOptions& opts = {}) {
  const bool enabled =
      opts.no_success_tracking || tracker.exploration_enabled(task);
  if (!enabled) {
    state.counter = 0.0;
    state.held_action.reset();
    state.source_task.reset();
    return {policies.act(task, env_state, vars), task, false};
  }

  if (state.counter > 1.0) {
    if (!state.held_action || !state.source_task)
      throw std::logic_error(
          "controller_step: repeat counter active without a held action");
    const StepDecision out{*state.held_action, *state.source_task, true};
    state.counter = std::max(0.0, state.counter - 1.0);
    if (state.counter <= 1.0) {
      state.held_action.reset();
      state.source_task.reset();
    }
    return out;
  }

  const double alpha =
      opts.no_success_tracking
          ? compute_alpha(0.0, tracker.rho_bar(), tracker.alpha_bar())
          : tracker.alpha(task);
  double c = pareto_sample(ParetoII(alpha, opts.lambda), vars.next());
  if (opts.no_temporal_extension) c = std::min(c, opts.per_step_cap);

  if (c > 1.0) {
    const std::vector<int> candidates =
        opts.no_behavior_sharing
            ? std::vector<int>{task}
            : build_candidates(task, tracker, nearest,
                               opts.exclude_self_from_candidates);
    const int source = select_action_source(candidates, vars.next());
    const int action =
        source == task
            ? uniform_index(policies.n_actions(), vars.next())
            : policies.act(source, env_state, vars);
    state.counter = std::max(0.0, c - 1.0);
    if (state.counter > 1.0) {
      state.held_action = action;
      state.source_task = source;
    } else {
      state.held_action.reset();
      state.source_task.reset();
    }
    return {action, source, true};
  }

  const int action = policies.act(task, env_state, vars);
  state.counter = std::max(0.0, c - 1.0);
  state.held_action.reset();
  state.source_task.reset();
  return {action, task, false};
}

// Debug/trace row for one controller decision; counter is the value the
// controller carries out of the step.
struct TraceRow {
  long long t = 0;
  int task = 0;
  double counter = 0.0;
  int source_task = 0;
  bool explored = false;
};

inline void write_trace_csv(const std::vector<TraceRow>& rows,
                            std::ostream& out) {
  out << "t,task,counter,source_task,explored\n";
  for (const TraceRow& r : rows) {
    out << r.t << ',' << r.task << ',' << format_double(r.counter) << ','
        << r.source_task << ',' << (r.explored ? 1 : 0) << '\n';
  }
}

inline void write_trace_csv(const std::vector<TraceRow>& rows,
                            const std::filesystem::path& path) {
  std::ostringstream ss;
  write_trace_csv(rows, ss);
  write_text_atomic(path, ss.str());
}

}  // namespace mtlevy
