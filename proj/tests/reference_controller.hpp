#pragma once

// Straight-line reference interpreter of the behavior-policy decision rule,
// transcribed step by step with no shared code beyond the distribution
// primitives. Used as the oracle for trace-equivalence tests: the production
// controller must match this interpreter exactly on (action, source, counter)
// for arbitrary variate scripts.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtlevy/controller.hpp"
#include "mtlevy/embeddings.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy_test {

struct ReferenceState {
  double counter = 0.0;
  bool holding = false;
  int held_action = -1;
  int held_source = -1;
};

struct ReferenceResult {
  int action = -1;
  int source = -1;
  double counter = 0.0;
  bool explored = false;
};

inline ReferenceResult reference_step(ReferenceState& st, int task, int state,
                                      const mtlevy::SuccessTracker& tracker,
                                      const mtlevy::CandidateIndexSet& nearest,
                                      const mtlevy::PolicyTable& policies,
                                      mtlevy::VariateSource& vars,
                                      const mtlevy::ControllerOptions& opts) {
  const double rho_bar = tracker.rho_bar();
  const double alpha_bar = tracker.alpha_bar();
  const double rho_i = tracker.rho(task);

  // Switch-off once the tracked success ratio exceeds the threshold; an
  // in-flight repetition is aborted.
  if (!opts.no_success_tracking && rho_i > rho_bar) {
    st.counter = 0.0;
    st.holding = false;
    const int a = policies.act(task, state, vars);
    return {a, task, 0.0, false};
  }

  if (st.counter <= 1.0) {
    // Decision step: adapt the shape parameter and draw a duration.
    double alpha;
    if (opts.no_success_tracking) {
      alpha = alpha_bar + std::pow(rho_bar, -0.0);
    } else {
      alpha = alpha_bar + std::pow(rho_bar, -(rho_i / rho_bar));
    }
    const double u_c = vars.next();
    double c = opts.lambda * (std::pow(1.0 - u_c, -1.0 / alpha) - 1.0);
    if (opts.no_temporal_extension && c > opts.per_step_cap)
      c = opts.per_step_cap;

    if (c > 1.0) {
      // Candidate construction: self plus qualifying neighbors.
      std::vector<int> candidates;
      if (opts.no_behavior_sharing) {
        candidates.push_back(task);
      } else {
        if (!opts.exclude_self_from_candidates) candidates.push_back(task);
        for (int j : nearest.neighbors) {
          if (j == task) continue;
          if (tracker.rho(j) > rho_bar) candidates.push_back(j);
        }
        if (candidates.empty()) candidates.push_back(task);
        std::sort(candidates.begin(), candidates.end());
      }

      const double u_k = vars.next();
      int idx = static_cast<int>(u_k * static_cast<double>(candidates.size()));
      if (idx >= static_cast<int>(candidates.size()))
        idx = static_cast<int>(candidates.size()) - 1;
      if (idx < 0) idx = 0;
      const int k = candidates[static_cast<std::size_t>(idx)];

      int a;
      if (k == task) {
        const double u_a = vars.next();
        int ai = static_cast<int>(u_a * policies.n_actions());
        if (ai >= policies.n_actions()) ai = policies.n_actions() - 1;
        if (ai < 0) ai = 0;
        a = ai;
      } else {
        a = policies.act(k, state, vars);
      }

      st.counter = std::max(0.0, c - 1.0);
      st.holding = st.counter > 1.0;
      st.held_action = a;
      st.held_source = k;
      return {a, k, st.counter, true};
    }

    const int a = policies.act(task, state, vars);
    st.counter = std::max(0.0, c - 1.0);
    st.holding = false;
    return {a, task, st.counter, false};
  }

  // Mid-repetition: re-emit the held action.
  const int a = st.held_action;
  const int k = st.held_source;
  st.counter = std::max(0.0, st.counter - 1.0);
  if (st.counter <= 1.0) st.holding = false;
  return {a, k, st.counter, true};
}

}  // namespace mtlevy_test
