#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlevy/io.hpp"

namespace mtlevy {

enum class RewardMode { kSparse, kDense };

struct StepOutcome {
  int next_state = 0;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

// One episode's trajectory plus per-step provenance: action_sources[t] is the
// task index whose policy produced actions[t].
struct EpisodeRecord {
  int task = 0;
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  bool success = false;
  std::vector<int> action_sources;

  bool consistent() const {
    return states.size() == actions.size() + 1 &&
           rewards.size() == actions.size() &&
           action_sources.size() == actions.size();
  }
};

// Tabular multi-task environment. Transitions are pure in (task, state,
// action); reset()/step() additionally keep per-episode bookkeeping (step
// count, done flag) for horizon termination. Task ids are 1-based, states and
// actions 0-based.
class TaskEnv {
 public:
  virtual ~TaskEnv() = default;

  virtual int n_tasks() const = 0;
  virtual int n_states() const = 0;
  virtual int n_actions() const = 0;
  virtual int horizon() const = 0;
  virtual int goal_state(int task) const = 0;

  // Metric-space distance from a state to the task's goal.
  virtual double goal_distance(int task, int state) const = 0;
  // Distance to the key-state marker; defaults to the goal.
  virtual double key_distance(int task, int state) const {
    return goal_distance(task, state);
  }

  virtual int reset(int task) = 0;
  virtual StepOutcome step(int task, int state, int action) = 0;

 protected:
  void check_task(int task) const {
    if (task < 1 || task > n_tasks())
      throw std::domain_error("env: task index " + std::to_string(task) +
                              " out of range 1.." + std::to_string(n_tasks()));
  }
  void check_state(int state) const {
    if (state < 0 || state >= n_states())
      throw std::domain_error("env: state out of range");
  }
  void check_action(int action) const {
    if (action < 0 || action >= n_actions())
      throw std::domain_error("env: action out of range");
  }
};

// Line of states 0..N shared by N tasks; task i's goal is state i, so the
// agent starting at 0 traverses i+1 states counting start and goal. Actions
// are 0 = left, 1 = right; moves off either end self-transition.
class ChainWorld final : public TaskEnv {
 public:
  static constexpr int kLeft = 0;
  static constexpr int kRight = 1;

  explicit ChainWorld(int n_tasks, int horizon = 0,
                      RewardMode mode = RewardMode::kSparse)
      : n_tasks_(n_tasks),
        horizon_(horizon > 0 ? horizon : 4 * n_tasks),
        mode_(mode) {
    if (n_tasks < 1)
      throw std::invalid_argument("ChainWorld: need at least one task");
  }

  int n_tasks() const override { return n_tasks_; }
  int n_states() const override { return n_tasks_ + 1; }
  int n_actions() const override { return 2; }
  int horizon() const override { return horizon_; }
  int goal_state(int task) const override {
    check_task(task);
    return task;
  }
  RewardMode reward_mode() const { return mode_; }

  double goal_distance(int task, int state) const override {
    check_task(task);
    check_state(state);
    return std::abs(state - task);
  }

  int transition(int state, int action) const {
    check_state(state);
    check_action(action);
    const int next = action == kLeft ? state - 1 : state + 1;
    return std::clamp(next, 0, n_tasks_);
  }

  int reset(int task) override {
    check_task(task);
    steps_taken_ = 0;
    episode_done_ = false;
    episode_open_ = true;
    return 0;
  }

  StepOutcome step(int task, int state, int action) override {
    check_task(task);
    if (!episode_open_ || episode_done_)
      throw std::logic_error("ChainWorld: step on a finished episode");
    const int next = transition(state, action);
    ++steps_taken_;
    const bool success = next == goal_state(task);
    const bool done = success || steps_taken_ >= horizon_;
    episode_done_ = done;
    double reward = 0.0;
    if (mode_ == RewardMode::kSparse) {
      reward = success ? 1.0 : 0.0;
    } else {
      reward = -goal_distance(task, next) / static_cast<double>(horizon_);
    }
    return {next, reward, done, success};
  }

 private:
  int n_tasks_;
  int horizon_;
  RewardMode mode_;
  int steps_taken_ = 0;
  bool episode_done_ = false;
  bool episode_open_ = false;
};

// 2D goal-reaching gridworld with the 4-neighborhood moves; walls clamp.
// States are flattened cells y * width + x. Actions: 0 = left, 1 = down,
// 2 = right, 3 = up.
class GridWorld final : public TaskEnv {
 public:
  using Cell = std::pair<int, int>;  // (x, y)

  GridWorld(int width, int height, std::vector<Cell> goals, int horizon = 0,
            RewardMode mode = RewardMode::kSparse, Cell start = {0, 0},
            std::optional<Cell> object_cell = std::nullopt)
      : width_(width),
        height_(height),
        goals_(std::move(goals)),
        horizon_(horizon > 0 ? horizon : 4 * (width + height)),
        mode_(mode),
        start_(start),
        object_cell_(object_cell) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("GridWorld: dimensions must be positive");
    if (goals_.empty())
      throw std::invalid_argument("GridWorld: need at least one goal");
    auto valid = [&](const Cell& c) {
      return c.first >= 0 && c.first < width_ && c.second >= 0 &&
             c.second < height_;
    };
    if (!valid(start_))
      throw std::invalid_argument("GridWorld: start cell out of bounds");
    for (std::size_t a = 0; a < goals_.size(); ++a) {
      if (!valid(goals_[a]))
        throw std::invalid_argument("GridWorld: goal cell out of bounds");
      for (std::size_t b = a + 1; b < goals_.size(); ++b) {
        if (goals_[a] == goals_[b])
          throw std::invalid_argument("GridWorld: goal cells must be distinct");
      }
    }
    if (object_cell_ && !valid(*object_cell_))
      throw std::invalid_argument("GridWorld: object cell out of bounds");
  }

  // Evenly spaced cells along the far boundary (right edge bottom-to-top,
  // then top edge right-to-left); all far from the default (0,0) start.
  static std::vector<Cell> default_goals(int width, int height, int n_tasks) {
    std::vector<Cell> boundary;
    for (int y = 0; y < height; ++y) boundary.push_back({width - 1, y});
    for (int x = width - 2; x >= 0; --x) boundary.push_back({x, height - 1});
    if (n_tasks < 1 || static_cast<std::size_t>(n_tasks) > boundary.size())
      throw std::invalid_argument("GridWorld: cannot place that many goals");
    std::vector<Cell> goals;
    const double step =
        n_tasks == 1 ? 0.0
                     : static_cast<double>(boundary.size() - 1) /
                           static_cast<double>(n_tasks - 1);
    for (int k = 0; k < n_tasks; ++k) {
      goals.push_back(
          boundary[static_cast<std::size_t>(std::llround(k * step))]);
    }
    return goals;
  }

  int n_tasks() const override { return static_cast<int>(goals_.size()); }
  int n_states() const override { return width_ * height_; }
  int n_actions() const override { return 4; }
  int horizon() const override { return horizon_; }
  int width() const { return width_; }
  int height() const { return height_; }
  Cell start_cell() const { return start_; }
  const std::vector<Cell>& goals() const { return goals_; }
  std::optional<Cell> object_cell() const { return object_cell_; }
  RewardMode reward_mode() const { return mode_; }

  int state_of(const Cell& c) const { return c.second * width_ + c.first; }
  Cell cell_of(int state) const {
    check_state(state);
    return {state % width_, state / width_};
  }

  int goal_state(int task) const override {
    check_task(task);
    return state_of(goals_[static_cast<std::size_t>(task - 1)]);
  }

  static double euclidean(const Cell& a, const Cell& b) {
    return std::hypot(static_cast<double>(a.first - b.first),
                      static_cast<double>(a.second - b.second));
  }

  double goal_distance(int task, int state) const override {
    check_task(task);
    return euclidean(cell_of(state), goals_[static_cast<std::size_t>(task - 1)]);
  }

  double key_distance(int task, int state) const override {
    if (object_cell_) return euclidean(cell_of(state), *object_cell_);
    return goal_distance(task, state);
  }

  // Shortest-path (Manhattan) distance; the grid has no obstacles.
  int shortest_path(int task, int state) const {
    check_task(task);
    const Cell c = cell_of(state);
    const Cell& g = goals_[static_cast<std::size_t>(task - 1)];
    return std::abs(c.first - g.first) + std::abs(c.second - g.second);
  }

  int transition(int state, int action) const {
    check_action(action);
    Cell c = cell_of(state);
    switch (action) {
      case 0: c.first -= 1; break;
      case 1: c.second -= 1; break;
      case 2: c.first += 1; break;
      case 3: c.second += 1; break;
      default: break;
    }
    c.first = std::clamp(c.first, 0, width_ - 1);
    c.second = std::clamp(c.second, 0, height_ - 1);
    return state_of(c);
  }

  int reset(int task) override {
    check_task(task);
    steps_taken_ = 0;
    episode_done_ = false;
    episode_open_ = true;
    return state_of(start_);
  }

  StepOutcome step(int task, int state, int action) override {
    check_task(task);
    if (!episode_open_ || episode_done_)
      throw std::logic_error("GridWorld: step on a finished episode");
    const int next = transition(state, action);
    ++steps_taken_;
    const bool success = next == goal_state(task);
    const bool done = success || steps_taken_ >= horizon_;
    episode_done_ = done;
    double reward = 0.0;
    if (mode_ == RewardMode::kSparse) {
      reward = success ? 1.0 : 0.0;
    } else {
      reward = -static_cast<double>(shortest_path(task, next)) /
               static_cast<double>(horizon_);
    }
    return {next, reward, done, success};
  }

 private:
  int width_;
  int height_;
  std::vector<Cell> goals_;
  int horizon_;
  RewardMode mode_;
  Cell start_;
  std::optional<Cell> object_cell_;
  int steps_taken_ = 0;
  bool episode_done_ = false;
  bool episode_open_ = false;
};

// Per-step Euclidean distances from the agent cell to key_cell, one entry per
// step, measured at the cell each step lands in.
inline std::vector<double> key_state_distances(const GridWorld& grid,
                                               const EpisodeRecord& record,
                                               GridWorld::Cell key_cell) {
  std::vector<double> out;
  out.reserve(record.actions.size());
  for (std::size_t t = 1; t < record.states.size(); ++t)
    out.push_back(GridWorld::euclidean(grid.cell_of(record.states[t]),
                                       key_cell));
  return out;
}

// Mean of the lowest floor(fraction * n) values (at least one). NaN on empty
// input.
inline double lower_fraction_mean(std::vector<double> values,
                                  double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::domain_error("lower_fraction_mean: fraction must be in (0,1]");
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction *
                                             static_cast<double>(values.size()))));
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += values[i];
  return sum / static_cast<double>(k);
}

// Per-state visit totals across all records (every entry of every state
// sequence counts, including starts).
inline std::map<int, long long> visitation_counts(
    const std::vector<EpisodeRecord>& records) {
  std::map<int, long long> counts;
  for (const EpisodeRecord& r : records)
    for (int s : r.states) ++counts[s];
  return counts;
}

inline std::map<int, double> normalized_visitation(
    const std::vector<EpisodeRecord>& records) {
  const auto counts = visitation_counts(records);
  long long total = 0;
  for (const auto& [s, c] : counts) total += c;
  std::map<int, double> out;
  for (const auto& [s, c] : counts)
    out[s] = static_cast<double>(c) / static_cast<double>(total);
  return out;
}

inline nlohmann::json episode_to_json(const EpisodeRecord& r) {
  return nlohmann::json{{"task", r.task},
                        {"states", r.states},
                        {"actions", r.actions},
                        {"rewards", r.rewards},
                        {"success", r.success},
                        {"action_sources", r.action_sources}};
}

// JSON-lines, one episode per line.
inline void write_episodes_jsonl(const std::vector<EpisodeRecord>& records,
                                 std::ostream& out) {
  for (const EpisodeRecord& r : records) out << episode_to_json(r).dump() << '\n';
}

inline void write_episodes_jsonl(const std::vector<EpisodeRecord>& records,
                                 const std::filesystem::path& path) {
  std::ostringstream ss;
  write_episodes_jsonl(records, ss);
  write_text_atomic(path, ss.str());
}

}  // namespace mtlevy
