#include "mtlevy/envs.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mtlevy/controller.hpp"
#include "mtlevy/learner.hpp"
#include "mtlevy/rng.hpp"
#include "test_support.hpp"

using namespace mtlevy;

TEST(ChainWorld, ResetStartsAtZero) {
  ChainWorld env(3);
  EXPECT_EQ(env.reset(1), 0);
  EXPECT_EQ(env.reset(3), 0);
  EXPECT_THROW(env.reset(0), std::domain_error);
  EXPECT_THROW(env.reset(4), std::domain_error);
}

TEST(ChainWorld, SparseGoalStep) {
  ChainWorld env(3);
  env.reset(2);
  const StepOutcome o = env.step(2, 1, ChainWorld::kRight);
  EXPECT_EQ(o.next_state, 2);
  EXPECT_DOUBLE_EQ(o.reward, 1.0);
  EXPECT_TRUE(o.done);
  EXPECT_TRUE(o.success);
}

TEST(ChainWorld, BoundarySelfTransitions) {
  ChainWorld env(3);
  env.reset(1);
  const StepOutcome left = env.step(1, 0, ChainWorld::kLeft);
  EXPECT_EQ(left.next_state, 0);
  EXPECT_DOUBLE_EQ(left.reward, 0.0);
  EXPECT_FALSE(left.done);
  EXPECT_FALSE(left.success);
  EXPECT_EQ(env.transition(3, ChainWorld::kRight), 3);
}

TEST(ChainWorld, HorizonTerminatesEpisode) {
  ChainWorld env(3, 4);
  env.reset(3);
  StepOutcome o{};
  int s = 0;
  for (int t = 0; t < 4; ++t) {
    o = env.step(3, s, ChainWorld::kLeft);
    s = o.next_state;
  }
  EXPECT_TRUE(o.done);
  EXPECT_FALSE(o.success);
  EXPECT_THROW(env.step(3, s, ChainWorld::kLeft), std::logic_error);
}

TEST(ChainWorld, StepBeforeResetIsUsageError) {
  ChainWorld env(2);
  EXPECT_THROW(env.step(1, 0, ChainWorld::kRight), std::logic_error);
}

TEST(ChainWorld, DenseRewardIsNegativeScaledDistance) {
  ChainWorld env(4, 16, RewardMode::kDense);
  env.reset(4);
  const StepOutcome o = env.step(4, 0, ChainWorld::kRight);
  EXPECT_DOUBLE_EQ(o.reward, -3.0 / 16.0);
  const StepOutcome g = env.step(4, 3, ChainWorld::kRight);
  EXPECT_DOUBLE_EQ(g.reward, 0.0);
  EXPECT_TRUE(g.success);
}

TEST(ChainWorld, DefaultHorizonIsFourN) {
  ChainWorld env(5);
  EXPECT_EQ(env.horizon(), 20);
}

TEST(GridWorld, DefaultsAndTransitions) {
  GridWorld env(4, 3, GridWorld::default_goals(4, 3, 2));
  EXPECT_EQ(env.horizon(), 28);
  EXPECT_EQ(env.n_states(), 12);
  EXPECT_EQ(env.n_actions(), 4);
  const int start = env.reset(1);
  EXPECT_EQ(start, env.state_of({0, 0}));
  // Walls clamp.
  EXPECT_EQ(env.transition(start, 0), start);  // left
  EXPECT_EQ(env.transition(start, 1), start);  // down
  EXPECT_EQ(env.transition(start, 2), env.state_of({1, 0}));
  EXPECT_EQ(env.transition(start, 3), env.state_of({0, 1}));
}

TEST(GridWorld, DefaultGoalsAreDistinctAndFar) {
  const auto goals = GridWorld::default_goals(15, 15, 6);
  ASSERT_EQ(goals.size(), 6u);
  for (std::size_t a = 0; a < goals.size(); ++a) {
    for (std::size_t b = a + 1; b < goals.size(); ++b)
      EXPECT_NE(goals[a], goals[b]);
    EXPECT_GE(goals[a].first + goals[a].second, 14);
  }
}

TEST(GridWorld, SparseOffGoalStepHasZeroReward) {
  GridWorld env(5, 5, {{4, 4}});
  env.reset(1);
  const StepOutcome o = env.step(1, env.state_of({0, 0}), 2);
  EXPECT_DOUBLE_EQ(o.reward, 0.0);
  EXPECT_FALSE(o.success);
}

TEST(GridWorld, RejectsBadConstruction) {
  EXPECT_THROW(GridWorld(0, 3, {{0, 0}}), std::invalid_argument);
  EXPECT_THROW(GridWorld(3, 3, {}), std::invalid_argument);
  EXPECT_THROW(GridWorld(3, 3, {{3, 0}}), std::invalid_argument);
  EXPECT_THROW(GridWorld(3, 3, {{1, 1}, {1, 1}}), std::invalid_argument);
  EXPECT_THROW(GridWorld(3, 3, {{1, 1}}, 0, RewardMode::kSparse, {5, 5}),
               std::invalid_argument);
}

TEST(GridWorld, KeyDistanceUsesObjectCellWhenSet) {
  GridWorld env(5, 5, {{4, 4}}, 0, RewardMode::kSparse, {0, 0},
                GridWorld::Cell{3, 4});
  EXPECT_DOUBLE_EQ(env.key_distance(1, env.state_of({0, 0})), 5.0);
  GridWorld plain(5, 5, {{4, 4}});
  EXPECT_DOUBLE_EQ(plain.key_distance(1, plain.state_of({0, 0})),
                   std::hypot(4.0, 4.0));
}

TEST(KeyStateDistances, PerStepEuclidean) {
  GridWorld env(5, 5, {{4, 4}});
  EpisodeRecord rec;
  rec.task = 1;
  rec.states = {env.state_of({0, 0}), env.state_of({0, 0})};
  rec.actions = {0};
  rec.rewards = {0.0};
  rec.action_sources = {1};
  const auto d = key_state_distances(env, rec, {3, 4});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0], 5.0);

  EpisodeRecord sitting;
  sitting.task = 1;
  sitting.states = {env.state_of({2, 2}), env.state_of({2, 2}),
                    env.state_of({2, 2})};
  sitting.actions = {0, 0};
  sitting.rewards = {0.0, 0.0};
  sitting.action_sources = {1, 1};
  for (const double v : key_state_distances(env, sitting, {2, 2}))
    EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LowerFractionMean, PicksLowestPercentile) {
  std::vector<double> values(99, 5.0);
  values.push_back(0.0);
  EXPECT_DOUBLE_EQ(lower_fraction_mean(values, 0.01), 0.0);
  EXPECT_TRUE(std::isnan(lower_fraction_mean({}, 0.01)));
  EXPECT_DOUBLE_EQ(lower_fraction_mean({3.0, 1.0, 2.0}, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(lower_fraction_mean({3.0, 1.0, 2.0}, 1.0), 2.0);
  EXPECT_THROW(lower_fraction_mean({1.0}, 0.0), std::domain_error);
}

TEST(VisitationCounts, CountsAllStateEntries) {
  EXPECT_TRUE(visitation_counts({}).empty());
  EpisodeRecord rec;
  rec.task = 1;
  rec.states = {0, 1, 1};
  rec.actions = {1, 0};
  rec.rewards = {0.0, 0.0};
  rec.action_sources = {1, 1};
  const auto counts = visitation_counts({rec});
  EXPECT_EQ(counts.at(0), 1);
  EXPECT_EQ(counts.at(1), 2);
}

TEST(VisitationCounts, NormalizationSumsToOne) {
  UniformSource vars(17);
  std::vector<EpisodeRecord> records;
  for (int e = 0; e < 25; ++e) {
    EpisodeRecord rec;
    rec.task = 1;
    rec.states.push_back(0);
    const int len = 1 + uniform_index(30, vars.next());
    for (int t = 0; t < len; ++t) {
      rec.states.push_back(uniform_index(10, vars.next()));
      rec.actions.push_back(uniform_index(2, vars.next()));
      rec.rewards.push_back(0.0);
      rec.action_sources.push_back(1);
    }
    ASSERT_TRUE(rec.consistent());
    records.push_back(rec);
  }
  double total = 0.0;
  for (const auto& [s, p] : normalized_visitation(records)) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(EpisodeJsonl, SchemaKeys) {
  EpisodeRecord rec;
  rec.task = 2;
  rec.states = {0, 1};
  rec.actions = {1};
  rec.rewards = {1.0};
  rec.success = true;
  rec.action_sources = {3};
  std::ostringstream ss;
  write_episodes_jsonl({rec, rec}, ss);
  std::istringstream in(ss.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("task").get<int>(), 2);
    EXPECT_EQ(j.at("states").get<std::vector<int>>(),
              (std::vector<int>{0, 1}));
    EXPECT_EQ(j.at("actions").get<std::vector<int>>(), (std::vector<int>{1}));
    EXPECT_EQ(j.at("rewards").get<std::vector<double>>(),
              (std::vector<double>{1.0}));
    EXPECT_TRUE(j.at("success").get<bool>());
    EXPECT_EQ(j.at("action_sources").get<std::vector<int>>(),
              (std::vector<int>{3}));
    EXPECT_EQ(j.size(), 6u);
  }
  EXPECT_EQ(lines, 2);
}

// Restated chain-complexity separation: a uniformly random walker's chance of
// reaching goal N within 2N steps decays at least geometrically in N, while
// behavior sharing from a solved neighbor keeps it bounded below.
TEST(ChainComplexity, RandomWalkDecaysSharingDoesNot) {
  auto random_success_rate = [](int n) {
    ChainWorld env(n, 2 * n);
    UniformSource vars(mix_seed({static_cast<std::uint64_t>(n), 5}));
    int successes = 0;
    const int episodes = 10000;
    for (int e = 0; e < episodes; ++e) {
      int s = env.reset(n);
      while (true) {
        const StepOutcome o = env.step(n, s, uniform_index(2, vars.next()));
        s = o.next_state;
        if (o.done) {
          successes += o.success ? 1 : 0;
          break;
        }
      }
    }
    return static_cast<double>(successes) / episodes;
  };

  auto sharing_success_rate = [](int n) {
    ChainWorld env(n, 2 * n);
    // Solved donor: task n-1's greedy policy walks right below its goal.
    MultiHeadQTable q(n, n + 1, 2);
    for (int s = 0; s < n - 1; ++s) q.set_q(n - 1, s, ChainWorld::kRight, 1.0);
    GreedyPolicyTable bank(q);
    SuccessTracker tracker(n);
    tracker.set_rho(n - 1, 0.5);
    CandidateIndexSet nearest;
    nearest.task = n;
    nearest.neighbors = {n - 1, n};
    UniformSource vars(mix_seed({static_cast<std::uint64_t>(n), 6}));
    ExplorationState state;
    int successes = 0;
    const int episodes = 10000;
    for (int e = 0; e < episodes; ++e) {
      state.reset();
      int s = env.reset(n);
      while (true) {
        const auto d =
            controller_step(state, n, s, tracker, nearest, bank, vars);
        const StepOutcome o = env.step(n, s, d.action);
        s = o.next_state;
        if (o.done) {
          successes += o.success ? 1 : 0;
          break;
        }
      }
    }
    return static_cast<double>(successes) / episodes;
  };

  const double r4 = random_success_rate(4);
  const double r6 = random_success_rate(6);
  const double r8 = random_success_rate(8);
  EXPECT_LT(r6, 0.7 * r4);
  EXPECT_LT(r8, 0.7 * r6);

  const double s4 = sharing_success_rate(4);
  const double s6 = sharing_success_rate(6);
  const double s8 = sharing_success_rate(8);
  EXPECT_GT(s4, 0.05);
  EXPECT_GT(s6, 0.05);
  EXPECT_GT(s8, 0.05);
  EXPECT_GT(s8, r8);
}
