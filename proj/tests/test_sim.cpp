#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "autothink/sim.hpp"

using namespace autothink;
using namespace autothink::sim;

namespace {

QueryRecord query(std::string id, double d, QueryDomain dom = QueryDomain::Math) {
  QueryRecord q;
  q.id = std::move(id);
  q.domain = dom;
  q.difficulty = d;
  return q;
}

std::vector<QueryRecord> flat_corpus(double d, int n = 50) {
  std::vector<QueryRecord> c;
  for (int i = 0; i < n; ++i) c.push_back(query("q" + std::to_string(i), d, kQueryDomains[i % 6]));
  return c;
}

std::string csv_of(const SimMetrics& m) {
  std::ostringstream os;
  write_metrics_csv(os, m);
  return os.str();
}

// Two-armed bandit oracle written out from the environment formulas: the
// expected composite reward of always choosing `on` at difficulty d.
double expected_reward(bool on, double d, double lambda) {
  auto clamp = [](double x) { return x < 0 ? 0.0 : (x > 1 ? 1.0 : x); };
  const double pon = clamp(0.95 - 0.35 * d), poff = clamp(0.95 - 0.90 * d);
  const double uon = pon - lambda * std::round(8000 * (0.5 + d));
  const double uoff = poff - lambda * std::round(400 + 400 * d);
  const bool label_on = uon > uoff;
  const double judge = on == label_on ? 1.0 : 0.0;
  const double p = on ? pon : poff;
  return 0.2 * judge + p * (0.5 + 0.5 * judge);
}

}  // namespace

TEST(EnvLabel, LiteralUtilitiesAtSmallLambda) {
  EnvConfig env;
  env.lambda_cost = 1e-5;
  EXPECT_NEAR(mode_utility(ReasoningMode::ThinkOn, 0, env), 0.91, 1e-12);
  EXPECT_NEAR(mode_utility(ReasoningMode::ThinkOff, 0, env), 0.946, 1e-12);
  EXPECT_EQ(env_label(0, env), ReasoningMode::ThinkOff);
  EXPECT_NEAR(mode_utility(ReasoningMode::ThinkOn, 1, env), 0.48, 1e-12);
  EXPECT_NEAR(mode_utility(ReasoningMode::ThinkOff, 1, env), 0.042, 1e-12);
  EXPECT_EQ(env_label(1, env), ReasoningMode::ThinkOn);
}

TEST(EnvLabel, DefaultsKeepEndpointsAndCrossover) {
  EXPECT_EQ(env_label(0), ReasoningMode::ThinkOff);
  EXPECT_EQ(env_label(1), ReasoningMode::ThinkOn);
  EXPECT_EQ(env_label(0.2), ReasoningMode::ThinkOff);
  EXPECT_EQ(env_label(0.3), ReasoningMode::ThinkOn);
}

TEST(EnvLabel, ZeroCostDominance) {
  EnvConfig env;
  env.lambda_cost = 0;
  EXPECT_EQ(env_label(0, env), ReasoningMode::ThinkOff);  // equal accuracy: tie goes off
  for (double d = 0.01; d <= 1.0; d += 0.01) EXPECT_EQ(env_label(d, env), ReasoningMode::ThinkOn) << d;
  EXPECT_THROW(env_label(1.1, env), std::invalid_argument);
}

TEST(Tokens, Model) {
  EXPECT_EQ(token_cost(ReasoningMode::ThinkOff, 0), 400);
  EXPECT_EQ(token_cost(ReasoningMode::ThinkOn, 0), 4000);
  EXPECT_EQ(token_cost(ReasoningMode::ThinkOn, 1), 12000);
  EXPECT_EQ(token_cost(ReasoningMode::ThinkOff, 0.5), 600);
}

TEST(SampleTrajectory, Replay) {
  const PolicyParams pol;
  const auto q = query("q1", 0.4);
  auto r1 = RngStream::derive(7, "traj", 0, 0, q.id, 3);
  auto r2 = RngStream::derive(7, "traj", 0, 0, q.id, 3);
  const auto a = sample_trajectory(pol, q, {}, r1);
  const auto b = sample_trajectory(pol, q, {}, r2);
  EXPECT_EQ(a.mode_chosen, b.mode_chosen);
  EXPECT_EQ(a.answer_reward, b.answer_reward);
  EXPECT_EQ(a.total_reward, b.total_reward);
  EXPECT_EQ(a.policy_features, b.policy_features);
  EXPECT_NEAR(a.p_on, 0.9, 1e-12);
}

TEST(SampleTrajectory, SaturatedPolicy) {
  PolicyParams pol;
  pol.weights.back() = 60;
  for (int i = 0; i < 200; ++i) {
    auto rng = RngStream::derive(1, i);
    EXPECT_EQ(sample_trajectory(pol, query("q", 0.3), {}, rng).mode_chosen, ReasoningMode::ThinkOn);
  }
}

TEST(SampleTrajectory, ThinkOffAtZeroDifficulty) {
  PolicyParams pol;
  pol.weights.back() = -60;
  auto rng = RngStream::derive(1, 2);
  const auto t = sample_trajectory(pol, query("q", 0.0), {}, rng);
  EXPECT_EQ(t.mode_chosen, ReasoningMode::ThinkOff);
  EXPECT_EQ(t.token_count, 400);
  EXPECT_EQ(t.judge_reward, 1);
  EXPECT_EQ(t.total_reward, composite_reward(t.judge_reward, t.answer_reward));
}

TEST(PolicyUpdate, ZeroAdvantagesAndZeroRate) {
  const PolicyParams pol;
  TrainConfig cfg;
  cfg.queries_per_update = 1;
  cfg.trajectories_per_query = 2;
  TrajectoryGroup g{"q", {}};
  for (int i = 0; i < 2; ++i) {
    TrajectoryRecord t;
    t.query_id = "q";
    t.policy_features = features(query("q", 0.5));
    t.p_on = 0.9;
    t.mode_chosen = i ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
    g.members.push_back(t);
  }
  EXPECT_EQ(policy_update(pol, {g}, cfg).weights, pol.weights);
  g.members[0].advantage = -1;
  g.members[1].advantage = 1;
  cfg.learning_rate = 0;
  EXPECT_EQ(policy_update(pol, {g}, cfg).weights, pol.weights);
  cfg.queries_per_update = 2;
  EXPECT_THROW(policy_update(pol, {g}, cfg), std::invalid_argument);
}

TEST(PolicyUpdate, HandSizedStep) {
  // one feature x = 2, w = 0 so p_on = 0.5; trajectory A: on with A = +1,
  // trajectory B: off with A = -1.
  //   grad = (+1)(1 - 0.5)(2) + (-1)(0 - 0.5)(2) = 2
  //   w' = 0 + 0.1 / (1 * 2) * 2 = 0.1
  PolicyParams pol;
  pol.weights = {0.0};
  TrainConfig cfg;
  cfg.queries_per_update = 1;
  cfg.trajectories_per_query = 2;
  cfg.learning_rate = 0.1;
  TrajectoryGroup g{"q", {}};
  TrajectoryRecord a, b;
  a.query_id = b.query_id = "q";
  a.policy_features = b.policy_features = {2.0};
  a.p_on = b.p_on = 0.5;
  a.mode_chosen = ReasoningMode::ThinkOn;
  a.advantage = 1;
  b.mode_chosen = ReasoningMode::ThinkOff;
  b.advantage = -1;
  g.members = {a, b};
  const auto next = policy_update(pol, {g}, cfg);
  ASSERT_EQ(next.weights.size(), 1u);
  EXPECT_NEAR(next.weights[0], 0.1, 1e-15);
}

TEST(RunTraining, DeterministicAndShaped) {
  const auto corpus = default_sim_corpus(3);
  TrainConfig cfg;
  cfg.updates = 12;
  cfg.queries_per_update = 16;
  cfg.trajectories_per_query = 8;
  cfg.seed = 11;
  const auto a = run_training(corpus, {}, cfg);
  const auto b = run_training(corpus, {}, cfg);
  EXPECT_EQ(csv_of(a.metrics), csv_of(b.metrics));
  ASSERT_EQ(a.metrics.rows.size(), 13u);
  for (const auto& r : a.metrics.rows) {
    EXPECT_GE(r.mean_total_reward, 0.0);
    EXPECT_LE(r.mean_total_reward, 1.2);
    EXPECT_GE(r.think_on_rate, 0.0);
    EXPECT_LE(r.think_on_rate, 1.0);
  }
  cfg.seed = 12;
  EXPECT_NE(csv_of(run_training(corpus, {}, cfg).metrics), csv_of(a.metrics));
  const auto head = csv_of(a.metrics).substr(0, csv_of(a.metrics).find('\n'));
  EXPECT_EQ(head, "update,think_on_rate,mean_tokens,mean_total_reward,judge_accuracy");
}

TEST(RunTraining, EmptyCorpus) {
  EXPECT_THROW(run_training({}, {}, TrainConfig{}), EmptyCorpus);
}

TEST(RunTraining, DefaultCorpusShape) {
  const auto c = default_sim_corpus(7);
  ASSERT_EQ(c.size(), 2000u);
  std::array<int, 4> bins{};
  for (const auto& q : c) ++bins[difficulty_bin(q.difficulty)];
  EXPECT_EQ(bins, (std::array<int, 4>{800, 400, 400, 400}));
}

TEST(BanditOracle, DegenerateCorporaFollowDominantArm) {
  const double lambda = EnvConfig{}.lambda_cost;
  ASSERT_GT(expected_reward(false, 0.0, lambda), expected_reward(true, 0.0, lambda));
  ASSERT_GT(expected_reward(true, 1.0, lambda), expected_reward(false, 1.0, lambda));

  TrainConfig cfg;
  cfg.seed = 7;
  const auto easy = run_training(flat_corpus(0.0), {}, cfg);
  const auto hard = run_training(flat_corpus(1.0), {}, cfg);
  EXPECT_LT(easy.metrics.rows.back().think_on_rate, 0.2);
  EXPECT_GT(hard.metrics.rows.back().think_on_rate, 0.8);
}
