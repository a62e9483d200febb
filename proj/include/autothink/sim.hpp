#pragma once

// Toy Step-SRPO simulator. A logistic gate decides ThinkOn/ThinkOff per
// query; the environment turns the decision into a correctness draw and a
// token cost; the gate is trained with REINFORCE on group z-scored
// composite rewards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "autothink/coldstart.hpp"
#include "autothink/format.hpp"
#include "autothink/reward.hpp"
#include "autothink/rng.hpp"

namespace autothink::sim {

struct EnvConfig {
  double a_on = 0.95;
  double b_on = 0.35;
  double a_off = 0.95;
  double b_off = 0.90;
  // Token cost in the utility that defines the correct mode label. Puts the
  // on/off crossover near d = 0.27.
  double lambda_cost = 2.6e-5;

  void validate() const {
    for (double v : {a_on, b_on, a_off, b_off, lambda_cost})
      if (!std::isfinite(v)) throw std::invalid_argument("EnvConfig values must be finite");
    if (lambda_cost < 0) throw std::invalid_argument("lambda_cost must be >= 0");
  }
};

inline constexpr std::size_t kNumFeatures = 8;  // 6 domains, difficulty, bias

struct PolicyParams {
  std::vector<double> weights = initial_weights();

  static std::vector<double> initial_weights() {
    std::vector<double> w(kNumFeatures, 0.0);
    w.back() = std::log(9.0);  // P(on) = 0.9 before training
    return w;
  }
};

struct TrainConfig {
  int queries_per_update = 64;      // G
  int trajectories_per_query = 32;  // N
  double learning_rate = 0.5;
  int updates = 300;
  std::uint64_t seed = 0;

  void validate() const {
    if (queries_per_update < 1) throw std::invalid_argument("queries_per_update must be >= 1");
    if (trajectories_per_query < 1) throw std::invalid_argument("trajectories_per_query must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be >= 0");
    if (updates < 0) throw std::invalid_argument("updates must be >= 0");
  }
};

// Statistics of the G*N trajectories sampled at one update. Row k is taken
// with the policy after k updates.
struct MetricsRow {
  int update = 0;
  double think_on_rate = 0.0;
  double mean_tokens = 0.0;
  double mean_total_reward = 0.0;
  double judge_accuracy = 0.0;
  // Restricted to queries with difficulty >= 0.75; NaN when none sampled.
  double hard_think_on_rate = std::numeric_limits<double>::quiet_NaN();
  std::size_t hard_samples = 0;
};

struct SimMetrics {
  std::vector<MetricsRow> rows;
};

struct TrainingResult {
  SimMetrics metrics;
  PolicyParams final_policy;
};

class EmptyCorpus : public std::invalid_argument {
 public:
  EmptyCorpus() : std::invalid_argument("simulator corpus is empty") {}
};

inline constexpr double kHardDifficulty = 0.75;

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline double p_correct(ReasoningMode m, double d, const EnvConfig& env) {
  return m == ReasoningMode::ThinkOn ? clamp01(env.a_on - env.b_on * d) : clamp01(env.a_off - env.b_off * d);
}

inline long long token_cost(ReasoningMode m, double d) {
  const double t = m == ReasoningMode::ThinkOn ? 8000.0 * (0.5 + d) : 400.0 + 400.0 * d;
  return std::max(0LL, std::llround(t));
}

inline double mode_utility(ReasoningMode m, double d, const EnvConfig& env) {
  return p_correct(m, d, env) - env.lambda_cost * static_cast<double>(token_cost(m, d));
}

inline ReasoningMode env_label(double d, const EnvConfig& env = {}) {
  if (!(d >= 0 && d <= 1)) throw std::invalid_argument("difficulty outside [0,1]");
  return mode_utility(ReasoningMode::ThinkOn, d, env) > mode_utility(ReasoningMode::ThinkOff, d, env)
             ? ReasoningMode::ThinkOn
             : ReasoningMode::ThinkOff;
}

inline std::vector<double> features(const QueryRecord& q) {
  std::vector<double> x(kNumFeatures, 0.0);
  x[domain_index(q.domain)] = 1.0;
  x[6] = q.difficulty;
  x[7] = 1.0;
  return x;
}

inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double p_think_on(const PolicyParams& policy, const std::vector<double>& x) {
  if (policy.weights.size() != x.size()) throw std::invalid_argument("policy/feature size mismatch");
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += policy.weights[i] * x[i];
  return logistic(z);
}

/// One rollout. Draw order on the stream: mode, then answer correctness.
inline TrajectoryRecord sample_trajectory(const PolicyParams& policy, const QueryRecord& q, const EnvConfig& env,
                                          RngStream& rng, const RewardConfig& reward_cfg = {}) {
  TrajectoryRecord t;
  t.query_id = q.id;
  t.policy_features = features(q);
  t.p_on = p_think_on(policy, t.policy_features);
  t.mode_chosen = rng.uniform() < t.p_on ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
  t.answer_reward = rng.bernoulli(p_correct(t.mode_chosen, q.difficulty, env)) ? 1 : 0;
  t.judge_reward = judge_reward(t.mode_chosen, env_label(q.difficulty, env));
  t.token_count = token_cost(t.mode_chosen, q.difficulty);
  t.total_reward = composite_reward(t.judge_reward, t.answer_reward, reward_cfg);
  return t;
}

/// w += lr / (G*N) * sum_i A_i * (1[on] - p_on) * x_i, summed in group
/// order. Advantages must already be assigned.
inline PolicyParams policy_update(const PolicyParams& policy, const std::vector<TrajectoryGroup>& groups,
                                  const TrainConfig& cfg) {
  if (groups.size() != static_cast<std::size_t>(cfg.queries_per_update))
    throw std::invalid_argument("policy_update: expected " + std::to_string(cfg.queries_per_update) + " groups");
  std::vector<double> grad(policy.weights.size(), 0.0);
  for (const auto& g : groups) {
    if (g.members.size() != static_cast<std::size_t>(cfg.trajectories_per_query))
      throw std::invalid_argument("policy_update: group " + g.query_id + " has the wrong trajectory count");
    for (const auto& t : g.members) {
      if (t.policy_features.size() != grad.size()) throw std::invalid_argument("policy_update: feature size mismatch");
      const double factor = t.advantage * ((t.mode_chosen == ReasoningMode::ThinkOn ? 1.0 : 0.0) - t.p_on);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += factor * t.policy_features[k];
    }
  }
  const double scale =
      cfg.learning_rate / (static_cast<double>(cfg.queries_per_update) * static_cast<double>(cfg.trajectories_per_query));
  PolicyParams next = policy;
  for (std::size_t k = 0; k < grad.size(); ++k) next.weights[k] += scale * grad[k];
  return next;
}

inline MetricsRow summarize(int update, const std::vector<TrajectoryGroup>& groups, const std::vector<double>& difficulty) {
  MetricsRow row;
  row.update = update;
  double n = 0, on = 0, tokens = 0, reward = 0, judge = 0, hard_on = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const bool hard = difficulty[gi] >= kHardDifficulty;
    for (const auto& t : groups[gi].members) {
      const bool is_on = t.mode_chosen == ReasoningMode::ThinkOn;
      n += 1;
      on += is_on;
      tokens += static_cast<double>(t.token_count);
      reward += t.total_reward;
      judge += t.judge_reward;
      if (hard) {
        ++row.hard_samples;
        hard_on += is_on;
      }
    }
  }
  row.think_on_rate = on / n;
  row.mean_tokens = tokens / n;
  row.mean_total_reward = reward / n;
  row.judge_accuracy = judge / n;
  if (row.hard_samples > 0) row.hard_think_on_rate = hard_on / static_cast<double>(row.hard_samples);
  return row;
}

/// Runs `updates` policy updates and records updates + 1 metric rows; the
/// last row measures the final policy and is not followed by an update.
/// Streams: batch choice from (seed, "batch", update); each trajectory from
/// (seed, "traj", update, slot, query id, index).
inline TrainingResult run_training(const std::vector<QueryRecord>& corpus, const EnvConfig& env,
                                   const TrainConfig& train_cfg, const RewardConfig& reward_cfg = {},
                                   PolicyParams policy = {}) {
  if (corpus.empty()) throw EmptyCorpus();
  env.validate();
  train_cfg.validate();
  reward_cfg.validate();
  for (const auto& q : corpus)
    if (!(q.difficulty >= 0 && q.difficulty <= 1)) throw std::invalid_argument("query " + q.id + ": difficulty outside [0,1]");

  const auto G = static_cast<std::size_t>(train_cfg.queries_per_update);
  const auto N = static_cast<std::size_t>(train_cfg.trajectories_per_query);
  TrainingResult result;
  result.metrics.rows.reserve(static_cast<std::size_t>(train_cfg.updates) + 1);

  for (int u = 0; u <= train_cfg.updates; ++u) {
    auto batch_rng = RngStream::derive(train_cfg.seed, "batch", u);
    std::vector<TrajectoryGroup> groups(G);
    std::vector<double> difficulty(G);
    for (std::size_t slot = 0; slot < G; ++slot) {
      const auto& q = corpus[batch_rng.below(corpus.size())];
      groups[slot].query_id = q.id;
      difficulty[slot] = q.difficulty;
      groups[slot].members.reserve(N);
      for (std::size_t i = 0; i < N; ++i) {
        auto rng = RngStream::derive(train_cfg.seed, "traj", u, slot, q.id, i);
        groups[slot].members.push_back(sample_trajectory(policy, q, env, rng, reward_cfg));
      }
      assign_advantages(groups[slot], reward_cfg);
    }
    result.metrics.rows.push_back(summarize(u, groups, difficulty));
    if (u < train_cfg.updates) policy = policy_update(policy, groups, train_cfg);
  }
  result.final_policy = std::move(policy);
  return result;
}

inline void write_metrics_csv(std::ostream& out, const SimMetrics& m) {
  out << "update,think_on_rate,mean_tokens,mean_total_reward,judge_accuracy\n";
  char buf[160];
  for (const auto& r : m.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.3f,%.6f,%.6f\n", r.update, r.think_on_rate, r.mean_tokens,
                  r.mean_total_reward, r.judge_accuracy);
    out << buf;
  }
}

/// Mixed-difficulty corpus: 2000 queries drawn from a 4000-query synthetic
/// pool with difficulty bins weighted 0.4 / 0.2 / 0.2 / 0.2.
inline std::vector<QueryRecord> default_sim_corpus(std::uint64_t seed) {
  const auto pool = make_synthetic_pool(4000, seed);
  auto rng = RngStream::derive(seed, "sim-corpus");
  return stratified_difficulty_sample(pool, 2000, {0.4, 0.2, 0.2, 0.2}, rng);
}

}  // namespace autothink::sim
