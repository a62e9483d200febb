#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autothink/format.hpp"

namespace autothink {

// Two-level reward: a judge term for picking the right reasoning mode and
// an answer term that the judge outcome modulates,
//
//   R = w_j * R_j + R_a * (kappa + (1 - kappa) * R_j)
//
// so a correct answer under a wrong gate keeps only a kappa share.
struct RewardConfig {
  double judge_weight = 0.2;      // w_j >= 0
  double modulation_floor = 0.5;  // kappa in [0, 1]
  double std_floor = 1e-6;        // eps > 0

  void validate() const {
    if (!(judge_weight >= 0)) throw std::invalid_argument("judge_weight must be >= 0");
    if (!(modulation_floor >= 0 && modulation_floor <= 1)) throw std::invalid_argument("modulation_floor must be in [0,1]");
    if (!(std_floor > 0)) throw std::invalid_argument("std_floor must be > 0");
  }
};

struct TrajectoryRecord {
  std::string query_id;
  ReasoningMode mode_chosen = ReasoningMode::ThinkOff;
  int judge_reward = 0;
  int answer_reward = 0;
  double total_reward = 0.0;
  long long token_count = 0;
  double advantage = 0.0;
  std::vector<double> policy_features;
  // P(ThinkOn | features) at sampling time; the REINFORCE factor
  // d/dw log pi(mode) is (1[on] - p_on) * features.
  double p_on = 0.0;
};

struct TrajectoryGroup {
  std::string query_id;
  std::vector<TrajectoryRecord> members;
};

inline int judge_reward(ReasoningMode chosen, ReasoningMode label) { return chosen == label ? 1 : 0; }

inline double composite_reward(int judge, int answer, const RewardConfig& cfg = {}) {
  const double rj = judge, ra = answer;
  return cfg.judge_weight * rj + ra * (cfg.modulation_floor + (1.0 - cfg.modulation_floor) * rj);
}

/// Group-relative z-scores with population statistics:
///   A_i = (R_i - mean) / max(std, eps), and all zeros when std < eps.
inline std::vector<double> group_advantages(std::span<const double> rewards, const RewardConfig& cfg = {}) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages: empty group");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < cfg.std_floor) return adv;
  const double denom = std::max(sd, cfg.std_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

inline std::vector<double> group_advantages(const TrajectoryGroup& group, const RewardConfig& cfg = {}) {
  std::vector<double> r;
  r.reserve(group.members.size());
  for (const auto& m : group.members) {
    if (m.query_id != group.query_id) throw std::invalid_argument("trajectory group mixes query ids");
    r.push_back(m.total_reward);
  }
  return group_advantages(std::span<const double>(r), cfg);
}

// Fills advantage on every member in place.
inline void assign_advantages(TrajectoryGroup& group, const RewardConfig& cfg = {}) {
  const auto adv = group_advantages(group, cfg);
  for (std::size_t i = 0; i < adv.size(); ++i) group.members[i].advantage = adv[i];
}

}  // namespace autothink
