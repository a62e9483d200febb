#pragma once

// Cold-start corpus construction: majority-vote mode labels, a small random
// mode override, difficulty-stratified sampling, ratio rebalancing, and
// rendering into the AutoThink document format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "autothink/format.hpp"
#include "autothink/rng.hpp"
#include "autothink/verifier.hpp"

namespace autothink {

enum class QueryDomain { Code, Math, Science, General, MultiTurn, ToolUse };

inline constexpr std::array<QueryDomain, 6> kQueryDomains = {QueryDomain::Code,    QueryDomain::Math,
                                                             QueryDomain::Science, QueryDomain::General,
                                                             QueryDomain::MultiTurn, QueryDomain::ToolUse};

inline std::string_view to_string(QueryDomain d) {
  switch (d) {
    case QueryDomain::Code: return "code";
    case QueryDomain::Math: return "math";
    case QueryDomain::Science: return "science";
    case QueryDomain::General: return "general";
    case QueryDomain::MultiTurn: return "multiturn";
    case QueryDomain::ToolUse: return "tooluse";
  }
  return "?";
}

inline QueryDomain query_domain_from_label(std::string_view s) {
  for (auto d : kQueryDomains)
    if (to_string(d) == s) return d;
  throw std::invalid_argument("unknown query domain: " + std::string(s));
}

inline std::size_t domain_index(QueryDomain d) { return static_cast<std::size_t>(d); }

struct QueryRecord {
  std::string id;
  QueryDomain domain = QueryDomain::General;
  double difficulty = 0.0;
  std::string query;
  std::optional<ReferenceSpec> reference;
  std::optional<ReasoningMode> mode_label;
};

inline void validate(const QueryRecord& q) {
  if (q.id.empty()) throw std::invalid_argument("query record without id");
  if (!(q.difficulty >= 0.0 && q.difficulty <= 1.0))
    throw std::invalid_argument("query " + q.id + ": difficulty outside [0,1]");
}

// Difficulty bins [0,.25), [.25,.5), [.5,.75), [.75,1].
inline std::size_t difficulty_bin(double d) {
  return std::min<std::size_t>(3, static_cast<std::size_t>(std::floor(d * 4.0)));
}

struct GeneratedResponse {
  std::string judge_analysis;
  std::optional<std::string> thinking;
  std::string answer;
};

class BackendFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Source of mode votes and mode-conditioned responses. Implementations
// must return thinking iff the requested mode is ThinkOn.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  virtual ReasoningMode vote(const QueryRecord& q, int vote_index) = 0;
  virtual GeneratedResponse respond(const QueryRecord& q, ReasoningMode mode) = 0;
};

// Deterministic rule-based backend. Votes ThinkOn with probability equal
// to the query difficulty; text is derived from (seed, id, difficulty).
class SyntheticBackend final : public GeneratorBackend {
 public:
  explicit SyntheticBackend(std::uint64_t seed = 0) : seed_(seed) {}

  ReasoningMode vote(const QueryRecord& q, int vote_index) override {
    auto rng = RngStream::derive(seed_, "vote", q.id, vote_index);
    return rng.bernoulli(q.difficulty) ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
  }

  GeneratedResponse respond(const QueryRecord& q, ReasoningMode mode) override {
    auto rng = RngStream::derive(seed_, "respond", q.id, static_cast<int>(mode));
    std::ostringstream judge;
    judge.precision(2);
    judge << std::fixed << "The query is a " << to_string(q.domain) << " task with difficulty " << q.difficulty
          << ". "
          << (mode == ReasoningMode::ThinkOn ? "It needs multi-step reasoning before answering."
                                             : "A direct answer is sufficient.");
    GeneratedResponse out;
    out.judge_analysis = judge.str();
    if (mode == ReasoningMode::ThinkOn) out.thinking = words(rng, 20 + static_cast<int>(80 * q.difficulty));
    out.answer = words(rng, 8 + static_cast<int>(12 * q.difficulty));
    return out;
  }

 private:
  static std::string words(RngStream& rng, int n) {
    static constexpr std::array<std::string_view, 16> vocab = {
        "first", "consider", "the", "constraint", "so", "we", "derive", "value",
        "check", "case", "result", "follows", "then", "step", "term", "therefore"};
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += vocab[rng.below(vocab.size())];
    }
    return s;
  }

  std::uint64_t seed_;
};

// Canned responses keyed by (id, mode) plus optional recorded votes, read
// from JSONL. Lines are either
//   {"id": ..., "votes": ["on", "off", ...]}
//   {"id": ..., "mode": "on"|"off", "judge_analysis": ..., "thinking": ...|null, "answer": ...}
class ReplayBackend final : public GeneratorBackend {
 public:
  explicit ReplayBackend(std::istream& in) { load(in); }

  static ReplayBackend from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw BackendFailure("cannot open replay file " + path);
    return ReplayBackend(f);
  }

  ReasoningMode vote(const QueryRecord& q, int vote_index) override {
    if (auto it = votes_.find(q.id); it != votes_.end() && !it->second.empty())
      return it->second[static_cast<std::size_t>(vote_index) % it->second.size()];
    const bool on = responses_.count({q.id, ReasoningMode::ThinkOn}) > 0;
    const bool off = responses_.count({q.id, ReasoningMode::ThinkOff}) > 0;
    if (on != off) return on ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
    throw BackendFailure("replay: no votes recorded for " + q.id);
  }

  GeneratedResponse respond(const QueryRecord& q, ReasoningMode mode) override {
    auto it = responses_.find({q.id, mode});
    if (it == responses_.end())
      throw BackendFailure("replay: no " + std::string(mode_label(mode)) + " response for " + q.id);
    return it->second;
  }

 private:
  void load(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw BackendFailure("replay line " + std::to_string(lineno) + ": " + e.what());
      }
      const auto id = j.at("id").get<std::string>();
      if (j.contains("votes")) {
        for (const auto& v : j["votes"]) votes_[id].push_back(mode_from_label(v.get<std::string>()));
        continue;
      }
      GeneratedResponse r;
      r.judge_analysis = j.at("judge_analysis").get<std::string>();
      if (j.contains("thinking") && !j["thinking"].is_null()) r.thinking = j["thinking"].get<std::string>();
      r.answer = j.at("answer").get<std::string>();
      responses_[{id, mode_from_label(j.at("mode").get<std::string>())}] = std::move(r);
    }
  }

  std::map<std::string, std::vector<ReasoningMode>> votes_;
  std::map<std::pair<std::string, ReasoningMode>, GeneratedResponse> responses_;
};

struct MixPolicy {
  double think_on_fraction = 0.348;
  double override_rate = 0.01;
  std::array<double, 4> difficulty_bin_weights = {0.25, 0.25, 0.25, 0.25};
  double ratio_tolerance = 0.01;
  int votes_per_query = 5;

  void validate() const {
    if (!(think_on_fraction >= 0 && think_on_fraction <= 1)) throw std::invalid_argument("think_on_fraction outside [0,1]");
    if (!(override_rate >= 0 && override_rate <= 1)) throw std::invalid_argument("override_rate outside [0,1]");
    double sum = 0;
    for (double w : difficulty_bin_weights) {
      if (!(w >= 0)) throw std::invalid_argument("difficulty bin weights must be non-negative");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("difficulty bin weights must sum to 1");
    if (!(ratio_tolerance >= 0)) throw std::invalid_argument("ratio_tolerance must be non-negative");
    if (votes_per_query < 1) throw std::invalid_argument("votes_per_query must be >= 1");
  }
};

struct DatasetExample {
  std::string query_id;
  std::string rendered_text;
  ReasoningMode mode = ReasoningMode::ThinkOff;
  bool overridden = false;
  QueryDomain domain = QueryDomain::General;
  double difficulty = 0.0;
};

struct CorpusStats {
  std::size_t n = 0;
  double think_on_fraction = 0.0;
  double think_on_fraction_pre_override = 0.0;
  std::size_t override_count = 0;
  std::size_t rebalanced_count = 0;
  std::map<std::string, std::size_t> per_domain;
  std::array<std::size_t, 4> per_bin{};
};

class EmptyVotes : public std::invalid_argument {
 public:
  EmptyVotes() : std::invalid_argument("majority_vote: no votes") {}
};

class RenderInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyBinUnrecoverable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict majority wins; an exact tie goes to ThinkOn.
inline ReasoningMode majority_vote(std::span<const ReasoningMode> votes) {
  if (votes.empty()) throw EmptyVotes();
  const auto on = std::count(votes.begin(), votes.end(), ReasoningMode::ThinkOn);
  const auto off = static_cast<std::ptrdiff_t>(votes.size()) - on;
  return on >= off ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
}

/// With probability `rate` the mode is redrawn uniformly and flagged
/// (flagged even when the redraw equals the input).
inline std::pair<ReasoningMode, bool> apply_random_override(ReasoningMode mode, double rate, RngStream& rng) {
  if (!(rate >= 0 && rate <= 1)) throw std::invalid_argument("override rate outside [0,1]");
  if (!(rng.uniform() < rate)) return {mode, false};
  return {rng.bernoulli(0.5) ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff, true};
}

inline DatasetExample assemble_example(const QueryRecord& q, ReasoningMode mode, GeneratorBackend& backend,
                                       bool overridden = false) {
  GeneratedResponse resp;
  try {
    resp = backend.respond(q, mode);
  } catch (const BackendFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendFailure("backend failed for " + q.id + ": " + e.what());
  }
  if (resp.thinking.has_value() != (mode == ReasoningMode::ThinkOn))
    throw RenderInvalid("backend response for " + q.id + " violates the mode/thinking contract");

  StructuredResponse sr{std::move(resp.judge_analysis), mode, std::move(resp.thinking), std::move(resp.answer)};
  if (!is_valid(sr)) throw RenderInvalid("backend response for " + q.id + " contains format tags");
  std::string text = render_response(sr);
  try {
    if (parse_response(text, true) != sr) throw RenderInvalid("re-parse mismatch for " + q.id);
  } catch (const ParseError& e) {
    throw RenderInvalid("rendered document for " + q.id + " does not parse: " + e.what());
  }
  return {q.id, std::move(text), mode, overridden, q.domain, q.difficulty};
}

/// Largest-remainder apportionment of n over the weights; ties in the
/// remainder go to the lower bin.
inline std::array<std::size_t, 4> apportion(std::size_t n, const std::array<double, 4>& weights) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> rem{};
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    const double quota = weights[b] * static_cast<double>(n);
    counts[b] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[b] = quota - static_cast<double>(counts[b]);
    assigned += counts[b];
  }
  std::array<std::size_t, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 4) {
    if (weights[order[k]] <= 0) continue;
    ++counts[order[k]];
    ++assigned;
  }
  while (assigned > n) {  // only reachable through the floor epsilon
    for (std::size_t b = 4; b-- > 0 && assigned > n;)
      if (counts[b] > 0) --counts[b], --assigned;
  }
  return counts;
}

/// Samples n queries with exact per-bin counts from `apportion`. Within a
/// bin, sampling is uniform without replacement, falling back to
/// with-replacement draws once the bin is exhausted.
inline std::vector<QueryRecord> stratified_difficulty_sample(const std::vector<QueryRecord>& pool, std::size_t n,
                                                             const std::array<double, 4>& weights, RngStream& rng) {
  std::array<std::vector<std::size_t>, 4> bins;
  for (std::size_t i = 0; i < pool.size(); ++i) bins[difficulty_bin(pool[i].difficulty)].push_back(i);
  for (std::size_t b = 0; b < 4; ++b)
    if (weights[b] > 0 && bins[b].empty())
      throw EmptyBinUnrecoverable("difficulty bin " + std::to_string(b) + " has positive weight but no queries");

  const auto counts = apportion(n, weights);
  std::vector<QueryRecord> out;
  out.reserve(n);
  for (std::size_t b = 0; b < 4; ++b) {
    auto& idx = bins[b];
    const std::size_t take = counts[b];
    const std::size_t distinct = std::min(take, idx.size());
    for (std::size_t k = 0; k < distinct; ++k) {
      const std::size_t j = k + rng.below(idx.size() - k);
      std::swap(idx[k], idx[j]);
      out.push_back(pool[idx[k]]);
    }
    for (std::size_t k = distinct; k < take; ++k) out.push_back(pool[idx[rng.below(idx.size())]]);
  }
  return out;
}

/// Synthetic query pool: domains round-robin over the six categories,
/// difficulty uniform in [0,1].
inline std::vector<QueryRecord> make_synthetic_pool(std::size_t n, std::uint64_t seed) {
  std::vector<QueryRecord> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%07zu", i);
    auto rng = RngStream::derive(seed, "pool", id);
    QueryRecord q;
    q.id = id;
    q.domain = kQueryDomains[i % kQueryDomains.size()];
    q.difficulty = rng.uniform();
    q.query = "Synthetic " + std::string(to_string(q.domain)) + " query " + q.id;
    pool.push_back(std::move(q));
  }
  return pool;
}

struct CorpusResult {
  std::vector<DatasetExample> examples;  // sorted by query id
  CorpusStats stats;
};

/// Builds a cold-start corpus.
///
/// Each sampled query gets K backend votes and a majority label (a
/// mode_label in the pool overrides voting and is never rebalanced). To hit
/// the target think-on fraction, labels of the closest calls are flipped:
/// vote margin 1 first, then wider margins, least difficult first when
/// flipping to off and most difficult first when flipping to on. The random
/// override is applied after rebalancing and before generation.
inline CorpusResult build_corpus(const std::vector<QueryRecord>& pool, const MixPolicy& policy,
                                 GeneratorBackend& backend, std::size_t n, std::uint64_t seed) {
  policy.validate();
  for (const auto& q : pool) validate(q);
  auto strata_rng = RngStream::derive(seed, "strata");
  std::vector<QueryRecord> sampled = stratified_difficulty_sample(pool, n, policy.difficulty_bin_weights, strata_rng);

  // Repeated draws of the same query get distinct ids.
  std::map<std::string, int> seen;
  for (auto& q : sampled) {
    const int k = seen[q.id]++;
    if (k > 0) q.id += "#" + std::to_string(k + 1);
  }

  struct Slot {
    ReasoningMode mode;
    int margin;  // |on - off| votes; -1 for fixed labels
  };
  std::vector<Slot> slots;
  slots.reserve(sampled.size());
  std::size_t on_count = 0;
  for (const auto& q : sampled) {
    Slot s{};
    if (q.mode_label) {
      s = {*q.mode_label, -1};
    } else {
      std::vector<ReasoningMode> votes;
      votes.reserve(static_cast<std::size_t>(policy.votes_per_query));
      for (int v = 0; v < policy.votes_per_query; ++v) votes.push_back(backend.vote(q, v));
      const auto on = std::count(votes.begin(), votes.end(), ReasoningMode::ThinkOn);
      s = {majority_vote(votes), static_cast<int>(std::abs(2 * on - policy.votes_per_query))};
    }
    if (s.mode == ReasoningMode::ThinkOn) ++on_count;
    slots.push_back(s);
  }

  const std::size_t target_on =
      static_cast<std::size_t>(std::llround(policy.think_on_fraction * static_cast<double>(sampled.size())));
  std::size_t rebalanced = 0;
  if (on_count != target_on) {
    const bool to_off = on_count > target_on;
    const ReasoningMode from = to_off ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].margin >= 0 && slots[i].mode == from) cand.push_back(i);
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      if (slots[a].margin != slots[b].margin) return slots[a].margin < slots[b].margin;
      if (sampled[a].difficulty != sampled[b].difficulty)
        return to_off ? sampled[a].difficulty < sampled[b].difficulty : sampled[a].difficulty > sampled[b].difficulty;
      return sampled[a].id < sampled[b].id;
    });
    const std::size_t need = to_off ? on_count - target_on : target_on - on_count;
    for (std::size_t k = 0; k < need && k < cand.size(); ++k) {
      slots[cand[k]].mode = to_off ? ReasoningMode::ThinkOff : ReasoningMode::ThinkOn;
      ++rebalanced;
    }
    on_count = to_off ? on_count - rebalanced : on_count + rebalanced;
  }

  CorpusResult result;
  auto& stats = result.stats;
  stats.n = sampled.size();
  stats.rebalanced_count = rebalanced;
  stats.think_on_fraction_pre_override =
      sampled.empty() ? 0.0 : static_cast<double>(on_count) / static_cast<double>(sampled.size());
  if (!sampled.empty() && std::fabs(stats.think_on_fraction_pre_override - policy.think_on_fraction) >
                              policy.ratio_tolerance + 1e-12)
    throw std::runtime_error("build_corpus: cannot reach think-on fraction " +
                             std::to_string(policy.think_on_fraction) + " (fixed labels dominate)");

  result.examples.reserve(sampled.size());
  std::size_t final_on = 0;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    auto rng = RngStream::derive(seed, "override", sampled[i].id);
    const auto [mode, flagged] = apply_random_override(slots[i].mode, policy.override_rate, rng);
    result.examples.push_back(assemble_example(sampled[i], mode, backend, flagged));
    if (flagged) ++stats.override_count;
    if (mode == ReasoningMode::ThinkOn) ++final_on;
    ++stats.per_domain[std::string(to_string(sampled[i].domain))];
    ++stats.per_bin[difficulty_bin(sampled[i].difficulty)];
  }
  stats.think_on_fraction = sampled.empty() ? 0.0 : static_cast<double>(final_on) / static_cast<double>(sampled.size());
  std::sort(result.examples.begin(), result.examples.end(),
            [](const DatasetExample& a, const DatasetExample& b) { return a.query_id < b.query_id; });
  return result;
}

// ---- JSON / JSONL ----------------------------------------------------------

inline QueryRecord query_from_json(const nlohmann::json& j) {
  QueryRecord q;
  q.id = j.at("id").get<std::string>();
  q.domain = query_domain_from_label(j.at("domain").get<std::string>());
  q.difficulty = j.at("difficulty").get<double>();
  q.query = j.value("query", std::string());
  if (j.contains("reference") && !j["reference"].is_null()) q.reference = reference_from_json(j["reference"]);
  if (j.contains("mode_label") && !j["mode_label"].is_null())
    q.mode_label = mode_from_label(j["mode_label"].get<std::string>());
  validate(q);
  return q;
}

inline nlohmann::ordered_json query_to_json(const QueryRecord& q) {
  nlohmann::ordered_json j;
  j["id"] = q.id;
  j["domain"] = to_string(q.domain);
  j["difficulty"] = q.difficulty;
  j["query"] = q.query;
  j["reference"] = q.reference ? nlohmann::ordered_json(reference_to_json(*q.reference)) : nlohmann::ordered_json();
  j["mode_label"] = q.mode_label ? nlohmann::ordered_json(mode_label(*q.mode_label)) : nlohmann::ordered_json();
  return j;
}

inline std::vector<QueryRecord> read_pool_jsonl(std::istream& in) {
  std::vector<QueryRecord> pool;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      pool.push_back(query_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("pool line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pool;
}

inline std::vector<QueryRecord> read_pool_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open pool file " + path);
  return read_pool_jsonl(f);
}

inline void write_pool_jsonl(std::ostream& out, const std::vector<QueryRecord>& pool) {
  for (const auto& q : pool) out << query_to_json(q).dump() << '\n';
}

inline nlohmann::ordered_json example_to_json(const DatasetExample& e) {
  nlohmann::ordered_json j;
  j["id"] = e.query_id;
  j["mode"] = mode_label(e.mode);
  j["overridden"] = e.overridden;
  j["domain"] = to_string(e.domain);
  j["difficulty"] = e.difficulty;
  j["text"] = e.rendered_text;
  return j;
}

inline void write_corpus_jsonl(std::ostream& out, const std::vector<DatasetExample>& examples) {
  for (const auto& e : examples) out << example_to_json(e).dump() << '\n';
}

inline nlohmann::ordered_json stats_to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["think_on_fraction"] = s.think_on_fraction;
  j["think_on_fraction_pre_override"] = s.think_on_fraction_pre_override;
  j["override_count"] = s.override_count;
  j["rebalanced_count"] = s.rebalanced_count;
  j["per_domain"] = s.per_domain;
  j["per_bin"] = s.per_bin;
  return j;
}

}  // namespace autothink
