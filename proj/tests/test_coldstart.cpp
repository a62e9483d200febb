#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "autothink/coldstart.hpp"
#include "autothink/remote_backend.hpp"

using namespace autothink;

namespace {

constexpr auto On = ReasoningMode::ThinkOn;
constexpr auto Off = ReasoningMode::ThinkOff;

QueryRecord make_query(std::string id, double d, QueryDomain dom = QueryDomain::Math) {
  QueryRecord q;
  q.id = std::move(id);
  q.domain = dom;
  q.difficulty = d;
  q.query = "what is " + q.id;
  return q;
}

class BrokenBackend final : public GeneratorBackend {
 public:
  ReasoningMode vote(const QueryRecord&, int) override { return Off; }
  GeneratedResponse respond(const QueryRecord&, ReasoningMode) override {
    return {"judge", std::string("thinking that should not be here"), "answer"};
  }
};

std::string corpus_bytes(const CorpusResult& r) {
  std::ostringstream os;
  write_corpus_jsonl(os, r.examples);
  os << stats_to_json(r.stats).dump();
  return os.str();
}

}  // namespace

TEST(MajorityVote, Cases) {
  const std::vector<ReasoningMode> a{On, On, Off}, b{Off, Off, Off}, c{On, Off}, none;
  EXPECT_EQ(majority_vote(a), On);
  EXPECT_EQ(majority_vote(b), Off);
  EXPECT_EQ(majority_vote(c), On);
  EXPECT_THROW(majority_vote(none), EmptyVotes);
}

TEST(Override, ZeroRate) {
  for (int i = 0; i < 1000; ++i) {
    auto rng = RngStream::derive(1, "override", i);
    const auto [m, flagged] = apply_random_override(Off, 0.0, rng);
    EXPECT_EQ(m, Off);
    EXPECT_FALSE(flagged);
  }
}

TEST(Override, FullRateReplays) {
  std::vector<ReasoningMode> first, second;
  for (int pass = 0; pass < 2; ++pass) {
    auto& out = pass == 0 ? first : second;
    for (int i = 0; i < 200; ++i) {
      auto rng = RngStream::derive(99, "override", "q" + std::to_string(i));
      const auto [m, flagged] = apply_random_override(On, 1.0, rng);
      EXPECT_TRUE(flagged);
      out.push_back(m);
    }
  }
  EXPECT_EQ(first, second);
  const auto on = std::count(first.begin(), first.end(), On);
  EXPECT_GT(on, 60);
  EXPECT_LT(on, 140);
}

TEST(Override, RejectsBadRate) {
  RngStream rng(1);
  EXPECT_THROW(apply_random_override(On, 1.5, rng), std::invalid_argument);
}

TEST(Assemble, ThinkOffHasNoThinkBlock) {
  SyntheticBackend be(3);
  const auto ex = assemble_example(make_query("q1", 0.2), Off, be, false);
  EXPECT_EQ(ex.rendered_text.find("<think>"), std::string::npos);
  const auto sr = parse_response(ex.rendered_text);
  EXPECT_EQ(sr.mode, Off);
}

TEST(Assemble, ThinkOnHasThinking) {
  SyntheticBackend be(3);
  const auto ex = assemble_example(make_query("q1", 0.8), On, be, false);
  const auto sr = parse_response(ex.rendered_text);
  EXPECT_EQ(sr.mode, On);
  ASSERT_TRUE(sr.thinking.has_value());
  EXPECT_FALSE(sr.thinking->empty());
}

TEST(Assemble, ContractViolation) {
  BrokenBackend be;
  EXPECT_THROW(assemble_example(make_query("q1", 0.5), Off, be, false), RenderInvalid);
}

TEST(Apportion, Examples) {
  EXPECT_EQ(apportion(100, {0.1, 0.2, 0.3, 0.4}), (std::array<std::size_t, 4>{10, 20, 30, 40}));
  EXPECT_EQ(apportion(10, {0.33, 0.33, 0.34, 0}), (std::array<std::size_t, 4>{3, 3, 4, 0}));
  EXPECT_EQ(apportion(10, {0.3, 0.3, 0.4, 0}), (std::array<std::size_t, 4>{3, 3, 4, 0}));
  EXPECT_EQ(apportion(3, {0.25, 0.25, 0.25, 0.25}), (std::array<std::size_t, 4>{1, 1, 1, 0}));
}

TEST(Stratified, ExactCountsAndOnlyWeightedBins) {
  const auto pool = make_synthetic_pool(400, 5);
  RngStream rng(5);
  const auto s = stratified_difficulty_sample(pool, 100, {0.1, 0.2, 0.3, 0.4}, rng);
  std::array<int, 4> counts{};
  for (const auto& q : s) ++counts[difficulty_bin(q.difficulty)];
  EXPECT_EQ(counts, (std::array<int, 4>{10, 20, 30, 40}));

  RngStream rng2(6);
  for (const auto& q : stratified_difficulty_sample(pool, 50, {1, 0, 0, 0}, rng2)) EXPECT_LT(q.difficulty, 0.25);
}

TEST(Stratified, FallsBackToReplacement) {
  std::vector<QueryRecord> pool{make_query("a", 0.1), make_query("b", 0.9)};
  RngStream rng(1);
  const auto s = stratified_difficulty_sample(pool, 10, {0.5, 0, 0, 0.5}, rng);
  EXPECT_EQ(s.size(), 10u);
}

TEST(Stratified, EmptyBin) {
  std::vector<QueryRecord> pool{make_query("a", 0.1)};
  RngStream rng(1);
  EXPECT_THROW(stratified_difficulty_sample(pool, 4, {0.5, 0.5, 0, 0}, rng), EmptyBinUnrecoverable);
}

TEST(BuildCorpus, HitsTargetFraction) {
  const auto pool = make_synthetic_pool(3000, 17);
  SyntheticBackend be(17);
  for (double target : {0.348, 2.0 / 3.0}) {
    MixPolicy mix;
    mix.think_on_fraction = target;
    const auto r = build_corpus(pool, mix, be, 1000, 17);
    EXPECT_NEAR(r.stats.think_on_fraction_pre_override, target, 0.01);
    EXPECT_NEAR(r.stats.think_on_fraction, target, 0.01);
    EXPECT_EQ(r.examples.size(), 1000u);
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < r.examples.size(); ++i) {
      const auto& e = r.examples[i];
      EXPECT_EQ(parse_response(e.rendered_text).mode, e.mode);
      if (i) {
        EXPECT_LT(r.examples[i - 1].query_id, e.query_id);
      }
      flagged += e.overridden;
    }
    EXPECT_EQ(flagged, r.stats.override_count);
  }
}

TEST(BuildCorpus, Deterministic) {
  const auto pool = make_synthetic_pool(500, 2);
  SyntheticBackend be(2);
  const auto a = corpus_bytes(build_corpus(pool, MixPolicy{}, be, 300, 8));
  const auto b = corpus_bytes(build_corpus(pool, MixPolicy{}, be, 300, 8));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, corpus_bytes(build_corpus(pool, MixPolicy{}, be, 300, 9)));
}

TEST(BuildCorpus, RebalancingKeepsMetadata) {
  const auto pool = make_synthetic_pool(500, 4);
  SyntheticBackend be(4);
  MixPolicy mix;
  mix.override_rate = 0;
  const auto r = build_corpus(pool, mix, be, 200, 4);
  std::map<std::string, const QueryRecord*> by_id;
  for (const auto& q : pool) by_id[q.id] = &q;
  for (const auto& e : r.examples) {
    const auto* q = by_id.at(e.query_id.substr(0, e.query_id.find('#')));
    EXPECT_EQ(q->domain, e.domain);
    EXPECT_EQ(q->difficulty, e.difficulty);
  }
}

TEST(BuildCorpus, FixedLabelsThatCannotBalance) {
  std::vector<QueryRecord> pool;
  for (int i = 0; i < 40; ++i) {
    auto q = make_query("q" + std::to_string(i), (i % 4) * 0.25 + 0.1);
    q.mode_label = On;
    pool.push_back(q);
  }
  SyntheticBackend be(1);
  EXPECT_THROW(build_corpus(pool, MixPolicy{}, be, 20, 1), std::runtime_error);
}

TEST(PoolJson, RoundTrip) {
  auto q = make_query("q7", 0.4, QueryDomain::ToolUse);
  q.reference = ChoiceKey{'C'};
  q.mode_label = Off;
  std::stringstream ss;
  write_pool_jsonl(ss, {q});
  const auto back = read_pool_jsonl(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, "q7");
  EXPECT_EQ(back[0].domain, QueryDomain::ToolUse);
  EXPECT_EQ(back[0].mode_label, std::optional<ReasoningMode>(Off));
  EXPECT_TRUE(std::holds_alternative<ChoiceKey>(*back[0].reference));

  std::stringstream bad(R"({"id":"x","domain":"poetry","difficulty":0.5})");
  EXPECT_THROW(read_pool_jsonl(bad), std::invalid_argument);
  std::stringstream out_of_range(R"({"id":"x","domain":"math","difficulty":1.5})");
  EXPECT_THROW(read_pool_jsonl(out_of_range), std::invalid_argument);
}

TEST(Replay, VotesAndResponses) {
  std::stringstream in(
      R"({"id":"a","votes":["on","off","on"]})"
      "\n"
      R"({"id":"a","mode":"on","judge_analysis":"hard","thinking":"t","answer":"x"})"
      "\n"
      R"({"id":"a","mode":"off","judge_analysis":"easy","thinking":null,"answer":"y"})"
      "\n");
  ReplayBackend be(in);
  const auto q = make_query("a", 0.5);
  EXPECT_EQ(be.vote(q, 0), On);
  EXPECT_EQ(be.vote(q, 1), Off);
  EXPECT_EQ(be.respond(q, Off).answer, "y");
  EXPECT_THROW(be.respond(make_query("b", 0.5), On), BackendFailure);
}

TEST(Remote, TalksJsonOverHttp) {
  httplib::Server svr;
  int calls = 0;
  std::string auth;
  svr.Post("/gen", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    if (calls == 1) {
      res.status = 503;
      return;
    }
    nlohmann::json out;
    if (body["mode"].is_null()) {
      out = {{"mode", "on"}};
    } else if (body["mode"] == "on") {
      out = {{"judge_analysis", "needs work"}, {"thinking", "steps"}, {"answer", body["query"]}};
    } else {
      out = {{"judge_analysis", "direct"}, {"thinking", nullptr}, {"answer", body["query"]}};
    }
    res.set_content(out.dump(), "application/json");
  });
  svr.Post("/forbidden", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 403;
  });
  const int port = svr.bind_to_any_port("127.0.0.1");
  std::thread th([&] { svr.listen_after_bind(); });
  svr.wait_until_ready();

  ::setenv("AUTOTHINK_TEST_TOKEN", "secret", 1);
  RemoteBackendConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/gen";
  cfg.token_env = "AUTOTHINK_TEST_TOKEN";
  cfg.initial_backoff = std::chrono::milliseconds(10);
  RemoteBackend be(cfg);
  const auto q = make_query("r1", 0.5);
  EXPECT_EQ(be.vote(q, 0), On);  // first call got 503 and was retried
  EXPECT_EQ(auth, "Bearer secret");
  const auto on = be.respond(q, On);
  EXPECT_EQ(on.thinking, std::optional<std::string>("steps"));
  EXPECT_EQ(on.answer, q.query);
  EXPECT_FALSE(be.respond(q, Off).thinking.has_value());

  const auto ex = assemble_example(q, On, be, false);
  EXPECT_EQ(parse_response(ex.rendered_text).thinking, std::optional<std::string>("steps"));

  calls = 0;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/forbidden";
  RemoteBackend denied(cfg);
  EXPECT_THROW(denied.vote(q, 0), BackendFailure);
  EXPECT_EQ(calls, 1);  // no retry on 403

  svr.stop();
  th.join();
}
