#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "autothink/config.hpp"

using namespace autothink;
using nlohmann::json;

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = config_from_json(json::object());
  EXPECT_EQ(c.reward.judge_weight, 0.2);
  EXPECT_EQ(c.train.queries_per_update, 64);
  EXPECT_EQ(c.mix.think_on_fraction, 0.348);
  EXPECT_EQ(c.backend.kind, BackendSelection::Kind::Synthetic);
}

TEST(Config, ReadsSections) {
  const auto c = config_from_json(json::parse(R"({
    "reward": {"judge_weight": 0.1, "modulation_floor": 0.4},
    "env": {"lambda_cost": 1e-5},
    "train": {"updates": 10, "seed": 42, "learning_rate": 0.25},
    "mix": {"think_on_fraction": 0.6667, "difficulty_bin_weights": [0.1, 0.2, 0.3, 0.4]},
    "sandbox": {"time_limit_s": 1.5, "run_command_template": "python3 {source}"},
    "backend": "remote:http://localhost:9/x"
  })"));
  EXPECT_EQ(c.reward.judge_weight, 0.1);
  EXPECT_EQ(c.env.lambda_cost, 1e-5);
  EXPECT_EQ(c.train.updates, 10);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.mix.difficulty_bin_weights[3], 0.4);
  EXPECT_EQ(c.sandbox.limits.time_limit_s, 1.5);
  EXPECT_EQ(c.sandbox.run_command_template, "python3 {source}");
  EXPECT_EQ(c.backend.kind, BackendSelection::Kind::Remote);
  EXPECT_EQ(c.backend.target, "http://localhost:9/x");
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(config_from_json(json::parse(R"({"rewards": {}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train": {"epochs": 3}})")), ConfigError);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json(json::parse(R"({"reward": {"modulation_floor": 2}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train": {"updates": "many"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"mix": {"difficulty_bin_weights": [0.5, 0.5, 0.5, 0]}})")),
               ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"backend": "magic"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"backend": "remote:nohost"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"sandbox": {"time_limit_s": 0}})")), ConfigError);
}

TEST(Config, ReplayPathMustExist) {
  const auto dir = std::filesystem::temp_directory_path() / "autothink_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "replay.jsonl") << "";
  std::ofstream(dir / "cfg.json") << R"({"backend": "replay:replay.jsonl"})";
  const auto c = load_config(dir / "cfg.json");
  EXPECT_EQ(c.backend.kind, BackendSelection::Kind::Replay);
  EXPECT_EQ(std::filesystem::path(c.backend.target), dir / "replay.jsonl");
  EXPECT_NE(make_backend(c.backend, 0), nullptr);

  std::ofstream(dir / "cfg2.json") << R"({"backend": "replay:missing.jsonl"})";
  EXPECT_THROW(load_config(dir / "cfg2.json"), ConfigError);
  std::ofstream(dir / "cfg3.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "cfg3.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Config, ShippedDefaultConfigLoads) {
  const auto c = load_config(std::filesystem::path(AUTOTHINK_SOURCE_DIR) / "configs" / "default.json");
  const GlobalConfig d;
  EXPECT_EQ(c.env.lambda_cost, d.env.lambda_cost);
  EXPECT_EQ(c.train.learning_rate, d.train.learning_rate);
  EXPECT_EQ(c.mix.votes_per_query, d.mix.votes_per_query);
}
