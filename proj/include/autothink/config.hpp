#pragma once

// Experiment configuration file. Every section is optional and falls back
// to the library defaults; unknown keys anywhere are an error.
//
//   {
//     "reward":  {"judge_weight", "modulation_floor", "std_floor"},
//     "env":     {"a_on", "b_on", "a_off", "b_off", "lambda_cost"},
//     "train":   {"queries_per_update", "trajectories_per_query", "learning_rate", "updates", "seed"},
//     "mix":     {"think_on_fraction", "override_rate", "difficulty_bin_weights", "ratio_tolerance", "votes_per_query"},
//     "sandbox": {"run_command_template", "compile_command_template", "time_limit_s", "memory_limit_bytes", "max_output_bytes"},
//     "backend": "synthetic" | "replay:<path>" | "remote:<url>"
//   }

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

#include "autothink/coldstart.hpp"
#include "autothink/remote_backend.hpp"
#include "autothink/reward.hpp"
#include "autothink/sandbox.hpp"
#include "autothink/sim.hpp"

namespace autothink {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SandboxConfig {
  std::string run_command_template = "sh {source}";
  std::string compile_command_template;
  RunLimits limits;
};

struct BackendSelection {
  enum class Kind { Synthetic, Replay, Remote } kind = Kind::Synthetic;
  std::string target;  // replay path or remote url
};

struct GlobalConfig {
  RewardConfig reward;
  sim::EnvConfig env;
  sim::TrainConfig train;
  MixPolicy mix;
  SandboxConfig sandbox;
  BackendSelection backend;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + std::string(section) + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + (section.empty() ? key : std::string(section) + "." + key) + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& dst, std::string_view section) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad type for '" + std::string(section) + "." + key + "'");
  }
}

}  // namespace detail

inline BackendSelection parse_backend(std::string_view spec, const std::filesystem::path& base_dir = {}) {
  BackendSelection b;
  if (spec == "synthetic") return b;
  if (spec.rfind("replay:", 0) == 0) {
    std::filesystem::path p(std::string(spec.substr(7)));
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw ConfigError("config: replay file does not exist: " + p.string());
    b.kind = BackendSelection::Kind::Replay;
    b.target = p.string();
    return b;
  }
  if (spec.rfind("remote:", 0) == 0) {
    b.kind = BackendSelection::Kind::Remote;
    b.target = std::string(spec.substr(7));
    if (b.target.find("://") == std::string::npos) throw ConfigError("config: remote backend needs a url");
    return b;
  }
  throw ConfigError("config: backend must be synthetic, replay:<path> or remote:<url>");
}

/// Relative replay paths resolve against base_dir (the config file's
/// directory when loaded from disk).
inline GlobalConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::check_keys;
  using detail::read_opt;
  GlobalConfig c;
  check_keys(j, "", {"reward", "env", "train", "mix", "sandbox", "backend"});

  if (j.contains("reward")) {
    const auto& r = j["reward"];
    check_keys(r, "reward", {"judge_weight", "modulation_floor", "std_floor"});
    read_opt(r, "judge_weight", c.reward.judge_weight, "reward");
    read_opt(r, "modulation_floor", c.reward.modulation_floor, "reward");
    read_opt(r, "std_floor", c.reward.std_floor, "reward");
  }
  if (j.contains("env")) {
    const auto& e = j["env"];
    check_keys(e, "env", {"a_on", "b_on", "a_off", "b_off", "lambda_cost"});
    read_opt(e, "a_on", c.env.a_on, "env");
    read_opt(e, "b_on", c.env.b_on, "env");
    read_opt(e, "a_off", c.env.a_off, "env");
    read_opt(e, "b_off", c.env.b_off, "env");
    read_opt(e, "lambda_cost", c.env.lambda_cost, "env");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train", {"queries_per_update", "trajectories_per_query", "learning_rate", "updates", "seed"});
    read_opt(t, "queries_per_update", c.train.queries_per_update, "train");
    read_opt(t, "trajectories_per_query", c.train.trajectories_per_query, "train");
    read_opt(t, "learning_rate", c.train.learning_rate, "train");
    read_opt(t, "updates", c.train.updates, "train");
    read_opt(t, "seed", c.train.seed, "train");
  }
  if (j.contains("mix")) {
    const auto& m = j["mix"];
    check_keys(m, "mix", {"think_on_fraction", "override_rate", "difficulty_bin_weights", "ratio_tolerance", "votes_per_query"});
    read_opt(m, "think_on_fraction", c.mix.think_on_fraction, "mix");
    read_opt(m, "override_rate", c.mix.override_rate, "mix");
    read_opt(m, "difficulty_bin_weights", c.mix.difficulty_bin_weights, "mix");
    read_opt(m, "ratio_tolerance", c.mix.ratio_tolerance, "mix");
    read_opt(m, "votes_per_query", c.mix.votes_per_query, "mix");
  }
  if (j.contains("sandbox")) {
    const auto& s = j["sandbox"];
    check_keys(s, "sandbox", {"run_command_template", "compile_command_template", "time_limit_s", "memory_limit_bytes", "max_output_bytes"});
    read_opt(s, "run_command_template", c.sandbox.run_command_template, "sandbox");
    read_opt(s, "compile_command_template", c.sandbox.compile_command_template, "sandbox");
    read_opt(s, "time_limit_s", c.sandbox.limits.time_limit_s, "sandbox");
    read_opt(s, "memory_limit_bytes", c.sandbox.limits.memory_limit_bytes, "sandbox");
    read_opt(s, "max_output_bytes", c.sandbox.limits.max_output_bytes, "sandbox");
    if (!(c.sandbox.limits.time_limit_s > 0)) throw ConfigError("config: sandbox.time_limit_s must be > 0");
  }
  if (j.contains("backend")) {
    if (!j["backend"].is_string()) throw ConfigError("config: backend must be a string");
    c.backend = parse_backend(j["backend"].get<std::string>(), base_dir);
  }

  try {
    c.reward.validate();
    c.env.validate();
    c.train.validate();
    c.mix.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline GlobalConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline std::unique_ptr<GeneratorBackend> make_backend(const BackendSelection& b, std::uint64_t seed) {
  switch (b.kind) {
    case BackendSelection::Kind::Synthetic:
      return std::make_unique<SyntheticBackend>(seed);
    case BackendSelection::Kind::Replay:
      return std::make_unique<ReplayBackend>(ReplayBackend::from_file(b.target));
    case BackendSelection::Kind::Remote:
      return std::make_unique<RemoteBackend>(RemoteBackendConfig{b.target});
  }
  throw std::logic_error("unreachable backend kind");
}

}  // namespace autothink
