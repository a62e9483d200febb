#pragma once

// JSON-over-HTTP generator backend.
//
//   respond: POST {"query": text, "mode": "on"|"off"}
//            -> {"judge_analysis": ..., "thinking": text|null, "answer": ...}
//   vote:    POST {"query": text, "mode": null}
//            -> {"mode": "on"|"off"}
//
// The bearer token, if any, comes from the environment; it is never read
// from configuration files.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include "httplib.h"
// resolv.h (via httplib) defines _res, which Eigen uses as a parameter name.
#ifdef _res
#undef _res
#endif
#include "json.hpp"

#include "autothink/coldstart.hpp"

namespace autothink {

struct RemoteBackendConfig {
  std::string url;  // http://host:port/path
  std::string token_env = "AUTOTHINK_REMOTE_TOKEN";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
};

class RemoteBackend final : public GeneratorBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("remote backend url needs a scheme: " + cfg_.url);
    const auto path_start = cfg_.url.find('/', scheme_end + 3);
    base_ = cfg_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
    if (const char* tok = std::getenv(cfg_.token_env.c_str())) token_ = tok;
  }

  ReasoningMode vote(const QueryRecord& q, int /*vote_index*/) override {
    const auto j = post({{"query", q.query}, {"mode", nullptr}});
    return mode_from_label(j.at("mode").get<std::string>());
  }

  GeneratedResponse respond(const QueryRecord& q, ReasoningMode mode) override {
    const auto j = post({{"query", q.query}, {"mode", std::string(mode_label(mode))}});
    GeneratedResponse r;
    r.judge_analysis = j.at("judge_analysis").get<std::string>();
    if (j.contains("thinking") && !j["thinking"].is_null()) r.thinking = j["thinking"].get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    return r;
  }

 private:
  nlohmann::json post(const nlohmann::json& body) {
    httplib::Client client(base_);
    client.set_connection_timeout(cfg_.timeout);
    client.set_read_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    auto backoff = cfg_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      auto res = client.Post(path_, headers, body.dump(), "application/json");
      if (res && res->status == 200) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw BackendFailure(std::string("remote backend returned invalid JSON: ") + e.what());
        }
      }
      last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      // 4xx other than 429 will not improve on retry.
      if (res && res->status >= 400 && res->status < 500 && res->status != 429) break;
      if (attempt < cfg_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw BackendFailure("remote backend " + cfg_.url + " failed: " + last_error);
  }

  RemoteBackendConfig cfg_;
  std::string base_;
  std::string path_;
  std::string token_;
};

}  // namespace autothink
