#pragma once

// Binary answer verifiers for the four reward domains: math (symbolic /
// numeric equivalence), code (all tests must pass), science (multiple
// choice letter) and general (keyword overlap).

#include <algorithm>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "autothink/math_expr.hpp"
#include "autothink/sandbox.hpp"

namespace autothink {

enum class Domain { Math, Code, Science, General };

inline std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Math: return "math";
    case Domain::Code: return "code";
    case Domain::Science: return "science";
    case Domain::General: return "general";
  }
  return "?";
}

inline Domain domain_from_label(std::string_view s) {
  if (s == "math") return Domain::Math;
  if (s == "code") return Domain::Code;
  if (s == "science") return Domain::Science;
  if (s == "general") return Domain::General;
  throw std::invalid_argument("unknown verifier domain: " + std::string(s));
}

struct MathAnswer {
  std::string expression;
};

struct TestCase {
  std::string stdin_text;
  std::string expected_stdout;
};

struct CodeTests {
  std::vector<TestCase> cases;
  double time_limit_s = 2.0;
  std::uint64_t memory_limit_bytes = 512ull << 20;
  std::string run_command_template = "sh {source}";
  // Optional one-off build step; its wall time is charged to case 1.
  std::string compile_command_template;
};

struct ChoiceKey {
  char letter = 'A';
};

struct KeywordSet {
  std::vector<std::string> keywords;
  double threshold = 0.6;
};

using ReferenceSpec = std::variant<MathAnswer, CodeTests, ChoiceKey, KeywordSet>;

struct VerifierOutcome {
  int reward = 0;
  std::string detail;
};

class EmptyAnswer : public std::runtime_error {
 public:
  EmptyAnswer() : std::runtime_error("nothing extractable from answer") {}
};

class DomainSpecMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate(const ReferenceSpec& spec) {
  if (auto* c = std::get_if<CodeTests>(&spec)) {
    if (c->cases.empty()) throw std::invalid_argument("CodeTests needs at least one case");
    if (!(c->time_limit_s > 0)) throw std::invalid_argument("CodeTests time_limit must be positive");
  } else if (auto* k = std::get_if<ChoiceKey>(&spec)) {
    if (k->letter < 'A' || k->letter > 'E') throw std::invalid_argument("ChoiceKey letter must be one of A-E");
  } else if (auto* kw = std::get_if<KeywordSet>(&spec)) {
    if (kw->keywords.empty()) throw std::invalid_argument("KeywordSet needs at least one keyword");
    if (kw->threshold < 0 || kw->threshold > 1) throw std::invalid_argument("KeywordSet threshold outside [0,1]");
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string_view last_nonempty_line(std::string_view text) {
  std::string_view best;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    if (!line.empty()) best = line;
    start = end + 1;
  }
  return best;
}

// Contents of the last \boxed{...}, honoring nested braces.
inline std::optional<std::string> last_boxed(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  const std::size_t at = text.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;
  int depth = 1;
  const std::size_t begin = at + marker.size();
  for (std::size_t i = begin; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(begin, i - begin));
  }
  return std::nullopt;
}

inline std::optional<std::string> last_fenced_block(std::string_view text) {
  std::vector<std::size_t> fences;
  for (std::size_t p = text.find("```"); p != std::string_view::npos; p = text.find("```", p + 3)) fences.push_back(p);
  if (fences.size() < 2) return std::nullopt;
  const std::size_t pairs = fences.size() / 2;
  const std::size_t open = fences[2 * (pairs - 1)], close = fences[2 * (pairs - 1) + 1];
  std::size_t body = text.find('\n', open);
  if (body == std::string_view::npos || body > close) body = open + 3;
  else ++body;  // skip the info string line (```python)
  return std::string(text.substr(body, close - body));
}

inline bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

inline std::vector<std::string> keyword_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) >= 0x80)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Judge convention: trailing whitespace per line ignored, and one final
// newline ignored.
inline std::string normalize_output(std::string_view s) {
  std::string out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    const bool last = end == std::string_view::npos;
    if (last) end = s.size();
    auto line = s.substr(start, end - start);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    out += line;
    if (!last) out += '\n';
    start = end + 1;
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace detail

/// Pulls the gradable part out of a free-form answer:
///   math    - last \boxed{...}, else the last non-empty line
///   science - first standalone A-E letter on the last line, else its
///             first alphabetic character (upper-cased)
///   code    - last fenced code block, else the whole text
///   general - the whole text
/// Throws EmptyAnswer when nothing is left.
inline std::string extract_final_answer(std::string_view answer_text, Domain domain) {
  std::string out;
  switch (domain) {
    case Domain::Math:
      if (auto boxed = detail::last_boxed(answer_text)) out = std::string(detail::trim(*boxed));
      else out = std::string(detail::last_nonempty_line(answer_text));
      break;
    case Domain::Science: {
      const auto line = detail::last_nonempty_line(answer_text);
      for (std::size_t i = 0; i < line.size() && out.empty(); ++i) {
        const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(line[i])));
        const bool standalone = (i == 0 || !detail::is_alpha(line[i - 1])) &&
                                (i + 1 == line.size() || !detail::is_alpha(line[i + 1]));
        if (up >= 'A' && up <= 'E' && standalone) out = std::string(1, up);
      }
      if (out.empty()) {
        auto it = std::find_if(line.begin(), line.end(), detail::is_alpha);
        if (it != line.end()) out = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(*it))));
      }
      break;
    }
    case Domain::Code:
      if (auto block = detail::last_fenced_block(answer_text)) out = *block;
      else out = std::string(answer_text);
      break;
    case Domain::General: out = std::string(answer_text); break;
  }
  if (detail::trim(out).empty()) throw EmptyAnswer();
  return out;
}

inline VerifierOutcome choice_match(char candidate_letter, const ChoiceKey& key) {
  const char a = static_cast<char>(std::toupper(static_cast<unsigned char>(candidate_letter)));
  const char b = static_cast<char>(std::toupper(static_cast<unsigned char>(key.letter)));
  if (a == b) return {1, std::string("choice ") + a + " matches key"};
  return {0, std::string("choice ") + a + " != key " + b};
}

/// Case-insensitive whole-token overlap. A multi-word keyword matches a
/// consecutive run of tokens.
inline VerifierOutcome keyword_reward(std::string_view answer_text, const KeywordSet& spec) {
  if (spec.keywords.empty()) throw std::invalid_argument("keyword_reward: empty keyword set");
  const auto tokens = detail::keyword_tokens(answer_text);
  std::size_t matched = 0;
  std::string missing;
  for (const auto& kw : spec.keywords) {
    const auto needle = detail::keyword_tokens(kw);
    const bool hit = !needle.empty() &&
                     std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end();
    if (hit) {
      ++matched;
    } else {
      if (!missing.empty()) missing += ", ";
      missing += kw;
    }
  }
  const double frac = static_cast<double>(matched) / static_cast<double>(spec.keywords.size());
  VerifierOutcome out;
  out.reward = frac >= spec.threshold ? 1 : 0;
  out.detail = std::to_string(matched) + "/" + std::to_string(spec.keywords.size()) + " keywords matched";
  if (!missing.empty()) out.detail += "; missing: " + missing;
  return out;
}

/// All-or-nothing unit-test grading. Stops at the first failing case; the
/// remaining cases are reported as skipped.
inline VerifierOutcome run_code_tests(std::string_view program_source, const CodeTests& spec, SandboxRunner& sandbox) {
  validate(spec);
  ProgramWorkspace ws(program_source);
  VerifierOutcome out{1, ""};
  auto note = [&](const std::string& line) {
    if (!out.detail.empty()) out.detail += '\n';
    out.detail += line;
  };

  double compile_time = 0.0;
  if (!spec.compile_command_template.empty()) {
    RunRequest req{ws.expand(spec.compile_command_template), "", {spec.time_limit_s, spec.memory_limit_bytes}};
    const RunResult r = sandbox.run(req);
    compile_time = r.wall_time_s;
    if (r.killed_by != KilledBy::None || r.exit_status != 0) {
      out.reward = 0;
      note(r.killed_by == KilledBy::Timeout ? "timeout case 1 (compile)" : "case 1: compile error");
      for (std::size_t i = 1; i < spec.cases.size(); ++i) note("case " + std::to_string(i + 1) + ": skipped");
      return out;
    }
  }

  for (std::size_t i = 0; i < spec.cases.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    if (out.reward == 0) {
      note("case " + id + ": skipped");
      continue;
    }
    const double budget = i == 0 ? spec.time_limit_s - compile_time : spec.time_limit_s;
    if (budget <= 0) {
      out.reward = 0;
      note("timeout case " + id);
      continue;
    }
    RunRequest req{ws.expand(spec.run_command_template), spec.cases[i].stdin_text,
                   {budget, spec.memory_limit_bytes}};
    const RunResult r = sandbox.run(req);
    if (r.killed_by == KilledBy::Timeout) {
      out.reward = 0;
      note("timeout case " + id);
    } else if (r.killed_by != KilledBy::None) {
      out.reward = 0;
      note("case " + id + ": killed" + (r.signal ? " by signal " + std::to_string(r.signal) : std::string()));
    } else if (r.exit_status != 0) {
      out.reward = 0;
      note("case " + id + ": exit status " + std::to_string(r.exit_status));
    } else if (detail::normalize_output(r.stdout_bytes) != detail::normalize_output(spec.cases[i].expected_stdout)) {
      out.reward = 0;
      note("case " + id + ": wrong answer");
    } else {
      note("case " + id + ": pass");
    }
  }
  return out;
}

inline VerifierOutcome verify_math(std::string_view candidate_text, const MathAnswer& ref,
                                   const math::EquivConfig& cfg = {}) {
  // "x = 7" grades its right-hand side.
  std::string_view cand = candidate_text;
  if (auto eq = cand.rfind('='); eq != std::string_view::npos) cand = cand.substr(eq + 1);
  const math::MathExpr reference = math::parse_math(ref.expression);
  math::MathExpr candidate;
  try {
    candidate = math::parse_math(cand);
  } catch (const math::SyntaxError& e) {
    return {0, std::string("unparseable answer: ") + e.what()};
  }
  try {
    if (math::math_equiv(candidate, reference, cfg)) return {1, "equivalent to " + ref.expression};
    return {0, "not equivalent to " + ref.expression};
  } catch (const math::UndefinedEverywhere&) {
    return {0, "expression undefined at every sample point"};
  }
}

/// Extracts the answer for the domain and dispatches to its verifier.
/// Throws DomainSpecMismatch when the reference variant does not belong to
/// the domain. An unextractable answer scores 0.
inline VerifierOutcome verify(Domain domain, std::string_view answer_text, const ReferenceSpec& spec,
                              SandboxRunner& sandbox, const math::EquivConfig& math_cfg = {}) {
  const bool matches = (domain == Domain::Math && std::holds_alternative<MathAnswer>(spec)) ||
                       (domain == Domain::Code && std::holds_alternative<CodeTests>(spec)) ||
                       (domain == Domain::Science && std::holds_alternative<ChoiceKey>(spec)) ||
                       (domain == Domain::General && std::holds_alternative<KeywordSet>(spec));
  if (!matches) throw DomainSpecMismatch("reference spec does not match domain " + std::string(to_string(domain)));
  validate(spec);

  std::string extracted;
  try {
    extracted = extract_final_answer(answer_text, domain);
  } catch (const EmptyAnswer&) {
    return {0, "empty answer"};
  }
  switch (domain) {
    case Domain::Math: return verify_math(extracted, std::get<MathAnswer>(spec), math_cfg);
    case Domain::Code: return run_code_tests(extracted, std::get<CodeTests>(spec), sandbox);
    case Domain::Science: return choice_match(extracted.front(), std::get<ChoiceKey>(spec));
    case Domain::General: return keyword_reward(extracted, std::get<KeywordSet>(spec));
  }
  return {0, "unreachable"};
}

// JSON form: {"type": "math"|"code"|"choice"|"keywords", ...fields}.
inline ReferenceSpec reference_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  ReferenceSpec spec;
  if (type == "math") {
    spec = MathAnswer{j.at("expression").get<std::string>()};
  } else if (type == "code") {
    CodeTests c;
    for (const auto& cj : j.at("cases"))
      c.cases.push_back({cj.at("stdin").get<std::string>(), cj.at("expected_stdout").get<std::string>()});
    c.time_limit_s = j.value("time_limit", c.time_limit_s);
    c.memory_limit_bytes = j.value("memory_limit", c.memory_limit_bytes);
    c.run_command_template = j.value("run_command_template", c.run_command_template);
    c.compile_command_template = j.value("compile_command_template", c.compile_command_template);
    spec = std::move(c);
  } else if (type == "choice") {
    const auto letter = j.at("letter").get<std::string>();
    if (letter.size() != 1) throw std::invalid_argument("choice letter must be a single character");
    spec = ChoiceKey{letter[0]};
  } else if (type == "keywords") {
    KeywordSet k;
    k.keywords = j.at("keywords").get<std::vector<std::string>>();
    k.threshold = j.value("threshold", k.threshold);
    spec = std::move(k);
  } else {
    throw std::invalid_argument("unknown reference type: " + type);
  }
  validate(spec);
  return spec;
}

inline nlohmann::json reference_to_json(const ReferenceSpec& spec) {
  return std::visit(
      [](const auto& s) -> nlohmann::json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MathAnswer>) {
          return {{"type", "math"}, {"expression", s.expression}};
        } else if constexpr (std::is_same_v<T, CodeTests>) {
          nlohmann::json cases = nlohmann::json::array();
          for (const auto& c : s.cases) cases.push_back({{"stdin", c.stdin_text}, {"expected_stdout", c.expected_stdout}});
          nlohmann::json j = {{"type", "code"},
                              {"cases", cases},
                              {"time_limit", s.time_limit_s},
                              {"memory_limit", s.memory_limit_bytes},
                              {"run_command_template", s.run_command_template}};
          if (!s.compile_command_template.empty()) j["compile_command_template"] = s.compile_command_template;
          return j;
        } else if constexpr (std::is_same_v<T, ChoiceKey>) {
          return {{"type", "choice"}, {"letter", std::string(1, s.letter)}};
        } else {
          return {{"type", "keywords"}, {"keywords", s.keywords}, {"threshold", s.threshold}};
        }
      },
      spec);
}

}  // namespace autothink
