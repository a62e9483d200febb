#pragma once

// AutoThink document format: a judge segment, a reasoning-mode tag, an
// optional thinking segment (think-on only) and an answer segment.
//
//   <judge>
//   {judge_analysis}
//   </judge>
//
//   <think_on>            <think_off>
//   <think>               <answer>
//   {thinking}            {answer}
//   </think>              </answer>
//
//   <answer>
//   {answer}
//   </answer>
//
// Tags are matched case-sensitively. There is no escaping: a segment body
// must not contain any tag literal.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace autothink {

enum class ReasoningMode { ThinkOn, ThinkOff };

inline std::string_view mode_tag(ReasoningMode m) {
  return m == ReasoningMode::ThinkOn ? "<think_on>" : "<think_off>";
}

// Short label used in JSON files ("on" / "off").
inline std::string_view mode_label(ReasoningMode m) {
  return m == ReasoningMode::ThinkOn ? "on" : "off";
}

inline ReasoningMode mode_from_label(std::string_view s) {
  if (s == "on") return ReasoningMode::ThinkOn;
  if (s == "off") return ReasoningMode::ThinkOff;
  throw std::invalid_argument("unknown reasoning mode label: " + std::string(s));
}

struct StructuredResponse {
  std::string judge_analysis;
  ReasoningMode mode = ReasoningMode::ThinkOff;
  std::optional<std::string> thinking;
  std::string answer;

  bool operator==(const StructuredResponse&) const = default;
};

enum class ParseErrorKind {
  MissingJudge,
  UnclosedTag,
  MissingModeTag,
  ThinkWithoutOn,
  MissingThink,
  MissingAnswer,
  DuplicateSegment,
  TrailingContent,
};

inline std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::MissingJudge: return "MissingJudge";
    case ParseErrorKind::UnclosedTag: return "UnclosedTag";
    case ParseErrorKind::MissingModeTag: return "MissingModeTag";
    case ParseErrorKind::ThinkWithoutOn: return "ThinkWithoutOn";
    case ParseErrorKind::MissingThink: return "MissingThink";
    case ParseErrorKind::MissingAnswer: return "MissingAnswer";
    case ParseErrorKind::DuplicateSegment: return "DuplicateSegment";
    case ParseErrorKind::TrailingContent: return "TrailingContent";
  }
  return "?";
}

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::size_t byte_offset)
      : std::runtime_error(std::string(to_string(kind)) + " at byte " + std::to_string(byte_offset)),
        kind_(kind),
        byte_offset_(byte_offset) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  ParseErrorKind kind_;
  std::size_t byte_offset_;
};

namespace detail {

enum class Tag { JudgeOpen, JudgeClose, ThinkOn, ThinkOff, ThinkOpen, ThinkClose, AnswerOpen, AnswerClose };

inline constexpr std::array<std::pair<Tag, std::string_view>, 8> kTags = {{
    {Tag::JudgeOpen, "<judge>"},
    {Tag::JudgeClose, "</judge>"},
    {Tag::ThinkOn, "<think_on>"},
    {Tag::ThinkOff, "<think_off>"},
    {Tag::ThinkOpen, "<think>"},
    {Tag::ThinkClose, "</think>"},
    {Tag::AnswerOpen, "<answer>"},
    {Tag::AnswerClose, "</answer>"},
}};

struct TagHit {
  Tag tag;
  std::size_t begin;
  std::size_t end;
};

inline std::vector<TagHit> scan_tags(std::string_view text) {
  std::vector<TagHit> hits;
  for (std::size_t pos = text.find('<'); pos != std::string_view::npos; pos = text.find('<', pos + 1)) {
    const auto rest = text.substr(pos);
    for (const auto& [tag, lit] : kTags) {
      if (rest.starts_with(lit)) {
        hits.push_back({tag, pos, pos + lit.size()});
        break;
      }
    }
  }
  return hits;
}

inline bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// First non-whitespace position in [from, to), or npos.
inline std::size_t first_non_ws(std::string_view text, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to && i < text.size(); ++i)
    if (!is_ws(text[i])) return i;
  return std::string_view::npos;
}

// Segment bodies drop exactly one newline after the open tag and one
// before the close tag, which is what the renderer adds.
inline std::string body(std::string_view text, std::size_t from, std::size_t to) {
  auto s = text.substr(from, to - from);
  if (s.starts_with('\n')) s.remove_prefix(1);
  if (s.ends_with('\n')) s.remove_suffix(1);
  return std::string(s);
}

inline bool is_open(Tag t) {
  return t == Tag::JudgeOpen || t == Tag::ThinkOn || t == Tag::ThinkOff || t == Tag::ThinkOpen ||
         t == Tag::AnswerOpen;
}

[[noreturn]] inline void fail(ParseErrorKind kind, std::size_t offset, std::string_view text) {
  if (offset >= text.size()) offset = text.empty() ? 0 : text.size() - 1;
  throw ParseError(kind, offset);
}

class StrictWalker {
 public:
  explicit StrictWalker(std::string_view text) : text_(text), hits_(scan_tags(text)) {}

  StructuredResponse run() {
    StructuredResponse out;

    // judge
    if (auto stray = stray_before_next(); stray != std::string_view::npos) fail(ParseErrorKind::MissingJudge, stray, text_);
    if (!peek() || peek()->tag != Tag::JudgeOpen)
      fail(ParseErrorKind::MissingJudge, peek() ? peek()->begin : cursor_, text_);
    out.judge_analysis = take_segment(Tag::JudgeClose);

    // mode tag
    if (auto stray = stray_before_next(); stray != std::string_view::npos)
      fail(ParseErrorKind::MissingModeTag, stray, text_);
    if (!peek()) fail(ParseErrorKind::MissingModeTag, cursor_, text_);
    switch (peek()->tag) {
      case Tag::ThinkOn: out.mode = ReasoningMode::ThinkOn; break;
      case Tag::ThinkOff: out.mode = ReasoningMode::ThinkOff; break;
      case Tag::JudgeOpen: fail(ParseErrorKind::DuplicateSegment, peek()->begin, text_);
      default: fail(ParseErrorKind::MissingModeTag, peek()->begin, text_);
    }
    advance();

    // think
    if (out.mode == ReasoningMode::ThinkOn) {
      if (auto stray = stray_before_next(); stray != std::string_view::npos)
        fail(ParseErrorKind::MissingThink, stray, text_);
      if (!peek()) fail(ParseErrorKind::MissingThink, cursor_, text_);
      switch (peek()->tag) {
        case Tag::ThinkOpen: out.thinking = take_segment(Tag::ThinkClose); break;
        case Tag::JudgeOpen:
        case Tag::ThinkOn:
        case Tag::ThinkOff: fail(ParseErrorKind::DuplicateSegment, peek()->begin, text_);
        default: fail(ParseErrorKind::MissingThink, peek()->begin, text_);
      }
    } else if (peek() && peek()->tag == Tag::ThinkOpen &&
               stray_before_next() == std::string_view::npos) {
      fail(ParseErrorKind::ThinkWithoutOn, peek()->begin, text_);
    }

    // answer
    if (auto stray = stray_before_next(); stray != std::string_view::npos)
      fail(ParseErrorKind::MissingAnswer, stray, text_);
    if (!peek()) fail(ParseErrorKind::MissingAnswer, cursor_, text_);
    switch (peek()->tag) {
      case Tag::AnswerOpen: out.answer = take_segment(Tag::AnswerClose); break;
      case Tag::JudgeOpen:
      case Tag::ThinkOn:
      case Tag::ThinkOff:
      case Tag::ThinkOpen: fail(ParseErrorKind::DuplicateSegment, peek()->begin, text_);
      default: fail(ParseErrorKind::MissingAnswer, peek()->begin, text_);
    }

    // nothing else
    if (auto stray = stray_before_next(); stray != std::string_view::npos)
      fail(ParseErrorKind::TrailingContent, stray, text_);
    if (peek()) {
      fail(is_open(peek()->tag) ? ParseErrorKind::DuplicateSegment : ParseErrorKind::TrailingContent, peek()->begin,
           text_);
    }
    return out;
  }

 private:
  const TagHit* peek() const { return next_ < hits_.size() ? &hits_[next_] : nullptr; }

  void advance() {
    cursor_ = hits_[next_].end;
    ++next_;
  }

  std::size_t stray_before_next() const {
    const std::size_t limit = peek() ? peek()->begin : text_.size();
    return first_non_ws(text_, cursor_, limit);
  }

  // The current hit is an open tag; its close must be the very next tag.
  std::string take_segment(Tag close) {
    const TagHit open = hits_[next_];
    advance();
    if (!peek() || peek()->tag != close) fail(ParseErrorKind::UnclosedTag, open.begin, text_);
    std::string s = body(text_, open.end, peek()->begin);
    advance();
    return s;
  }

  std::string_view text_;
  std::vector<TagHit> hits_;
  std::size_t next_ = 0;
  std::size_t cursor_ = 0;
};

// Lenient mode locates segments by tag position. Stray text between
// segments and after the answer is ignored; a segment whose close tag is
// missing runs to the next tag (or end of input).
inline StructuredResponse parse_lenient(std::string_view text) {
  const auto hits = scan_tags(text);
  auto find_from = [&](std::size_t i, auto pred) -> std::size_t {
    for (; i < hits.size(); ++i)
      if (pred(hits[i].tag)) return i;
    return hits.size();
  };
  auto segment_body = [&](std::size_t open_idx, Tag close, std::size_t& next_idx) {
    const auto& open = hits[open_idx];
    if (open_idx + 1 < hits.size() && hits[open_idx + 1].tag == close) {
      next_idx = open_idx + 2;
      return body(text, open.end, hits[open_idx + 1].begin);
    }
    next_idx = open_idx + 1;
    const std::size_t to = open_idx + 1 < hits.size() ? hits[open_idx + 1].begin : text.size();
    return body(text, open.end, to);
  };

  StructuredResponse out;
  std::size_t i = find_from(0, [](Tag t) { return t == Tag::JudgeOpen; });
  if (i == hits.size()) fail(ParseErrorKind::MissingJudge, first_non_ws(text, 0, text.size()), text);
  out.judge_analysis = segment_body(i, Tag::JudgeClose, i);

  i = find_from(i, [](Tag t) { return t == Tag::ThinkOn || t == Tag::ThinkOff; });
  if (i == hits.size()) fail(ParseErrorKind::MissingModeTag, hits.back().end, text);
  out.mode = hits[i].tag == Tag::ThinkOn ? ReasoningMode::ThinkOn : ReasoningMode::ThinkOff;
  const std::size_t mode_end = hits[i].end;
  ++i;

  const std::size_t think = find_from(i, [](Tag t) { return t == Tag::ThinkOpen || t == Tag::AnswerOpen; });
  if (think < hits.size() && hits[think].tag == Tag::ThinkOpen) {
    if (out.mode == ReasoningMode::ThinkOff) fail(ParseErrorKind::ThinkWithoutOn, hits[think].begin, text);
    out.thinking = segment_body(think, Tag::ThinkClose, i);
  } else if (out.mode == ReasoningMode::ThinkOn) {
    out.thinking = std::string();
  }

  i = find_from(i, [](Tag t) { return t == Tag::AnswerOpen; });
  if (i == hits.size()) fail(ParseErrorKind::MissingAnswer, mode_end, text);
  out.answer = segment_body(i, Tag::AnswerClose, i);
  return out;
}

}  // namespace detail

/// Parses an AutoThink document. Throws ParseError describing the first
/// structural violation in document order.
inline StructuredResponse parse_response(std::string_view text, bool strict = true) {
  if (strict) return detail::StrictWalker(text).run();
  return detail::parse_lenient(text);
}

/// True when every segment body is tag-free and thinking is present
/// exactly in think-on mode.
inline bool is_valid(const StructuredResponse& sr) {
  if (sr.thinking.has_value() != (sr.mode == ReasoningMode::ThinkOn)) return false;
  auto clean = [](std::string_view s) {
    for (const auto& [tag, lit] : detail::kTags)
      if (s.find(lit) != std::string_view::npos) return false;
    return true;
  };
  return clean(sr.judge_analysis) && clean(sr.answer) && (!sr.thinking || clean(*sr.thinking));
}

inline std::string render_response(const StructuredResponse& sr) {
  if (!is_valid(sr)) throw std::invalid_argument("render_response: response violates format invariants");
  std::string out;
  out.reserve(sr.judge_analysis.size() + sr.answer.size() + (sr.thinking ? sr.thinking->size() : 0) + 96);
  out += "<judge>\n";
  out += sr.judge_analysis;
  out += "\n</judge>\n\n";
  out += mode_tag(sr.mode);
  out += '\n';
  if (sr.mode == ReasoningMode::ThinkOn) {
    out += "<think>\n";
    out += *sr.thinking;
    out += "\n</think>\n\n";
  }
  out += "<answer>\n";
  out += sr.answer;
  out += "\n</answer>";
  return out;
}

/// Whitespace-delimited token count. A proxy for tokenizer counts, not a
/// real tokenizer.
inline std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = detail::is_ws(c);
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

}  // namespace autothink
