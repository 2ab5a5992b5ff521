#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "judgekit/errors.hpp"

namespace judgekit::protocol {

enum class Choice { A, B };
enum class Tool { Wiki, Arxiv };

const char* to_string(Choice c);
const char* to_string(Tool t);
std::optional<Choice> choice_from_string(std::string_view s);
std::optional<Tool> tool_from_string(std::string_view s);

struct ToolCall {
  Tool tool = Tool::Wiki;
  std::string query;
  bool operator==(const ToolCall&) const = default;
};

struct Think {
  std::string text;
  bool operator==(const Think&) const = default;
};

struct Search {
  ToolCall call;
  bool operator==(const Search&) const = default;
};

struct Information {
  std::string text;
  bool operator==(const Information&) const = default;
};

struct Answer {
  Choice choice = Choice::A;
  bool operator==(const Answer&) const = default;
};

/// One block of the interleaved transcript. The surface syntax is
/// <think>..</think>, <search>TOOL("query")</search>, <information>..</information>
/// and <answer>A|B</answer>; tag names are lowercase, tool names uppercase.
using Segment = std::variant<Think, Search, Information, Answer>;

enum class ParseMode { Strict, Lenient };

enum class ParseErrorKind {
  UnbalancedTags,     // open tag without matching close, or dangling close tag
  InvalidChoice,      // answer body is not exactly A or B after trimming
  MalformedToolCall,  // search body does not match TOOL("query")
  StrayText,          // non-whitespace outside tag pairs (Strict only)
  NestedTag,          // a recognized tag token inside another tag's body
  EmptySegment,       // think/information body empty after trimming (Strict only)
  AnswerNotFinal,     // a second answer, or segments after the answer (Strict only)
};

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& message)
      : Error(message), kind_(kind) {}
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

struct ParseResult {
  std::vector<Segment> segments;
  /// Lenient mode only: bytes of stray text that had no preceding Think to
  /// attach to and were dropped.
  int discarded_chars = 0;
  /// Lenient mode only: segments dropped (empty bodies, extra answers,
  /// anything following the first answer).
  int dropped_segments = 0;
};

/// Parse one contiguous chunk of transcript text into segments.
///
/// Strict mode rejects anything the grammar does not cover; Lenient mode
/// attaches stray text to the preceding Think (or drops it, counted) and
/// keeps the first answer when several appear. Structural damage (unbalanced
/// or nested tags, malformed tool calls, invalid choices) is an error in both
/// modes.
ParseResult parse_fragment(std::string_view text, ParseMode mode);

/// Inverse of parse_fragment for valid segments:
/// parse_fragment(render(s), Strict).segments == s.
/// Precondition: every segment passes validate_segment. Segments are joined
/// with a single newline.
std::string render(const std::vector<Segment>& segments);
std::string render(const Segment& segment);

/// True iff the segment satisfies the type invariants: bodies non-empty
/// after trimming and free of recognized tag tokens (which would change the
/// parse on round-trip).
bool validate_segment(const Segment& segment);

}  // namespace judgekit::protocol
