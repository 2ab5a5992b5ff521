#include "judgekit/protocol.hpp"

#include <array>
#include <cctype>

#include "judgekit/util.hpp"

namespace judgekit::protocol {

namespace {

enum class TagKind { Think, Search, Information, Answer };

struct TagToken {
  TagKind kind;
  std::string_view open;
  std::string_view close;
};

constexpr std::array<TagToken, 4> kTags = {{
    {TagKind::Think, "<think>", "</think>"},
    {TagKind::Search, "<search>", "</search>"},
    {TagKind::Information, "<information>", "</information>"},
    {TagKind::Answer, "<answer>", "</answer>"},
}};

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool contains_tag_token(std::string_view body) {
  for (const auto& tag : kTags) {
    if (body.find(tag.open) != std::string_view::npos) return true;
    if (body.find(tag.close) != std::string_view::npos) return true;
  }
  return false;
}

// Parses `TOOL("query")` with optional whitespace between tokens. The tool
// name is case-insensitive; \" and \\ escapes inside the quotes are
// unescaped, any other backslash passes through untouched.
ToolCall parse_tool_call(std::string_view body) {
  auto fail = [&](const char* why) -> ToolCall {
    throw ParseError(ParseErrorKind::MalformedToolCall,
                     std::string("malformed tool call: ") + why + " in '" +
                         std::string(body) + "'");
  };

  std::string_view s = util::trim(body);
  std::size_t paren = s.find('(');
  if (paren == std::string_view::npos) return fail("missing '('");
  std::string name = util::to_lower(util::trim(s.substr(0, paren)));
  Tool tool;
  if (name == "wiki") {
    tool = Tool::Wiki;
  } else if (name == "arxiv") {
    tool = Tool::Arxiv;
  } else {
    return fail("unknown tool name");
  }

  std::size_t pos = paren + 1;
  while (pos < s.size() && is_ws(s[pos])) ++pos;
  if (pos >= s.size() || s[pos] != '"') return fail("missing opening quote");
  ++pos;

  std::string query;
  bool closed = false;
  while (pos < s.size()) {
    char c = s[pos];
    if (c == '\\' && pos + 1 < s.size() &&
        (s[pos + 1] == '"' || s[pos + 1] == '\\')) {
      query.push_back(s[pos + 1]);
      pos += 2;
      continue;
    }
    if (c == '"') {
      closed = true;
      ++pos;
      break;
    }
    query.push_back(c);
    ++pos;
  }
  if (!closed) return fail("unterminated quoted query");

  while (pos < s.size() && is_ws(s[pos])) ++pos;
  if (pos >= s.size() || s[pos] != ')') return fail("missing ')'");
  ++pos;
  while (pos < s.size() && is_ws(s[pos])) ++pos;
  if (pos != s.size()) return fail("trailing characters after ')'");
  if (query.empty()) return fail("empty query");
  return ToolCall{tool, std::move(query)};
}

std::string escape_query(std::string_view query) {
  std::string out;
  out.reserve(query.size());
  for (char c : query) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

const char* to_string(Choice c) { return c == Choice::A ? "A" : "B"; }

const char* to_string(Tool t) { return t == Tool::Wiki ? "WIKI" : "ARXIV"; }

std::optional<Choice> choice_from_string(std::string_view s) {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  return std::nullopt;
}

std::optional<Tool> tool_from_string(std::string_view s) {
  std::string lower = util::to_lower(s);
  if (lower == "wiki") return Tool::Wiki;
  if (lower == "arxiv") return Tool::Arxiv;
  return std::nullopt;
}

ParseResult parse_fragment(std::string_view text, ParseMode mode) {
  const bool strict = mode == ParseMode::Strict;
  ParseResult result;
  bool answered = false;

  // Stray text handling between tags.
  auto handle_stray = [&](std::string_view run) {
    std::string_view payload = util::trim(run);
    if (payload.empty()) return;
    if (strict) {
      throw ParseError(ParseErrorKind::StrayText,
                       "text outside tags: '" + std::string(payload) + "'");
    }
    if (answered) {
      result.discarded_chars += static_cast<int>(payload.size());
      return;
    }
    if (!result.segments.empty() &&
        std::holds_alternative<Think>(result.segments.back())) {
      auto& think = std::get<Think>(result.segments.back());
      think.text.append("\n").append(payload);
    } else {
      result.discarded_chars += static_cast<int>(payload.size());
    }
  };

  auto push_segment = [&](Segment&& seg) {
    if (answered) {
      if (strict) {
        throw ParseError(ParseErrorKind::AnswerNotFinal,
                         "segment after <answer> block");
      }
      ++result.dropped_segments;
      return;
    }
    if (std::holds_alternative<Answer>(seg)) answered = true;
    result.segments.push_back(std::move(seg));
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t lt = text.find('<', pos);
    if (lt == std::string_view::npos) {
      handle_stray(text.substr(pos));
      break;
    }

    const TagToken* open_tag = nullptr;
    const TagToken* dangling_close = nullptr;
    for (const auto& tag : kTags) {
      if (text.compare(lt, tag.open.size(), tag.open) == 0) {
        open_tag = &tag;
        break;
      }
      if (text.compare(lt, tag.close.size(), tag.close) == 0) {
        dangling_close = &tag;
        break;
      }
    }

    if (dangling_close != nullptr) {
      throw ParseError(ParseErrorKind::UnbalancedTags,
                       std::string("close tag ") + std::string(dangling_close->close) +
                           " without matching open tag");
    }
    if (open_tag == nullptr) {
      // A '<' that does not start a recognized tag is ordinary stray text.
      handle_stray(text.substr(pos, lt - pos + 1));
      pos = lt + 1;
      continue;
    }

    handle_stray(text.substr(pos, lt - pos));

    std::size_t body_start = lt + open_tag->open.size();
    std::size_t close_pos = text.find(open_tag->close, body_start);
    if (close_pos == std::string_view::npos) {
      throw ParseError(ParseErrorKind::UnbalancedTags,
                       std::string("open tag ") + std::string(open_tag->open) +
                           " without matching close tag");
    }
    std::string_view body = text.substr(body_start, close_pos - body_start);
    if (contains_tag_token(body)) {
      throw ParseError(ParseErrorKind::NestedTag,
                       "tag token nested inside " + std::string(open_tag->open) +
                           " body");
    }

    switch (open_tag->kind) {
      case TagKind::Think:
      case TagKind::Information: {
        if (util::trim(body).empty()) {
          if (strict) {
            throw ParseError(ParseErrorKind::EmptySegment,
                             std::string(open_tag->open) + " body empty");
          }
          ++result.dropped_segments;
        } else if (open_tag->kind == TagKind::Think) {
          push_segment(Think{std::string(body)});
        } else {
          push_segment(Information{std::string(body)});
        }
        break;
      }
      case TagKind::Search:
        push_segment(Search{parse_tool_call(body)});
        break;
      case TagKind::Answer: {
        auto choice = choice_from_string(util::trim(body));
        if (!choice) {
          throw ParseError(ParseErrorKind::InvalidChoice,
                           "answer is not exactly A or B: '" +
                               std::string(util::trim(body)) + "'");
        }
        push_segment(Answer{*choice});
        break;
      }
    }
    pos = close_pos + open_tag->close.size();
  }

  return result;
}

std::string render(const Segment& segment) {
  struct Renderer {
    std::string operator()(const Think& s) const {
      return "<think>" + s.text + "</think>";
    }
    std::string operator()(const Search& s) const {
      return std::string("<search>") + to_string(s.call.tool) + "(\"" +
             escape_query(s.call.query) + "\")</search>";
    }
    std::string operator()(const Information& s) const {
      return "<information>" + s.text + "</information>";
    }
    std::string operator()(const Answer& s) const {
      return std::string("<answer>") + to_string(s.choice) + "</answer>";
    }
  };
  return std::visit(Renderer{}, segment);
}

std::string render(const std::vector<Segment>& segments) {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += render(segments[i]);
  }
  return out;
}

bool validate_segment(const Segment& segment) {
  struct Validator {
    bool operator()(const Think& s) const {
      return !util::trim(s.text).empty() && !contains_tag_token(s.text);
    }
    bool operator()(const Search& s) const {
      return !s.call.query.empty() && !contains_tag_token(s.call.query);
    }
    bool operator()(const Information& s) const {
      return !util::trim(s.text).empty() && !contains_tag_token(s.text);
    }
    bool operator()(const Answer&) const { return true; }
  };
  return std::visit(Validator{}, segment);
}

}  // namespace judgekit::protocol
