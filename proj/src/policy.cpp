#include "judgekit/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "judgekit/util.hpp"

namespace judgekit::engine {

using nlohmann::json;

const char* to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::ToolEvidence: return "tool_evidence";
  }
  return "?";
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::StopSequence: return "stop_sequence";
    case StopReason::EndOfTurn: return "end_of_turn";
    case StopReason::LengthLimit: return "length_limit";
  }
  return "?";
}

std::optional<StopReason> stop_reason_from_string(std::string_view s) {
  if (s == "stop_sequence") return StopReason::StopSequence;
  if (s == "end_of_turn") return StopReason::EndOfTurn;
  if (s == "length_limit") return StopReason::LengthLimit;
  return std::nullopt;
}

namespace {

json request_to_json(const GenerationRequest& req) {
  json msgs = json::array();
  for (const Message& m : req.messages)
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json j;
  j["messages"] = std::move(msgs);
  j["stop_sequences"] = req.stop_sequences;
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  j["seed"] = req.seed ? json(*req.seed) : json(nullptr);
  return j;
}

}  // namespace

std::string canonical_request_json(const GenerationRequest& request) {
  return request_to_json(request).dump();
}

HttpPolicyClient::HttpPolicyClient(HttpPolicyOptions options)
    : options_(std::move(options)) {
  if (options_.base_url.empty())
    throw ConfigError("policy endpoint url is empty");
  if (options_.max_attempts < 1)
    throw ConfigError("policy max_attempts must be at least 1");
}

namespace {

// OpenAI-style finish_reason carries no record of which stop sequence
// fired, so a closing-tag stop is recovered from an unbalanced open tag.
StopReason classify_stop(const std::string& text,
                         const std::vector<std::string>& stops,
                         const std::string& finish_reason) {
  if (finish_reason == "length") return StopReason::LengthLimit;
  for (const std::string& s : stops) {
    if (s.size() < 3 || s.rfind("</", 0) != 0 || s.back() != '>') continue;
    const std::string open = "<" + s.substr(2);
    std::size_t opens = 0, closes = 0;
    for (std::size_t pos = text.find(open); pos != std::string::npos;
         pos = text.find(open, pos + open.size()))
      ++opens;
    for (std::size_t pos = text.find(s); pos != std::string::npos;
         pos = text.find(s, pos + s.size()))
      ++closes;
    if (opens > closes) return StopReason::StopSequence;
  }
  return StopReason::EndOfTurn;
}

}  // namespace

Generation HttpPolicyClient::generate(const GenerationRequest& request) {
  json body;
  body["model"] = options_.model;
  json msgs = json::array();
  for (const Message& m : request.messages) {
    // Evidence turns ride as user turns on the wire; chat endpoints have no
    // dedicated evidence role.
    const char* role =
        m.role == Role::ToolEvidence ? "user" : to_string(m.role);
    msgs.push_back({{"role", role}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  if (request.seed) body["seed"] = *request.seed;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!options_.api_key_env.empty()) {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) {
      const int ms = options_.backoff_initial_ms * (1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }
    httplib::Client cli(options_.base_url);
    cli.set_connection_timeout(0, options_.connect_timeout_ms * 1000);
    cli.set_read_timeout(options_.read_timeout_ms / 1000,
                         (options_.read_timeout_ms % 1000) * 1000);
    auto res = cli.Post(options_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw PolicyUnavailableError("policy endpoint returned status " +
                                   std::to_string(res->status));
    }
    try {
      const json reply = json::parse(res->body);
      const json& choice = reply.at("choices").at(0);
      Generation gen;
      gen.text = choice.at("message").at("content").get<std::string>();
      const std::string finish =
          choice.value("finish_reason", std::string("stop"));
      gen.stop_reason =
          classify_stop(gen.text, request.stop_sequences, finish);
      return gen;
    } catch (const json::exception& e) {
      throw PolicyUnavailableError(
          std::string("malformed policy response: ") + e.what());
    }
  }
  throw PolicyUnavailableError("policy endpoint unreachable after " +
                               std::to_string(options_.max_attempts) +
                               " attempts (" + last_error + ")");
}

ReplayPolicyClient::ReplayPolicyClient(const std::string& cassette_path)
    : path_(cassette_path) {
  std::ifstream in(cassette_path);
  if (!in) throw ConfigError("cannot open cassette: " + cassette_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string key = j.at("request").dump();
      const json& resp = j.at("response");
      Generation gen;
      gen.text = resp.at("text").get<std::string>();
      const auto reason =
          stop_reason_from_string(resp.at("stop_reason").get<std::string>());
      if (!reason)
        throw ConfigError("unknown stop_reason in cassette at line " +
                          std::to_string(lineno));
      gen.stop_reason = *reason;
      entries_[key].push_back(std::move(gen));
    } catch (const json::exception& e) {
      throw ConfigError(cassette_path + ":" + std::to_string(lineno) +
                        ": bad cassette line: " + e.what());
    }
  }
}

Generation ReplayPolicyClient::generate(const GenerationRequest& request) {
  const std::string key = canonical_request_json(request);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) {
    throw ReplayMismatchError(
        "no recorded response in " + path_ +
        " for request starting: " + key.substr(0, 160));
  }
  Generation gen = std::move(it->second.front());
  it->second.pop_front();
  return gen;
}

std::size_t ReplayPolicyClient::remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, dq] : entries_) n += dq.size();
  return n;
}

RecordingPolicyClient::RecordingPolicyClient(std::shared_ptr<PolicyClient> inner,
                                             const std::string& cassette_path)
    : inner_(std::move(inner)), out_(cassette_path, std::ios::trunc) {
  if (!inner_) throw ConfigError("recording client needs an inner client");
  if (!out_) throw ConfigError("cannot open cassette for writing: " + cassette_path);
}

Generation RecordingPolicyClient::generate(const GenerationRequest& request) {
  Generation gen = inner_->generate(request);
  json line;
  line["request"] = request_to_json(request);
  line["response"] = {{"text", gen.text},
                      {"stop_reason", to_string(gen.stop_reason)}};
  std::lock_guard<std::mutex> lock(mu_);
  out_ << line.dump() << "\n";
  out_.flush();
  return gen;
}

namespace {

// Extracts the span between two markers in the templated user prompt;
// `to` empty means "to end of string".
std::string between(const std::string& text, const std::string& from,
                    const std::string& to) {
  const std::size_t a = text.find(from);
  if (a == std::string::npos) return {};
  const std::size_t start = a + from.size();
  const std::size_t b = to.empty() ? std::string::npos : text.find(to, start);
  return std::string(util::trim(text.substr(
      start, b == std::string::npos ? std::string::npos : b - start)));
}

std::size_t overlap_score(const std::string& answer,
                          const std::unordered_set<std::string>& evidence) {
  std::size_t n = 0;
  for (const std::string& tok : util::tokenize(answer))
    if (evidence.count(tok)) ++n;
  return n;
}

}  // namespace

Generation OracleMockPolicyClient::generate(const GenerationRequest& request) {
  std::string user_prompt;
  std::string evidence;
  for (const Message& m : request.messages) {
    if (m.role == Role::User && user_prompt.empty() &&
        m.content.find("Answer A:") != std::string::npos) {
      user_prompt = m.content;
    } else if (m.role == Role::ToolEvidence) {
      evidence += m.content;
      evidence += "\n";
    }
  }
  const bool may_search =
      std::find(request.stop_sequences.begin(), request.stop_sequences.end(),
                "</search>") != request.stop_sequences.end();

  if (evidence.empty() && may_search) {
    const std::string question =
        between(user_prompt, "better answers the question:", "Answer A:");
    std::vector<std::string> toks = util::tokenize(question);
    if (toks.size() > 12) toks.resize(12);
    std::string query;
    for (const std::string& t : toks) {
      if (!query.empty()) query += ' ';
      query += t;
    }
    if (query.empty()) query = "background facts";
    Generation gen;
    gen.text = std::string("<think>I need evidence before judging.</think>\n") +
               "<search>" + protocol::to_string(tool_) + "(\"" + query + "\")";
    gen.stop_reason = StopReason::StopSequence;
    return gen;
  }

  const std::string answer_a = between(user_prompt, "Answer A:", "Answer B:");
  const std::string answer_b = between(user_prompt, "Answer B:", "NOTE:");
  std::unordered_set<std::string> ev_tokens;
  for (const std::string& tok : util::tokenize(evidence)) ev_tokens.insert(tok);
  const std::size_t score_a = overlap_score(answer_a, ev_tokens);
  const std::size_t score_b = overlap_score(answer_b, ev_tokens);
  const char* pick = score_b > score_a ? "B" : "A";
  Generation gen;
  gen.text = std::string("<think>The evidence overlaps candidate ") + pick +
             " the most.</think>\n<answer>" + pick + "</answer>";
  gen.stop_reason = StopReason::EndOfTurn;
  return gen;
}

}  // namespace judgekit::engine
