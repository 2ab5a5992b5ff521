#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/protocol.hpp"

namespace judgekit::engine {

enum class Role { System, User, Assistant, ToolEvidence };
const char* to_string(Role r);

struct Message {
  Role role = Role::User;
  std::string content;
};

enum class StopReason { StopSequence, EndOfTurn, LengthLimit };
const char* to_string(StopReason r);
std::optional<StopReason> stop_reason_from_string(std::string_view s);

struct Generation {
  std::string text;
  StopReason stop_reason = StopReason::EndOfTurn;
};

struct GenerationRequest {
  std::vector<Message> messages;
  std::vector<std::string> stop_sequences;
  double temperature = 0.3;
  int max_tokens = 2048;
  std::optional<std::uint64_t> seed;
};

/// Stable JSON encoding of a request; replay cassettes key on this string.
std::string canonical_request_json(const GenerationRequest& request);

class PolicyClient {
 public:
  virtual ~PolicyClient() = default;
  virtual Generation generate(const GenerationRequest& request) = 0;
};

class PolicyUnavailableError : public Error {
  using Error::Error;
};
class ReplayMismatchError : public Error {
  using Error::Error;
};

struct HttpPolicyOptions {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "judge";
  /// Name of the environment variable holding the bearer token; empty
  /// sends no Authorization header.
  std::string api_key_env;
  int max_attempts = 3;
  int connect_timeout_ms = 2000;
  int read_timeout_ms = 30000;
  int backoff_initial_ms = 50;
};

/// Chat-completion client. Retries transport failures and 5xx/429 with
/// exponential backoff up to max_attempts, then throws PolicyUnavailable.
class HttpPolicyClient : public PolicyClient {
 public:
  explicit HttpPolicyClient(HttpPolicyOptions options);
  Generation generate(const GenerationRequest& request) override;

 private:
  HttpPolicyOptions options_;
};

/// Serves recorded generations from a JSON-lines cassette. Each line holds
/// {"request": ..., "response": ...}; repeated identical requests replay in
/// recording order.
class ReplayPolicyClient : public PolicyClient {
 public:
  explicit ReplayPolicyClient(const std::string& cassette_path);
  Generation generate(const GenerationRequest& request) override;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::deque<Generation>> entries_;
  std::string path_;
};

/// Pass-through wrapper that appends every request/response pair to a
/// cassette file usable by ReplayPolicyClient.
class RecordingPolicyClient : public PolicyClient {
 public:
  RecordingPolicyClient(std::shared_ptr<PolicyClient> inner,
                        const std::string& cassette_path);
  Generation generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<PolicyClient> inner_;
  std::mutex mu_;
  std::ofstream out_;
};

class FnPolicyClient : public PolicyClient {
 public:
  using Fn = std::function<Generation(const GenerationRequest&)>;
  explicit FnPolicyClient(Fn fn) : fn_(std::move(fn)) {}
  Generation generate(const GenerationRequest& request) override {
    return fn_(request);
  }

 private:
  Fn fn_;
};

/// Deterministic stand-in judge. With no evidence yet it issues one search
/// built from the question's leading tokens; once evidence arrives it picks
/// the candidate sharing more tokens with it (ties go to A).
class OracleMockPolicyClient : public PolicyClient {
 public:
  explicit OracleMockPolicyClient(protocol::Tool tool = protocol::Tool::Wiki)
      : tool_(tool) {}
  Generation generate(const GenerationRequest& request) override;

 private:
  protocol::Tool tool_;
};

}  // namespace judgekit::engine
