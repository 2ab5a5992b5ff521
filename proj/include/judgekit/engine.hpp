#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/policy.hpp"
#include "judgekit/task.hpp"
#include "judgekit/tools.hpp"
#include "judgekit/trajectory.hpp"

namespace judgekit::engine {

struct EpisodeConfig {
  int max_tool_calls = 6;
  int max_prompt_tokens = 4096;
  /// Cap on generated tokens across the whole episode; injected evidence
  /// does not count against it.
  int max_response_tokens = 2048;
  double temperature = 0.3;
  std::optional<std::uint64_t> seed;
  int passages_per_call = 3;
  std::size_t information_max_chars = 2000;
};

void validate(const EpisodeConfig& cfg);

struct PromptTemplates {
  std::string system;
  /// Must contain {question}, {answer a} and {answer b} placeholders.
  std::string user;
  static PromptTemplates load(const std::string& dir);
};

class ProtocolError : public Error {
  using Error::Error;
};
class PromptOverflowError : public Error {
  using Error::Error;
};

/// Renders the conversation so far: system and filled user template, then
/// alternating assistant transcript chunks and evidence turns. Oldest
/// evidence bodies are elided when the estimate exceeds max_prompt_tokens.
std::vector<Message> build_messages(const JudgeTask& task,
                                    const protocol::Trajectory& history,
                                    const PromptTemplates& templates,
                                    int max_prompt_tokens);

protocol::Trajectory run_episode(const JudgeTask& task, PolicyClient& policy,
                                 const tools::ToolRegistry& registry,
                                 const EpisodeConfig& cfg,
                                 const PromptTemplates& templates);

struct JudgeOutcome {
  /// Empty means Abstain: the episode ended without a parseable verdict.
  std::optional<protocol::Choice> choice;
  protocol::Trajectory trajectory;
};

JudgeOutcome judge(const JudgeTask& task, PolicyClient& policy,
                   const tools::ToolRegistry& registry,
                   const EpisodeConfig& cfg, const PromptTemplates& templates);

/// Runs fn(0..n-1) on a bounded worker pool. The first exception thrown by
/// any worker is rethrown after all workers finish.
void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace judgekit::engine
