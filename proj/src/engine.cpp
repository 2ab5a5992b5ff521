#include "judgekit/engine.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "judgekit/util.hpp"

namespace judgekit::engine {

void validate(const EpisodeConfig& cfg) {
  if (cfg.max_tool_calls < 1)
    throw ConfigError("max_tool_calls must be at least 1");
  if (cfg.max_prompt_tokens < 1)
    throw ConfigError("max_prompt_tokens must be positive");
  if (cfg.max_response_tokens < 1)
    throw ConfigError("max_response_tokens must be positive");
  if (cfg.temperature < 0.0)
    throw ConfigError("temperature must be non-negative");
  if (cfg.passages_per_call < 1)
    throw ConfigError("passages_per_call must be at least 1");
  if (cfg.information_max_chars < 32)
    throw ConfigError("information_max_chars must be at least 32");
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
    text.pop_back();
  return text;
}

void replace_all(std::string& text, const std::string& from,
                 const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

constexpr const char* kElisionMarker = "[evidence elided]";
constexpr const char* kForcedAnswerInstruction =
    "You have no searches left. Do not search again. Conclude your final "
    "judgment inside <think> and </think> now, followed by your final choice "
    "(ONLY 'A' or 'B') inside <answer> and </answer>.";

}  // namespace

PromptTemplates PromptTemplates::load(const std::string& dir) {
  PromptTemplates t;
  t.system = read_file(dir + "/system_prompt.txt");
  t.user = read_file(dir + "/user_prompt.txt");
  for (const char* ph : {"{question}", "{answer a}", "{answer b}"}) {
    if (t.user.find(ph) == std::string::npos)
      throw ConfigError(std::string("user template is missing the ") + ph +
                        " placeholder");
  }
  return t;
}

std::vector<Message> build_messages(const JudgeTask& task,
                                    const protocol::Trajectory& history,
                                    const PromptTemplates& templates,
                                    int max_prompt_tokens) {
  std::string user = templates.user;
  replace_all(user, "{question}", task.question);
  replace_all(user, "{answer a}", task.answer_a);
  replace_all(user, "{answer b}", task.answer_b);

  std::vector<Message> messages;
  messages.push_back({Role::System, templates.system});
  messages.push_back({Role::User, std::move(user)});

  // Indices of evidence turns, oldest first, for the elision pass.
  std::vector<std::size_t> evidence_at;
  std::vector<protocol::Segment> pending;
  auto flush_pending = [&]() {
    if (pending.empty()) return;
    messages.push_back({Role::Assistant, protocol::render(pending)});
    pending.clear();
  };
  for (const protocol::Segment& seg : history.segments) {
    if (const auto* info = std::get_if<protocol::Information>(&seg)) {
      flush_pending();
      evidence_at.push_back(messages.size());
      messages.push_back(
          {Role::ToolEvidence,
           protocol::render(
               protocol::Segment{protocol::Information{info->text}})});
    } else {
      pending.push_back(seg);
    }
  }
  flush_pending();

  auto estimate = [&]() {
    std::size_t total = 0;
    for (const Message& m : messages) total += util::estimate_tokens(m.content);
    return total;
  };
  const std::size_t limit = static_cast<std::size_t>(max_prompt_tokens);
  if (estimate() > limit) {
    const std::size_t base = util::estimate_tokens(messages[0].content) +
                             util::estimate_tokens(messages[1].content);
    if (base > limit)
      throw PromptOverflowError(
          "system prompt plus question and answers exceed the prompt budget (" +
          std::to_string(base) + " > " + std::to_string(limit) + " tokens)");
    for (std::size_t idx : evidence_at) {
      messages[idx].content = protocol::render(
          protocol::Segment{protocol::Information{kElisionMarker}});
      if (estimate() <= limit) break;
    }
    if (estimate() > limit)
      throw PromptOverflowError(
          "conversation exceeds the prompt budget even with all evidence elided");
  }
  return messages;
}

namespace {

struct RoundOutcome {
  bool answered = false;
  bool executed_search = false;
};

// Applies one parsed generation round to the trajectory: records thoughts,
// executes searches while budget remains, injects evidence, and stops at an
// answer. Segments after an unexecutable search are conditioned on evidence
// that never arrived, so they are discarded.
RoundOutcome absorb_round(protocol::Trajectory& traj,
                          const std::vector<protocol::Segment>& segments,
                          const tools::ToolRegistry& registry,
                          const EpisodeConfig& cfg) {
  RoundOutcome out;
  for (const protocol::Segment& seg : segments) {
    if (std::holds_alternative<protocol::Information>(seg)) {
      // Evidence is injected by the engine only; fabricated blocks are
      // dropped so the no-fabrication invariant holds.
      ++traj.dropped_information;
      continue;
    }
    if (const auto* search = std::get_if<protocol::Search>(&seg)) {
      if (traj.tool_events.size() >=
          static_cast<std::size_t>(cfg.max_tool_calls))
        break;
      tools::ToolResult result =
          tools::dispatch(registry, search->call, cfg.passages_per_call);
      protocol::Segment info = tools::format_information(
          result, static_cast<int>(cfg.information_max_chars));
      traj.segments.push_back(*search);
      traj.tool_events.push_back({search->call, std::move(result)});
      traj.segments.push_back(std::move(info));
      out.executed_search = true;
      continue;
    }
    if (const auto* answer = std::get_if<protocol::Answer>(&seg)) {
      traj.segments.push_back(*answer);
      traj.final_choice = answer->choice;
      out.answered = true;
      return out;
    }
    traj.segments.push_back(seg);
  }
  return out;
}

std::vector<protocol::Segment> parse_round(const std::string& text,
                                           protocol::Trajectory& traj,
                                           bool final_round) {
  try {
    return protocol::parse_fragment(text, protocol::ParseMode::Strict).segments;
  } catch (const protocol::ParseError&) {
  }
  try {
    auto result = protocol::parse_fragment(text, protocol::ParseMode::Lenient);
    ++traj.lenient_repairs;
    return std::move(result.segments);
  } catch (const protocol::ParseError& e) {
    if (final_round) return {};  // no verdict extractable; episode truncates
    throw ProtocolError(std::string("unparseable policy output: ") + e.what());
  }
}

}  // namespace

protocol::Trajectory run_episode(const JudgeTask& task, PolicyClient& policy,
                                 const tools::ToolRegistry& registry,
                                 const EpisodeConfig& cfg,
                                 const PromptTemplates& templates) {
  validate(cfg);
  protocol::Trajectory traj;
  std::size_t generated_chars = 0;
  bool forced_round = false;
  // Every productive round either executes a search or ends the episode;
  // the slack covers the forced round plus degenerate no-op rounds.
  const int max_rounds = cfg.max_tool_calls + 3;

  for (int round = 0; round < max_rounds; ++round) {
    const bool budget_left =
        traj.tool_events.size() < static_cast<std::size_t>(cfg.max_tool_calls);
    forced_round = !budget_left;

    GenerationRequest request;
    request.messages =
        build_messages(task, traj, templates, cfg.max_prompt_tokens);
    if (forced_round)
      request.messages.push_back({Role::User, kForcedAnswerInstruction});
    else
      request.stop_sequences = {"</search>"};
    request.temperature = cfg.temperature;
    request.seed = cfg.seed;
    const std::size_t spent = util::estimate_tokens_for_size(generated_chars);
    const std::size_t cap = static_cast<std::size_t>(cfg.max_response_tokens);
    if (spent >= cap) {
      traj.truncated = true;
      return traj;
    }
    request.max_tokens = static_cast<int>(cap - spent);

    Generation gen = policy.generate(request);
    generated_chars += gen.text.size();
    std::string text = gen.text;
    if (gen.stop_reason == StopReason::StopSequence)
      text += "</search>";  // the serving side swallowed the cut tag

    const std::vector<protocol::Segment> segments =
        parse_round(text, traj, forced_round);
    const RoundOutcome outcome =
        absorb_round(traj, segments, registry, cfg);
    if (outcome.answered) return traj;

    if (forced_round || gen.stop_reason == StopReason::EndOfTurn ||
        gen.stop_reason == StopReason::LengthLimit) {
      traj.truncated = true;
      return traj;
    }
  }
  traj.truncated = true;
  return traj;
}

JudgeOutcome judge(const JudgeTask& task, PolicyClient& policy,
                   const tools::ToolRegistry& registry,
                   const EpisodeConfig& cfg,
                   const PromptTemplates& templates) {
  JudgeOutcome out;
  out.trajectory = run_episode(task, policy, registry, cfg, templates);
  out.choice = out.trajectory.final_choice;
  return out;
}

void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(n, parallelism < 1 ? 1 : parallelism);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace judgekit::engine
