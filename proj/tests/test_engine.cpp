#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "judgekit/engine.hpp"
#include "judgekit/policy.hpp"
#include "judgekit/trajectory.hpp"
#include "judgekit/util.hpp"

using namespace judgekit;
using engine::EpisodeConfig;
using engine::Generation;
using engine::GenerationRequest;
using engine::Message;
using engine::PromptTemplates;
using engine::Role;
using engine::StopReason;

namespace {

PromptTemplates tiny_templates() {
  PromptTemplates t;
  t.system = "sys";
  t.user = "Q {question} A {answer a} B {answer b}";
  return t;
}

PromptTemplates real_templates() {
  return PromptTemplates::load(JUDGEKIT_ASSETS_DIR);
}

std::string tmp_path(const char* name) {
  return std::string(JUDGEKIT_TEST_TMP) + "/" + name;
}

// Scripted policy that also logs every request it receives.
std::shared_ptr<engine::PolicyClient> capturing_policy(
    std::vector<Generation> turns,
    std::shared_ptr<std::vector<GenerationRequest>> log) {
  auto state = std::make_shared<std::size_t>(0);
  auto turns_ptr = std::make_shared<std::vector<Generation>>(std::move(turns));
  return std::make_shared<engine::FnPolicyClient>(
      [state, turns_ptr, log](const GenerationRequest& request) {
        log->push_back(request);
        if (*state >= turns_ptr->size())
          throw Error("capturing policy ran out of turns");
        return (*turns_ptr)[(*state)++];
      });
}

void check_search_information_pairing(const protocol::Trajectory& t) {
  std::size_t searches = 0;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    if (std::holds_alternative<protocol::Search>(t.segments[i])) {
      ++searches;
      REQUIRE(i + 1 < t.segments.size());
      CHECK(std::holds_alternative<protocol::Information>(t.segments[i + 1]));
    }
  }
  CHECK(searches == t.tool_events.size());
}

std::size_t count_kind(const protocol::Trajectory& t, auto pred) {
  std::size_t n = 0;
  for (const auto& s : t.segments)
    if (pred(s)) ++n;
  return n;
}

}  // namespace

TEST_CASE("prompt templates load from the asset directory") {
  auto t = real_templates();
  CHECK_FALSE(t.system.empty());
  CHECK(t.user.find("{question}") != std::string::npos);
  CHECK(t.user.find("{answer a}") != std::string::npos);
  CHECK(t.user.find("{answer b}") != std::string::npos);
  CHECK(t.user.find("Answer A:") != std::string::npos);

  CHECK_THROWS_AS(PromptTemplates::load(tmp_path("no_such_dir")), ConfigError);

  auto dir = tmp_path("bad_templates");
  std::filesystem::create_directories(dir);
  {
    std::FILE* sys = std::fopen((dir + "/system_prompt.txt").c_str(), "wb");
    std::fputs("s\n", sys);
    std::fclose(sys);
    std::FILE* user = std::fopen((dir + "/user_prompt.txt").c_str(), "wb");
    std::fputs("{question} and {answer a} only\n", user);
    std::fclose(user);
  }
  try {
    PromptTemplates::load(dir);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("{answer b}") != std::string::npos);
  }
}

TEST_CASE("episode config validation") {
  EpisodeConfig ok;
  CHECK_NOTHROW(engine::validate(ok));
  auto reject = [](auto mutate) {
    EpisodeConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(engine::validate(cfg), ConfigError);
  };
  reject([](EpisodeConfig& c) { c.max_tool_calls = 0; });
  reject([](EpisodeConfig& c) { c.max_prompt_tokens = 0; });
  reject([](EpisodeConfig& c) { c.max_response_tokens = 0; });
  reject([](EpisodeConfig& c) { c.temperature = -0.1; });
  reject([](EpisodeConfig& c) { c.passages_per_call = 0; });
  reject([](EpisodeConfig& c) { c.information_max_chars = 31; });
}

TEST_CASE("build_messages fills the template and groups the transcript") {
  engine::JudgeTask task;
  task.question = "q";
  task.answer_a = "a";
  task.answer_b = "b";

  auto base = engine::build_messages(task, {}, tiny_templates(), 10000);
  REQUIRE(base.size() == 2);
  CHECK(base[0].role == Role::System);
  CHECK(base[0].content == "sys");
  CHECK(base[1].role == Role::User);
  CHECK(base[1].content == "Q q A a B b");

  protocol::Trajectory history;
  history.segments = {
      protocol::Think{"t1"},
      protocol::Search{{protocol::Tool::Wiki, "w"}},
      protocol::Information{"evidence one"},
      protocol::Think{"t2"},
      protocol::Information{"evidence two"},
      protocol::Think{"t3"},
  };
  auto msgs = engine::build_messages(task, history, tiny_templates(), 10000);
  REQUIRE(msgs.size() == 7);
  CHECK(msgs[2].role == Role::Assistant);
  CHECK(msgs[2].content ==
        "<think>t1</think>\n<search>WIKI(\"w\")</search>");
  CHECK(msgs[3].role == Role::ToolEvidence);
  CHECK(msgs[3].content == "<information>evidence one</information>");
  CHECK(msgs[4].role == Role::Assistant);
  CHECK(msgs[4].content == "<think>t2</think>");
  CHECK(msgs[5].role == Role::ToolEvidence);
  CHECK(msgs[5].content == "<information>evidence two</information>");
  CHECK(msgs[6].role == Role::Assistant);
  CHECK(msgs[6].content == "<think>t3</think>");
}

TEST_CASE("build_messages elides oldest evidence under prompt pressure") {
  engine::JudgeTask task;
  task.question = "q";
  task.answer_a = "a";
  task.answer_b = "b";

  protocol::Trajectory history;
  const std::string big1(400, 'x');
  const std::string big2(400, 'y');
  history.segments = {
      protocol::Search{{protocol::Tool::Wiki, "w1"}},
      protocol::Information{big1},
      protocol::Search{{protocol::Tool::Wiki, "w2"}},
      protocol::Information{big2},
  };

  auto full = engine::build_messages(task, history, tiny_templates(), 100000);
  std::size_t total = 0;
  for (const auto& m : full) total += util::estimate_tokens(m.content);

  // One token short of fitting: the oldest evidence body must give way.
  auto elided = engine::build_messages(task, history, tiny_templates(),
                                       static_cast<int>(total - 1));
  REQUIRE(elided.size() == full.size());
  CHECK(elided[3].content == "<information>[evidence elided]</information>");
  CHECK(elided[5].content == "<information>" + big2 + "</information>");

  // Budget below even the elided rendering: overflow.
  CHECK_THROWS_AS(engine::build_messages(task, history, tiny_templates(), 30),
                  engine::PromptOverflowError);

  // System plus user alone too large.
  CHECK_THROWS_AS(engine::build_messages(task, {}, tiny_templates(), 2),
                  engine::PromptOverflowError);
}

TEST_CASE("scripted episode: think, search, evidence, verdict") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];

  auto log = std::make_shared<std::vector<GenerationRequest>>();
  auto policy = capturing_policy(
      {{"<think>check the corpus</think>\n<search>WIKI(\"alpha0 reactor cooling\")",
        StopReason::StopSequence},
       {"<think>the grounded candidate matches</think>\n<answer>A</answer>",
        StopReason::EndOfTurn}},
      log);

  EpisodeConfig cfg;
  auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());

  REQUIRE(traj.segments.size() == 5);
  CHECK(std::holds_alternative<protocol::Think>(traj.segments[0]));
  CHECK(std::holds_alternative<protocol::Search>(traj.segments[1]));
  CHECK(std::holds_alternative<protocol::Information>(traj.segments[2]));
  CHECK(std::holds_alternative<protocol::Think>(traj.segments[3]));
  CHECK(std::holds_alternative<protocol::Answer>(traj.segments[4]));

  REQUIRE(traj.tool_events.size() == 1);
  CHECK(traj.tool_events[0].call.tool == protocol::Tool::Wiki);
  CHECK(traj.tool_events[0].call.query == "alpha0 reactor cooling");
  CHECK(traj.tool_events[0].result.succeeded);
  CHECK(std::get<protocol::Information>(traj.segments[2]).text.find("alpha0") !=
        std::string::npos);

  CHECK(traj.final_choice == protocol::Choice::A);
  CHECK_FALSE(traj.truncated);
  CHECK(traj.lenient_repairs == 0);
  CHECK(traj.dropped_information == 0);
  check_search_information_pairing(traj);

  // First round: judging prompt plus the search stop sequence.
  REQUIRE(log->size() == 2);
  REQUIRE((*log)[0].messages.size() == 2);
  CHECK((*log)[0].messages[1].content.find(task.question) != std::string::npos);
  CHECK((*log)[0].stop_sequences == std::vector<std::string>{"</search>"});
  // Second round sees the assistant transcript and the evidence turn.
  REQUIRE((*log)[1].messages.size() == 4);
  CHECK((*log)[1].messages[2].role == Role::Assistant);
  CHECK((*log)[1].messages[3].role == Role::ToolEvidence);
}

TEST_CASE("arxiv calls route to the arxiv backend") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[1];  // scientific domain

  auto policy = fixtures::scripted_policy(
      {{"<think>paper search</think>\n<search>ARXIV(\"alpha1 reactor\")",
        StopReason::StopSequence},
       {"<think>ok</think>\n<answer>B</answer>", StopReason::EndOfTurn}});

  EpisodeConfig cfg;
  auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());
  REQUIRE(traj.tool_events.size() == 1);
  CHECK(traj.tool_events[0].call.tool == protocol::Tool::Arxiv);
  CHECK(traj.final_choice == protocol::Choice::B);
}

TEST_CASE("tool budget is enforced and the forced round truncates") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[2];

  auto policy = fixtures::always_search_policy();
  EpisodeConfig cfg;
  auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());

  CHECK(traj.tool_events.size() == 6);  // never above max_tool_calls
  CHECK(traj.truncated);
  CHECK_FALSE(traj.final_choice.has_value());
  CHECK(count_kind(traj, [](const protocol::Segment& s) {
          return std::holds_alternative<protocol::Search>(s);
        }) == 6);
  check_search_information_pairing(traj);
}

TEST_CASE("forced round carries the answer instruction and no stops") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];

  auto log = std::make_shared<std::vector<GenerationRequest>>();
  auto policy = capturing_policy(
      {{"<think>s</think>\n<search>WIKI(\"alpha0\")", StopReason::StopSequence},
       {"<think>must answer now</think>\n<answer>B</answer>",
        StopReason::EndOfTurn}},
      log);

  EpisodeConfig cfg;
  cfg.max_tool_calls = 1;
  auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());

  CHECK(traj.final_choice == protocol::Choice::B);
  CHECK_FALSE(traj.truncated);  // it did answer, just under duress
  REQUIRE(log->size() == 2);
  const auto& forced = (*log)[1];
  CHECK(forced.stop_sequences.empty());
  REQUIRE_FALSE(forced.messages.empty());
  const auto& last = forced.messages.back();
  CHECK(last.role == Role::User);
  CHECK(last.content.find("no searches left") != std::string::npos);
  CHECK(last.content.find("ONLY 'A' or 'B'") != std::string::npos);
}

TEST_CASE("episodes without answers truncate") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];
  EpisodeConfig cfg;

  SUBCASE("voluntary stop with no verdict") {
    auto policy = fixtures::scripted_policy(
        {{"<think>cannot decide</think>", StopReason::EndOfTurn}});
    auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());
    CHECK(traj.truncated);
    CHECK_FALSE(traj.final_choice.has_value());
    CHECK(traj.tool_events.empty());
  }

  SUBCASE("server-side length cut") {
    auto policy = fixtures::scripted_policy(
        {{"<think>half a thought</think>", StopReason::LengthLimit}});
    auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());
    CHECK(traj.truncated);
  }

  SUBCASE("stop-sequence round without a search tag is a protocol error") {
    // The engine restores the swallowed </search>; with no open tag to pair
    // it the round is structurally broken.
    auto policy = std::make_shared<engine::FnPolicyClient>(
        [](const GenerationRequest&) {
          return Generation{"   ", StopReason::StopSequence};
        });
    CHECK_THROWS_AS(
        engine::run_episode(task, *policy, registry, cfg, real_templates()),
        engine::ProtocolError);
  }

  SUBCASE("garbage in the forced round truncates instead of throwing") {
    auto policy = fixtures::scripted_policy(
        {{"<think>s</think>\n<search>WIKI(\"alpha0\")", StopReason::StopSequence},
         {"<answer>C</answer>", StopReason::EndOfTurn}});
    EpisodeConfig tight = cfg;
    tight.max_tool_calls = 1;
    auto traj =
        engine::run_episode(task, *policy, registry, tight, real_templates());
    CHECK(traj.truncated);
    CHECK_FALSE(traj.final_choice.has_value());
    CHECK(traj.tool_events.size() == 1);
  }
}

TEST_CASE("generated-token budget cuts the episode off") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];

  auto log = std::make_shared<std::vector<GenerationRequest>>();
  auto policy = capturing_policy(
      {{"<think>long opening thought</think>\n<search>WIKI(\"alpha0\")",
        StopReason::StopSequence}},
      log);

  EpisodeConfig cfg;
  cfg.max_response_tokens = 5;
  auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());

  CHECK(traj.truncated);
  CHECK(traj.tool_events.size() == 1);  // the first round still ran
  REQUIRE(log->size() == 1);            // the second never got a request
  CHECK((*log)[0].max_tokens == 5);
}

TEST_CASE("unparseable output mid-episode is a protocol error") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];
  EpisodeConfig cfg;

  auto policy = fixtures::scripted_policy(
      {{"<answer>C</answer>", StopReason::EndOfTurn}});
  CHECK_THROWS_AS(
      engine::run_episode(task, *policy, registry, cfg, real_templates()),
      engine::ProtocolError);
}

TEST_CASE("lenient repairs and fabricated evidence are counted") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];
  EpisodeConfig cfg;

  SUBCASE("stray prose needs one lenient pass") {
    auto policy = fixtures::scripted_policy(
        {{"Sure, let me look. <think>a</think>\n<search>WIKI(\"alpha0\")",
          StopReason::StopSequence},
         {"<think>done</think>\n<answer>A</answer>", StopReason::EndOfTurn}});
    auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());
    CHECK(traj.lenient_repairs == 1);
    CHECK(traj.final_choice == protocol::Choice::A);
  }

  SUBCASE("policy-fabricated information blocks are dropped") {
    auto policy = fixtures::scripted_policy(
        {{"<think>t</think>\n<information>fabricated</information>\n"
          "<answer>A</answer>",
          StopReason::EndOfTurn}});
    auto traj = engine::run_episode(task, *policy, registry, cfg, real_templates());
    CHECK(traj.dropped_information == 1);
    CHECK(traj.tool_events.empty());
    CHECK(count_kind(traj, [](const protocol::Segment& s) {
            return std::holds_alternative<protocol::Information>(s);
          }) == 0);
    CHECK(traj.final_choice == protocol::Choice::A);
  }
}

TEST_CASE("oracle mock judges fixture tasks correctly end to end") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  EpisodeConfig cfg;

  engine::OracleMockPolicyClient policy;
  for (int i : {0, 1, 7}) {
    auto task = fixtures::fixture_tasks()[static_cast<std::size_t>(i)];
    auto outcome = engine::judge(task, policy, registry, cfg, real_templates());
    REQUIRE(outcome.choice.has_value());
    CHECK(outcome.choice == task.gold);
    CHECK(outcome.trajectory.tool_events.size() == 1);
    CHECK_FALSE(outcome.trajectory.truncated);
  }
}

TEST_CASE("recorded episodes replay byte-identically") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[4];
  EpisodeConfig cfg;
  const auto cassette = tmp_path("engine_cassette.jsonl");

  std::string live_json;
  {
    engine::RecordingPolicyClient recorder(
        std::make_shared<engine::OracleMockPolicyClient>(), cassette);
    auto traj = engine::run_episode(task, recorder, registry, cfg, real_templates());
    live_json = protocol::trajectory_to_json(traj);
  }

  std::string first_replay, second_replay;
  {
    engine::ReplayPolicyClient replay(cassette);
    auto traj = engine::run_episode(task, replay, registry, cfg, real_templates());
    first_replay = protocol::trajectory_to_json(traj);
    CHECK(replay.remaining() == 0);
  }
  {
    engine::ReplayPolicyClient replay(cassette);
    auto traj = engine::run_episode(task, replay, registry, cfg, real_templates());
    second_replay = protocol::trajectory_to_json(traj);
  }
  CHECK(first_replay == live_json);
  CHECK(first_replay == second_replay);

  // A different task never matches the recorded requests.
  {
    engine::ReplayPolicyClient replay(cassette);
    auto other = fixtures::fixture_tasks()[5];
    CHECK_THROWS_AS(
        engine::run_episode(other, replay, registry, cfg, real_templates()),
        engine::ReplayMismatchError);
  }

  CHECK_THROWS_AS(engine::ReplayPolicyClient(tmp_path("missing_cassette.jsonl")),
                  ConfigError);
}

TEST_CASE("canonical request encoding is stable and key-sorted") {
  GenerationRequest req;
  req.messages = {{Role::User, "hi"}};
  req.stop_sequences = {"</search>"};
  req.temperature = 0.5;
  req.max_tokens = 64;

  CHECK(engine::canonical_request_json(req) ==
        "{\"max_tokens\":64,\"messages\":[{\"content\":\"hi\",\"role\":\"user\"}],"
        "\"seed\":null,\"stop_sequences\":[\"</search>\"],\"temperature\":0.5}");

  req.seed = 9;
  CHECK(engine::canonical_request_json(req).find("\"seed\":9") !=
        std::string::npos);

  GenerationRequest again = req;
  CHECK(engine::canonical_request_json(again) ==
        engine::canonical_request_json(req));
}

TEST_CASE("http policy client speaks the chat wire format") {
  std::atomic<int> hits{0};
  nlohmann::json seen_body;
  std::string seen_auth;
  std::mutex mu;

  httplib::Server server;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                {
                  std::lock_guard<std::mutex> lock(mu);
                  seen_body = nlohmann::json::parse(req.body);
                  seen_auth = req.get_header_value("Authorization");
                }
                ++hits;
                res.set_content(
                    "{\"choices\":[{\"message\":{\"content\":"
                    "\"<think>x</think>\\n<answer>A</answer>\"},"
                    "\"finish_reason\":\"stop\"}]}",
                    "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("JUDGEKIT_TEST_KEY", "sekrit", 1);
  engine::HttpPolicyOptions opt;
  opt.base_url = "http://127.0.0.1:" + std::to_string(port);
  opt.api_key_env = "JUDGEKIT_TEST_KEY";
  engine::HttpPolicyClient client(opt);

  GenerationRequest req;
  req.messages = {{Role::System, "s"},
                  {Role::User, "u"},
                  {Role::Assistant, "a"},
                  {Role::ToolEvidence, "<information>e</information>"}};
  req.stop_sequences = {"</search>"};
  req.seed = 11;
  auto gen = client.generate(req);

  server.stop();
  runner.join();

  CHECK(gen.text == "<think>x</think>\n<answer>A</answer>");
  CHECK(gen.stop_reason == StopReason::EndOfTurn);
  CHECK(hits == 1);
  CHECK(seen_auth == "Bearer sekrit");
  CHECK(seen_body.at("model") == "judge");
  CHECK(seen_body.at("seed") == 11);
  CHECK(seen_body.at("stop") == nlohmann::json::array({"</search>"}));
  const auto& msgs = seen_body.at("messages");
  REQUIRE(msgs.size() == 4);
  CHECK(msgs[0].at("role") == "system");
  CHECK(msgs[1].at("role") == "user");
  CHECK(msgs[2].at("role") == "assistant");
  // Evidence turns ride as user turns on the wire.
  CHECK(msgs[3].at("role") == "user");
  CHECK(msgs[3].at("content") == "<information>e</information>");
}

TEST_CASE("http policy client recovers stop reasons") {
  httplib::Server server;
  std::string content;
  std::string finish = "stop";
  std::mutex mu;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                std::lock_guard<std::mutex> lock(mu);
                nlohmann::json reply = {
                    {"choices",
                     {{{"message", {{"content", content}}},
                       {"finish_reason", finish}}}}};
                res.set_content(reply.dump(), "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  engine::HttpPolicyOptions opt;
  opt.base_url = "http://127.0.0.1:" + std::to_string(port);
  engine::HttpPolicyClient client(opt);

  GenerationRequest req;
  req.messages = {{Role::User, "u"}};
  req.stop_sequences = {"</search>"};

  {
    std::lock_guard<std::mutex> lock(mu);
    content = "<think>t</think>\n<search>WIKI(\"q\")";
  }
  CHECK(client.generate(req).stop_reason == StopReason::StopSequence);

  {
    std::lock_guard<std::mutex> lock(mu);
    content = "<think>t</think>\n<answer>A</answer>";
  }
  CHECK(client.generate(req).stop_reason == StopReason::EndOfTurn);

  {
    std::lock_guard<std::mutex> lock(mu);
    content = "<think>cut off mid";
    finish = "length";
  }
  CHECK(client.generate(req).stop_reason == StopReason::LengthLimit);

  server.stop();
  runner.join();
}

TEST_CASE("http policy client retries transient failures with backoff") {
  std::atomic<int> hits{0};
  httplib::Server server;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                const int n = ++hits;
                if (n < 3) {
                  res.status = n == 1 ? 500 : 429;
                  res.set_content("busy", "text/plain");
                  return;
                }
                res.set_content(
                    "{\"choices\":[{\"message\":{\"content\":\"ok\"},"
                    "\"finish_reason\":\"stop\"}]}",
                    "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  engine::HttpPolicyOptions opt;
  opt.base_url = "http://127.0.0.1:" + std::to_string(port);
  opt.backoff_initial_ms = 1;
  engine::HttpPolicyClient client(opt);

  GenerationRequest req;
  req.messages = {{Role::User, "u"}};
  CHECK(client.generate(req).text == "ok");
  CHECK(hits == 3);

  server.stop();
  runner.join();
}

TEST_CASE("http policy client fails fast and loud where appropriate") {
  std::atomic<int> hits{0};
  int status = 500;
  std::string body = "down";
  httplib::Server server;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                ++hits;
                res.status = status;
                res.set_content(body, "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  engine::HttpPolicyOptions opt;
  opt.base_url = "http://127.0.0.1:" + std::to_string(port);
  opt.backoff_initial_ms = 1;
  opt.max_attempts = 2;

  GenerationRequest req;
  req.messages = {{Role::User, "u"}};

  {
    engine::HttpPolicyClient client(opt);
    CHECK_THROWS_AS(client.generate(req), engine::PolicyUnavailableError);
    CHECK(hits == 2);  // retried to exhaustion on 5xx
  }

  hits = 0;
  status = 404;
  {
    engine::HttpPolicyClient client(opt);
    CHECK_THROWS_AS(client.generate(req), engine::PolicyUnavailableError);
    CHECK(hits == 1);  // client errors do not retry
  }

  hits = 0;
  status = 200;
  body = "not json";
  {
    engine::HttpPolicyClient client(opt);
    CHECK_THROWS_AS(client.generate(req), engine::PolicyUnavailableError);
    CHECK(hits == 1);
  }

  server.stop();
  runner.join();

  CHECK_THROWS_AS(engine::HttpPolicyClient(engine::HttpPolicyOptions{}),
                  ConfigError);
  engine::HttpPolicyOptions zero;
  zero.base_url = "http://127.0.0.1:1";
  zero.max_attempts = 0;
  CHECK_THROWS_AS(engine::HttpPolicyClient{zero}, ConfigError);
}

TEST_CASE("parallel_for visits every index once and propagates errors") {
  for (int parallelism : {1, 4}) {
    std::vector<std::atomic<int>> visits(100);
    engine::parallel_for(100, parallelism,
                         [&](std::size_t i) { ++visits[i]; });
    for (auto& v : visits) CHECK(v == 1);
  }

  CHECK_THROWS_AS(engine::parallel_for(
                      64, 4,
                      [](std::size_t i) {
                        if (i == 50) throw Error("boom");
                      }),
                  Error);
  CHECK_NOTHROW(engine::parallel_for(0, 4, [](std::size_t) {
    throw Error("never called");
  }));
}

TEST_CASE("trajectory serialization covers the transcript") {
  auto index = std::make_shared<tools::CorpusIndex>(
      tools::CorpusIndex::build(fixtures::fixture_corpus()));
  auto registry = fixtures::fixture_registry(index);
  auto task = fixtures::fixture_tasks()[0];
  EpisodeConfig cfg;
  engine::OracleMockPolicyClient policy;
  auto traj = engine::run_episode(task, policy, registry, cfg, real_templates());

  auto j = nlohmann::json::parse(protocol::trajectory_to_json(traj));
  CHECK(j.at("final_choice") == "A");
  CHECK(j.at("truncated") == false);
  REQUIRE(j.at("tool_events").size() == 1);
  CHECK(j.at("tool_events")[0].at("tool") == "WIKI");
  CHECK(j.at("segments").size() == traj.segments.size());
  CHECK(j.at("segments")[0].at("kind") == "think");
}
