#pragma once

// Deterministic corpora, tasks and scripted policies shared by the unit
// tests and the acceptance suite.

#include <memory>
#include <string>
#include <vector>

#include "judgekit/engine.hpp"
#include "judgekit/policy.hpp"
#include "judgekit/task.hpp"
#include "judgekit/tools.hpp"

namespace fixtures {

using namespace judgekit;

inline std::string fixture_doc_text(int i) {
  const std::string n = std::to_string(i);
  return "The alpha" + n + " reactor at site beta" + n + " uses gamma" + n +
         " cooling and reports delta" + n +
         " output levels. It was commissioned by the epsilon" + n +
         " council after a decade of planning.";
}

/// 100 documents with per-document marker tokens (alphN, betaN, ...) so a
/// question naming them retrieves exactly its own document first.
inline std::vector<tools::Document> fixture_corpus() {
  std::vector<tools::Document> docs;
  docs.reserve(100);
  for (int i = 0; i < 100; ++i) {
    const std::string n = std::to_string(i);
    tools::Document d;
    d.doc_id = (i < 10 ? "doc-0" : "doc-") + n;
    d.title = "Reactor alpha" + n;
    d.text = fixture_doc_text(i);
    d.domain = i % 2 == 0 ? "wiki" : "scientific";
    docs.push_back(std::move(d));
  }
  return docs;
}

/// 50 gold-labeled pairs over the fixture corpus. The grounded answer cites
/// the document's marker tokens, the distractor is generic; presentation
/// order alternates so position carries no signal.
inline std::vector<engine::JudgeTask> fixture_tasks() {
  std::vector<engine::JudgeTask> tasks;
  tasks.reserve(50);
  for (int i = 0; i < 50; ++i) {
    const std::string n = std::to_string(i);
    engine::JudgeTask t;
    t.id = (i < 10 ? "task-0" : "task-") + n;
    t.question = "What cooling method does the alpha" + n +
                 " reactor at site beta" + n + " use?";
    const std::string grounded = "The alpha" + n + " reactor uses gamma" + n +
                                 " cooling and reports delta" + n +
                                 " output levels.";
    const std::string distractor =
        "It relies on a conventional water loop common to most installations "
        "of this kind.";
    if (i % 2 == 0) {
      t.answer_a = grounded;
      t.answer_b = distractor;
      t.gold = protocol::Choice::A;
    } else {
      t.answer_a = distractor;
      t.answer_b = grounded;
      t.gold = protocol::Choice::B;
    }
    t.domain = i % 2 == 0 ? engine::Domain::Wiki : engine::Domain::Scientific;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline tools::ToolRegistry fixture_registry(
    std::shared_ptr<const tools::CorpusIndex> index) {
  tools::ToolRegistry registry;
  registry.backends[protocol::Tool::Wiki] =
      std::make_shared<tools::LocalIndexBackend>(index);
  registry.backends[protocol::Tool::Arxiv] =
      std::make_shared<tools::LocalIndexBackend>(index);
  return registry;
}

/// Policy that searches on every turn, for budget-exhaustion tests.
inline std::shared_ptr<engine::PolicyClient> always_search_policy() {
  return std::make_shared<engine::FnPolicyClient>(
      [](const engine::GenerationRequest&) {
        engine::Generation gen;
        gen.text =
            "<think>More evidence can only help.</think>\n"
            "<search>WIKI(\"reactor cooling systems\")";
        gen.stop_reason = engine::StopReason::StopSequence;
        return gen;
      });
}

/// Policy that emits a fixed scripted sequence of generations, one per
/// call, regardless of the request.
inline std::shared_ptr<engine::PolicyClient> scripted_policy(
    std::vector<engine::Generation> turns) {
  auto state = std::make_shared<std::pair<std::vector<engine::Generation>,
                                          std::size_t>>(std::move(turns), 0);
  return std::make_shared<engine::FnPolicyClient>(
      [state](const engine::GenerationRequest&) {
        if (state->second >= state->first.size())
          throw Error("scripted policy ran out of turns");
        return state->first[state->second++];
      });
}

}  // namespace fixtures
