#include "judgekit/task.hpp"

#include <fstream>

#include <json.hpp>

#include "judgekit/util.hpp"

namespace judgekit::engine {

using nlohmann::json;

const char* to_string(Domain d) {
  switch (d) {
    case Domain::Wiki: return "wiki";
    case Domain::Scientific: return "scientific";
    case Domain::Medical: return "medical";
    case Domain::Other: return "other";
  }
  return "other";
}

std::optional<Domain> domain_from_string(std::string_view s) {
  std::string lower = util::to_lower(s);
  if (lower == "wiki" || lower == "wikipedia") return Domain::Wiki;
  if (lower == "scientific" || lower == "science") return Domain::Scientific;
  if (lower == "medical") return Domain::Medical;
  if (lower == "other") return Domain::Other;
  return std::nullopt;
}

JudgeTask task_from_json_line(const std::string& line) {
  json j = json::parse(line);
  JudgeTask task;
  task.id = j.at("id").get<std::string>();
  task.question = j.at("question").get<std::string>();
  task.answer_a = j.at("answer_a").get<std::string>();
  task.answer_b = j.at("answer_b").get<std::string>();
  if (task.question.empty() || task.answer_a.empty() || task.answer_b.empty()) {
    throw Error("task " + task.id + ": question and both answers must be non-empty");
  }
  if (j.contains("gold") && !j["gold"].is_null()) {
    auto gold = protocol::choice_from_string(j["gold"].get<std::string>());
    if (!gold) throw Error("task " + task.id + ": gold must be A or B");
    task.gold = gold;
  }
  if (j.contains("domain") && !j["domain"].is_null()) {
    auto domain = domain_from_string(j["domain"].get<std::string>());
    if (!domain) {
      throw Error("task " + task.id + ": unknown domain '" +
                  j["domain"].get<std::string>() + "'");
    }
    task.domain = *domain;
  }
  return task;
}

std::string task_to_json_line(const JudgeTask& task) {
  json j = {{"id", task.id},
            {"question", task.question},
            {"answer_a", task.answer_a},
            {"answer_b", task.answer_b},
            {"domain", to_string(task.domain)}};
  if (task.gold) {
    j["gold"] = protocol::to_string(*task.gold);
  } else {
    j["gold"] = nullptr;
  }
  return j.dump();
}

std::vector<JudgeTask> load_tasks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open task file: " + path);
  std::vector<JudgeTask> tasks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      tasks.push_back(task_from_json_line(line));
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return tasks;
}

}  // namespace judgekit::engine
