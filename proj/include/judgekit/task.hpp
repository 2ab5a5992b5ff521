#pragma once

#include <optional>
#include <string>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/protocol.hpp"

namespace judgekit::engine {

enum class Domain { Wiki, Scientific, Medical, Other };

const char* to_string(Domain d);
std::optional<Domain> domain_from_string(std::string_view s);

/// One pairwise comparison instance. gold is present for training and
/// evaluation data, absent for pure inference (data selection).
struct JudgeTask {
  std::string id;
  std::string question;
  std::string answer_a;
  std::string answer_b;
  std::optional<protocol::Choice> gold;
  Domain domain = Domain::Other;
};

/// JSON-lines loader/writer; one object per line with fields
/// {id, question, answer_a, answer_b, gold, domain}. gold may be null or
/// absent. Unknown extra fields are ignored so synthesis exports load
/// directly.
std::vector<JudgeTask> load_tasks_jsonl(const std::string& path);
JudgeTask task_from_json_line(const std::string& line);
std::string task_to_json_line(const JudgeTask& task);

}  // namespace judgekit::engine
