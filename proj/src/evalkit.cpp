#include "judgekit/evalkit.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "judgekit/util.hpp"

namespace judgekit::evalkit {

using nlohmann::json;

namespace {

const reward::Variant kVariants[] = {
    reward::Variant::Vanilla, reward::Variant::EmOnly,
    reward::Variant::FullWeight, reward::Variant::Decoupled};

// Indices of `dataset` in ascending task-id order: all accumulation loops
// run in this order so parallel scheduling never changes a report number.
std::vector<std::size_t> id_order(
    const std::vector<engine::JudgeTask>& dataset) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dataset[a].id < dataset[b].id;
                   });
  return order;
}

std::vector<engine::JudgeOutcome> run_all(
    const std::vector<engine::JudgeTask>& dataset, const JudgeFn& judge,
    int parallelism) {
  std::vector<engine::JudgeOutcome> outcomes(dataset.size());
  engine::parallel_for(dataset.size(), parallelism,
                       [&](std::size_t i) { outcomes[i] = judge(dataset[i]); });
  return outcomes;
}

}  // namespace

EvalReport evaluate(const std::vector<engine::JudgeTask>& dataset,
                    const JudgeFn& judge, int parallelism,
                    std::vector<EpisodeRow>* rows) {
  if (dataset.empty())
    throw EmptyDatasetError("evaluate needs at least one task");
  for (const engine::JudgeTask& task : dataset) {
    if (!task.gold)
      throw ConfigError("task " + task.id + " has no gold label");
  }
  const std::vector<engine::JudgeOutcome> outcomes =
      run_all(dataset, judge, parallelism);

  EvalReport report;
  report.total = static_cast<int>(dataset.size());
  if (rows) rows->clear();

  double tool_calls_sum = 0.0;
  std::map<std::string, std::array<double, 4>> variant_sums;
  for (reward::Variant v : kVariants)
    variant_sums[reward::to_string(v)] = {0.0, 0.0, 0.0, 0.0};

  for (std::size_t idx : id_order(dataset)) {
    const engine::JudgeTask& task = dataset[idx];
    const engine::JudgeOutcome& outcome = outcomes[idx];
    const bool abstained = !outcome.choice.has_value();
    const bool correct = !abstained && *outcome.choice == *task.gold;
    const std::string domain = engine::to_string(task.domain);

    DomainStats& ds = report.per_domain[domain];
    ds.count += 1;
    ds.correct += correct ? 1 : 0;
    ds.abstained += abstained ? 1 : 0;
    report.correct += correct ? 1 : 0;
    report.abstained += abstained ? 1 : 0;
    tool_calls_sum +=
        static_cast<double>(outcome.trajectory.tool_events.size());

    const int r_em = correct ? 1 : 0;
    const reward::ToolCorrectness correctness =
        reward::score_tool_calls(outcome.trajectory, task);
    EpisodeRow row;
    for (reward::Variant v : kVariants) {
      reward::RewardConfig rc;
      rc.variant = v;
      rc.normalize = true;
      const reward::RewardBreakdown bd =
          reward::compute_reward(r_em, correctness, rc);
      auto& sums = variant_sums[reward::to_string(v)];
      sums[0] += bd.total;
      sums[1] += *bd.normalized;
      sums[2] += bd.r_em;
      sums[3] += bd.r_tool;
      row.reward_total[reward::to_string(v)] = bd.total;
      row.reward_normalized[reward::to_string(v)] = *bd.normalized;
    }
    if (rows) {
      row.task_id = task.id;
      row.domain = domain;
      row.choice = outcome.choice;
      row.correct = correct;
      row.abstained = abstained;
      row.tool_calls =
          static_cast<int>(outcome.trajectory.tool_events.size());
      row.lenient_repairs = outcome.trajectory.lenient_repairs;
      row.truncated = outcome.trajectory.truncated;
      rows->push_back(std::move(row));
    }
  }

  report.incorrect = report.total - report.correct;
  report.accuracy_micro =
      static_cast<double>(report.correct) / report.total;
  report.abstain_rate =
      static_cast<double>(report.abstained) / report.total;
  report.mean_tool_calls = tool_calls_sum / report.total;
  double macro = 0.0;
  for (auto& [_, ds] : report.per_domain) {
    ds.accuracy = static_cast<double>(ds.correct) / ds.count;
    macro += ds.accuracy;
  }
  report.accuracy_macro = macro / static_cast<double>(report.per_domain.size());
  for (reward::Variant v : kVariants) {
    const auto& sums = variant_sums[reward::to_string(v)];
    RewardStats rs;
    rs.mean_total = sums[0] / report.total;
    rs.mean_normalized = sums[1] / report.total;
    rs.mean_r_em = sums[2] / report.total;
    rs.mean_r_tool = sums[3] / report.total;
    report.per_variant[reward::to_string(v)] = rs;
  }
  return report;
}

engine::JudgeTask swapped(const engine::JudgeTask& task) {
  engine::JudgeTask out = task;
  std::swap(out.answer_a, out.answer_b);
  if (out.gold)
    out.gold = *out.gold == protocol::Choice::A ? protocol::Choice::B
                                                : protocol::Choice::A;
  return out;
}

double swap_consistency(const std::vector<engine::JudgeTask>& dataset,
                        const JudgeFn& judge, int parallelism) {
  if (dataset.empty())
    throw EmptyDatasetError("swap_consistency needs at least one task");
  std::vector<engine::JudgeTask> both;
  both.reserve(dataset.size() * 2);
  for (const engine::JudgeTask& task : dataset) both.push_back(task);
  for (const engine::JudgeTask& task : dataset) both.push_back(swapped(task));
  const std::vector<engine::JudgeOutcome> outcomes =
      run_all(both, judge, parallelism);

  int consistent = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& first = outcomes[i].choice;
    const auto& second = outcomes[dataset.size() + i].choice;
    if (!first || !second) continue;
    // The same underlying response wins both passes iff the raw letters
    // disagree, since the swap relabels the candidates.
    if (*first != *second) ++consistent;
  }
  return static_cast<double>(consistent) / static_cast<double>(dataset.size());
}

std::vector<Selection> select_data(
    const std::vector<engine::JudgeTask>& candidates, const JudgeFn& judge,
    int parallelism) {
  const std::vector<engine::JudgeOutcome> outcomes =
      run_all(candidates, judge, parallelism);
  std::vector<Selection> selections(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    selections[i] = {candidates[i].id, outcomes[i].choice};
  return selections;
}

std::vector<PreferencePair> export_dpo(
    const std::vector<Selection>& selections,
    const std::vector<engine::JudgeTask>& candidates) {
  std::unordered_map<std::string, const engine::JudgeTask*> by_id;
  for (const engine::JudgeTask& task : candidates) by_id[task.id] = &task;
  std::vector<PreferencePair> pairs;
  for (const Selection& sel : selections) {
    if (!sel.winner) continue;
    const auto it = by_id.find(sel.task_id);
    if (it == by_id.end())
      throw DanglingReferenceError("selection references unknown task " +
                                   sel.task_id);
    const engine::JudgeTask& task = *it->second;
    PreferencePair pair;
    pair.prompt = task.question;
    pair.chosen =
        *sel.winner == protocol::Choice::A ? task.answer_a : task.answer_b;
    pair.rejected =
        *sel.winner == protocol::Choice::A ? task.answer_b : task.answer_a;
    pair.judge_trajectory_id = sel.task_id;
    if (pair.chosen == pair.rejected) continue;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_dpo_jsonl(const std::vector<PreferencePair>& pairs,
                     const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const PreferencePair& p : pairs) {
    json j;
    j["prompt"] = p.prompt;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    j["judge_trajectory_id"] = p.judge_trajectory_id;
    out << j.dump() << "\n";
  }
}

std::vector<PreferencePair> load_dpo_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      PreferencePair p;
      p.prompt = j.at("prompt").get<std::string>();
      p.chosen = j.at("chosen").get<std::string>();
      p.rejected = j.at("rejected").get<std::string>();
      p.judge_trajectory_id = j.at("judge_trajectory_id").get<std::string>();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": bad preference pair: " + e.what());
    }
  }
  return pairs;
}

void write_selections_jsonl(const std::vector<Selection>& selections,
                            const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const Selection& sel : selections) {
    json j;
    j["task_id"] = sel.task_id;
    j["winner"] =
        sel.winner ? json(protocol::to_string(*sel.winner)) : json(nullptr);
    out << j.dump() << "\n";
  }
}

std::vector<Selection> load_selections_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::vector<Selection> selections;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Selection sel;
      sel.task_id = j.at("task_id").get<std::string>();
      if (!j.at("winner").is_null()) {
        const auto choice =
            protocol::choice_from_string(j.at("winner").get<std::string>());
        if (!choice)
          throw ConfigError("bad winner at line " + std::to_string(lineno));
        sel.winner = *choice;
      }
      selections.push_back(std::move(sel));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": bad selection: " + e.what());
    }
  }
  return selections;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["schema_version"] = report.schema_version;
  j["total"] = report.total;
  j["correct"] = report.correct;
  j["incorrect"] = report.incorrect;
  j["abstained"] = report.abstained;
  j["accuracy_micro"] = report.accuracy_micro;
  j["accuracy_macro"] = report.accuracy_macro;
  j["abstain_rate"] = report.abstain_rate;
  j["mean_tool_calls"] = report.mean_tool_calls;
  j["swap_consistency"] = report.swap_consistency
                              ? json(*report.swap_consistency)
                              : json(nullptr);
  json domains = json::object();
  for (const auto& [name, ds] : report.per_domain) {
    domains[name] = {{"count", ds.count},
                     {"correct", ds.correct},
                     {"abstained", ds.abstained},
                     {"accuracy", ds.accuracy}};
  }
  j["per_domain"] = std::move(domains);
  json variants = json::object();
  for (const auto& [name, rs] : report.per_variant) {
    variants[name] = {{"mean_total", rs.mean_total},
                      {"mean_normalized", rs.mean_normalized},
                      {"mean_r_em", rs.mean_r_em},
                      {"mean_r_tool", rs.mean_r_tool}};
  }
  j["per_variant"] = std::move(variants);
  return j.dump(2);
}

namespace {

std::string pct(double x) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << x * 100.0;
  return ss.str();
}

}  // namespace

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "domain" << std::right << std::setw(8)
      << "n" << std::setw(10) << "acc%" << std::setw(12) << "abstain%"
      << "\n";
  out << std::string(44, '-') << "\n";
  for (const auto& [name, ds] : report.per_domain) {
    out << std::left << std::setw(14) << name << std::right << std::setw(8)
        << ds.count << std::setw(10) << pct(ds.accuracy) << std::setw(12)
        << pct(static_cast<double>(ds.abstained) / ds.count) << "\n";
  }
  out << std::string(44, '-') << "\n";
  out << std::left << std::setw(14) << "micro avg" << std::right
      << std::setw(8) << report.total << std::setw(10)
      << pct(report.accuracy_micro) << std::setw(12)
      << pct(report.abstain_rate) << "\n";
  out << std::left << std::setw(14) << "macro avg" << std::right
      << std::setw(8) << report.total << std::setw(10)
      << pct(report.accuracy_macro) << std::setw(12) << "" << "\n";
  out << "\nmean tool calls per episode: " << std::fixed
      << std::setprecision(3) << report.mean_tool_calls << "\n";
  if (report.swap_consistency) {
    out << "swap consistency (position-swap diagnostic): "
        << pct(*report.swap_consistency) << "%\n";
  }
  out << "\nreward means by variant (raw | normalized):\n";
  for (const auto& [name, rs] : report.per_variant) {
    out << "  " << std::left << std::setw(12) << name << std::right
        << std::fixed << std::setprecision(4) << std::setw(9) << rs.mean_total
        << " | " << rs.mean_normalized << "\n";
  }
  return out.str();
}

std::string episode_row_to_json_line(const EpisodeRow& row) {
  json j;
  j["task_id"] = row.task_id;
  j["domain"] = row.domain;
  j["choice"] = row.choice ? json(protocol::to_string(*row.choice)) : json(nullptr);
  j["correct"] = row.correct;
  j["abstained"] = row.abstained;
  j["tool_calls"] = row.tool_calls;
  j["lenient_repairs"] = row.lenient_repairs;
  j["truncated"] = row.truncated;
  j["reward_total"] = row.reward_total;
  j["reward_normalized"] = row.reward_normalized;
  return j.dump();
}

void write_episode_rows_jsonl(const std::vector<EpisodeRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const EpisodeRow& row : rows) out << episode_row_to_json_line(row) << "\n";
}

}  // namespace judgekit::evalkit
