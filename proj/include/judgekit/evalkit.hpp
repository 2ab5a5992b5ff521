#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "judgekit/engine.hpp"
#include "judgekit/errors.hpp"
#include "judgekit/reward.hpp"

namespace judgekit::evalkit {

/// One independent judging episode. Everything in this module fans out
/// through this closure, so any policy backend (live, mock, replay) plugs
/// in the same way.
using JudgeFn = std::function<engine::JudgeOutcome(const engine::JudgeTask&)>;

class EmptyDatasetError : public Error {
  using Error::Error;
};
class DanglingReferenceError : public Error {
  using Error::Error;
};

struct DomainStats {
  int count = 0;
  int correct = 0;
  int abstained = 0;
  double accuracy = 0.0;
};

struct RewardStats {
  double mean_total = 0.0;
  double mean_normalized = 0.0;
  double mean_r_em = 0.0;
  double mean_r_tool = 0.0;
};

struct EvalReport {
  int schema_version = 1;
  int total = 0;
  int correct = 0;
  int incorrect = 0;
  int abstained = 0;  // subset of incorrect: no verdict scores as a miss
  /// Fraction correct over all episodes.
  double accuracy_micro = 0.0;
  /// Unweighted mean of per-domain accuracies, so domain sizes do not
  /// tilt the headline number. Reported alongside micro.
  double accuracy_macro = 0.0;
  double abstain_rate = 0.0;
  /// Position-swap agreement; a diagnostic beyond plain accuracy, filled
  /// only by the swap harness.
  std::optional<double> swap_consistency;
  double mean_tool_calls = 0.0;
  std::map<std::string, DomainStats> per_domain;
  std::map<std::string, RewardStats> per_variant;
};

/// Per-episode record backing the report; written as JSON-lines next to it.
struct EpisodeRow {
  std::string task_id;
  std::string domain;
  std::optional<protocol::Choice> choice;
  bool correct = false;
  bool abstained = false;
  int tool_calls = 0;
  int lenient_repairs = 0;
  bool truncated = false;
  std::map<std::string, double> reward_total;
  std::map<std::string, double> reward_normalized;
};

/// Judges every task once and aggregates. Tasks must carry gold labels.
/// Episodes run on a bounded pool; aggregation is done in task-id order so
/// the report is identical at every parallelism level.
EvalReport evaluate(const std::vector<engine::JudgeTask>& dataset,
                    const JudgeFn& judge, int parallelism,
                    std::vector<EpisodeRow>* rows = nullptr);

/// The same task with the candidates exchanged (and gold flipped).
engine::JudgeTask swapped(const engine::JudgeTask& task);

/// Judges each task in both presentation orders; consistent means the two
/// verdicts name the same underlying response. An abstention in either
/// pass counts as inconsistent.
double swap_consistency(const std::vector<engine::JudgeTask>& dataset,
                        const JudgeFn& judge, int parallelism);

struct Selection {
  std::string task_id;
  /// Empty means Skip (the judge abstained).
  std::optional<protocol::Choice> winner;
};

/// Winner per candidate pair; gold labels are not consulted and may be
/// absent.
std::vector<Selection> select_data(
    const std::vector<engine::JudgeTask>& candidates, const JudgeFn& judge,
    int parallelism);

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string judge_trajectory_id;
};

/// Turns non-Skip selections into preference pairs. Selections must
/// reference candidates by id; pairs whose two sides are byte-identical are
/// dropped.
std::vector<PreferencePair> export_dpo(
    const std::vector<Selection>& selections,
    const std::vector<engine::JudgeTask>& candidates);

void write_dpo_jsonl(const std::vector<PreferencePair>& pairs,
                     const std::string& path);
std::vector<PreferencePair> load_dpo_jsonl(const std::string& path);

void write_selections_jsonl(const std::vector<Selection>& selections,
                            const std::string& path);
std::vector<Selection> load_selections_jsonl(const std::string& path);

std::string report_to_json(const EvalReport& report);
/// Aligned text table: one row per domain plus micro/macro summary lines.
std::string report_to_table(const EvalReport& report);

std::string episode_row_to_json_line(const EpisodeRow& row);
void write_episode_rows_jsonl(const std::vector<EpisodeRow>& rows,
                              const std::string& path);

}  // namespace judgekit::evalkit
