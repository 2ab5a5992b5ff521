#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/task.hpp"
#include "judgekit/trajectory.hpp"

namespace judgekit::reward {

/// Reward variants. Vanilla is the composite reward
///   total = r_em + sign(r_em) * lambda * r_tool
/// with r_tool the mean per-call credit in [0,1]; the others are the
/// ablation shapes: outcome only, tool weight raised to 1, and tool credit
/// decoupled from the outcome gate with +/-1 per call scaled by 0.5.
enum class Variant { Vanilla, EmOnly, FullWeight, Decoupled };

const char* to_string(Variant v);
std::optional<Variant> variant_from_string(std::string_view s);

struct RewardConfig {
  Variant variant = Variant::Vanilla;
  /// Tool-reward weight for Vanilla; FullWeight forces 1.0 and Decoupled
  /// forces 0.5 by construction. Must lie in (0, 1].
  double lambda = 0.5;
  bool normalize = false;
};

enum class CallJudgment { Correct, Incorrect };
using ToolCorrectness = std::vector<CallJudgment>;

struct RewardBreakdown {
  int r_em = 0;            // 0 or 1
  double r_tool = 0.0;     // the variant's per-episode tool term
  double total = 0.0;
  std::optional<double> normalized;  // present iff cfg.normalize
};

class OutOfRangeError : public Error {
  using Error::Error;
};

/// Judges each executed call by the task's domain mapping: Scientific tasks
/// expect Arxiv, everything else expects Wiki. Zero-call episodes yield an
/// empty sequence.
ToolCorrectness score_tool_calls(const protocol::Trajectory& trajectory,
                                 const engine::JudgeTask& task);

protocol::Tool expected_tool(engine::Domain domain);

RewardBreakdown compute_reward(int r_em, const ToolCorrectness& correctness,
                               const RewardConfig& cfg);

/// Affine map of the variant's total-reward range onto [0,1]. Throws
/// OutOfRangeError if total lies outside the range hull.
double normalize_reward(double total, Variant variant, double lambda = 0.5);

/// Inclusive hull of attainable totals for a variant.
struct RewardRange {
  double lo;
  double hi;
};
RewardRange reward_range(Variant variant, double lambda = 0.5);

}  // namespace judgekit::reward
