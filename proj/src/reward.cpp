#include "judgekit/reward.hpp"

#include <cmath>
#include <string>

namespace judgekit::reward {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::EmOnly: return "em_only";
    case Variant::FullWeight: return "full_weight";
    case Variant::Decoupled: return "decoupled";
  }
  return "?";
}

std::optional<Variant> variant_from_string(std::string_view s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "em_only" || s == "em-only") return Variant::EmOnly;
  if (s == "full_weight" || s == "full-weight") return Variant::FullWeight;
  if (s == "decoupled") return Variant::Decoupled;
  return std::nullopt;
}

protocol::Tool expected_tool(engine::Domain domain) {
  return domain == engine::Domain::Scientific ? protocol::Tool::Arxiv
                                              : protocol::Tool::Wiki;
}

ToolCorrectness score_tool_calls(const protocol::Trajectory& trajectory,
                                 const engine::JudgeTask& task) {
  const protocol::Tool want = expected_tool(task.domain);
  ToolCorrectness out;
  out.reserve(trajectory.tool_events.size());
  for (const auto& ev : trajectory.tool_events) {
    const bool ok = ev.call.tool == want && ev.result.succeeded;
    out.push_back(ok ? CallJudgment::Correct : CallJudgment::Incorrect);
  }
  return out;
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || lambda > 1.0) {
    throw ConfigError("reward lambda must lie in (0, 1], got " +
                      std::to_string(lambda));
  }
}

// Mean per-call credit, 1 for correct and 0 for incorrect; 0 with no calls.
double mean_tool_credit(const ToolCorrectness& c) {
  if (c.empty()) return 0.0;
  double sum = 0.0;
  for (CallJudgment j : c)
    if (j == CallJudgment::Correct) sum += 1.0;
  return sum / static_cast<double>(c.size());
}

// Decoupled: +1 per correct call, -1 per incorrect, mean scaled by 0.5.
double decoupled_tool_term(const ToolCorrectness& c) {
  if (c.empty()) return 0.0;
  double sum = 0.0;
  for (CallJudgment j : c) sum += (j == CallJudgment::Correct) ? 1.0 : -1.0;
  return 0.5 * sum / static_cast<double>(c.size());
}

}  // namespace

RewardBreakdown compute_reward(int r_em, const ToolCorrectness& correctness,
                               const RewardConfig& cfg) {
  if (r_em != 0 && r_em != 1) {
    throw ConfigError("r_em must be 0 or 1, got " + std::to_string(r_em));
  }
  RewardBreakdown out;
  out.r_em = r_em;
  switch (cfg.variant) {
    case Variant::Vanilla: {
      check_lambda(cfg.lambda);
      out.r_tool = mean_tool_credit(correctness);
      const double sign = r_em > 0 ? 1.0 : 0.0;
      out.total = r_em + sign * cfg.lambda * out.r_tool;
      break;
    }
    case Variant::EmOnly: {
      out.r_tool = 0.0;
      out.total = r_em;
      break;
    }
    case Variant::FullWeight: {
      out.r_tool = mean_tool_credit(correctness);
      const double sign = r_em > 0 ? 1.0 : 0.0;
      out.total = r_em + sign * 1.0 * out.r_tool;
      break;
    }
    case Variant::Decoupled: {
      out.r_tool = decoupled_tool_term(correctness);
      out.total = r_em + out.r_tool;
      break;
    }
  }
  if (cfg.normalize) {
    const double lambda =
        cfg.variant == Variant::Vanilla ? cfg.lambda : 0.5;
    out.normalized = normalize_reward(out.total, cfg.variant, lambda);
  }
  return out;
}

RewardRange reward_range(Variant variant, double lambda) {
  switch (variant) {
    case Variant::Vanilla:
      check_lambda(lambda);
      return {0.0, 1.0 + lambda};
    case Variant::EmOnly:
      return {0.0, 1.0};
    case Variant::FullWeight:
      return {0.0, 2.0};
    case Variant::Decoupled:
      return {-0.5, 1.5};
  }
  return {0.0, 1.0};
}

double normalize_reward(double total, Variant variant, double lambda) {
  const RewardRange r = reward_range(variant, lambda);
  // Tolerate fp slop at the hull edges only.
  constexpr double kEps = 1e-12;
  if (total < r.lo - kEps || total > r.hi + kEps) {
    throw OutOfRangeError("reward " + std::to_string(total) +
                          " outside attainable range [" +
                          std::to_string(r.lo) + ", " + std::to_string(r.hi) +
                          "] for variant " + to_string(variant));
  }
  const double span = r.hi - r.lo;
  double t = (total - r.lo) / span;
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  return t;
}

}  // namespace judgekit::reward
