#pragma once

#include <optional>
#include <string>
#include <vector>

#include "judgekit/protocol.hpp"
#include "judgekit/tools.hpp"

namespace judgekit::protocol {

struct ToolEvent {
  ToolCall call;
  tools::ToolResult result;
};

/// The full transcript of one judging episode. Invariants maintained by the
/// engine: at most one Answer and only as the last segment; every Search is
/// immediately followed by the Information injected for it; tool_events
/// parallels the Search segments one-to-one.
struct Trajectory {
  std::vector<Segment> segments;
  std::vector<ToolEvent> tool_events;
  std::optional<Choice> final_choice;
  /// Set when the episode ended without a parseable answer (budget
  /// exhaustion, length cut, or a voluntary stop with no <answer>).
  bool truncated = false;

  // Diagnostics, not part of the transcript proper.
  int lenient_repairs = 0;       // chunks that needed lenient re-parsing
  int dropped_information = 0;   // policy-emitted <information> blocks dropped
};

/// The answer the episode committed to, if any. Never inferred from Think
/// text.
inline std::optional<Choice> extract_choice(const Trajectory& trajectory) {
  return trajectory.final_choice;
}

/// Serializes a trajectory (for episode logs and replay comparisons).
std::string trajectory_to_json(const Trajectory& trajectory);

}  // namespace judgekit::protocol
