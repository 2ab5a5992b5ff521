#include "judgekit/trajectory.hpp"

#include <variant>

#include <json.hpp>

namespace judgekit::protocol {

namespace {

using nlohmann::json;

json segment_to_json(const Segment& seg) {
  json j;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Think>) {
          j["kind"] = "think";
          j["text"] = s.text;
        } else if constexpr (std::is_same_v<T, Search>) {
          j["kind"] = "search";
          j["tool"] = to_string(s.call.tool);
          j["query"] = s.call.query;
        } else if constexpr (std::is_same_v<T, Information>) {
          j["kind"] = "information";
          j["text"] = s.text;
        } else {
          j["kind"] = "answer";
          j["choice"] = to_string(s.choice);
        }
      },
      seg);
  return j;
}

}  // namespace

std::string trajectory_to_json(const Trajectory& trajectory) {
  json j;
  j["segments"] = json::array();
  for (const auto& seg : trajectory.segments)
    j["segments"].push_back(segment_to_json(seg));
  j["tool_events"] = json::array();
  for (const auto& ev : trajectory.tool_events) {
    json e;
    e["tool"] = to_string(ev.call.tool);
    e["query"] = ev.call.query;
    e["succeeded"] = ev.result.succeeded;
    e["passages"] = json::array();
    for (const auto& p : ev.result.passages) {
      e["passages"].push_back(
          {{"doc_id", p.doc_id}, {"title", p.title}, {"score", p.score}});
    }
    j["tool_events"].push_back(std::move(e));
  }
  j["final_choice"] = trajectory.final_choice
                          ? json(to_string(*trajectory.final_choice))
                          : json(nullptr);
  j["truncated"] = trajectory.truncated;
  j["lenient_repairs"] = trajectory.lenient_repairs;
  j["dropped_information"] = trajectory.dropped_information;
  return j.dump();
}

}  // namespace judgekit::protocol
