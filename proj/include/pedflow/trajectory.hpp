#pragma once

#include <vector>

#include "pedflow/vec2.hpp"

namespace pedflow {

inline constexpr int kUnlabeled = -1;

struct TrajectoryRecord {
  double t = 0.0;          // seconds
  Vec2 p;                  // meters, ground plane
  int edge = kUnlabeled;   // index into GraphSpec::edges()
};

enum class AgentStatus { Active, Arrived, TimedOut };

/// Time-stamped positions of one agent.
struct Trajectory {
  int agent_id = 0;
  int flow_id = -1;  // -1 when unknown
  AgentStatus status = AgentStatus::Active;
  std::vector<TrajectoryRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  double start_time() const { return records.front().t; }
  double end_time() const { return records.back().t; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline bool operator==(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  return a.t == b.t && a.p == b.p && a.edge == b.edge;
}

}  // namespace pedflow
