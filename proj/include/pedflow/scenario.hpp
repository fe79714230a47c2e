#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pedflow/polygon.hpp"
#include "pedflow/random.hpp"
#include "pedflow/raster.hpp"
#include "pedflow/vec2.hpp"

namespace pedflow {

using NodeId = int;

struct Node {
  NodeId id = 0;
  Vec2 anchor;
  double region_radius = 4.0;
  bool signal_controlled = false;
};

/// Directed edge E(from:to); from == to is a loop edge (dwelling at a node).
struct EdgeRef {
  NodeId from = 0;
  NodeId to = 0;

  bool is_loop() const { return from == to; }
  friend auto operator<=>(const EdgeRef&, const EdgeRef&) = default;
};

/// "E(1:2)"
std::string edge_label(EdgeRef e);
/// "1:2", the form used in trajectory files.
std::string edge_token(EdgeRef e);
std::optional<EdgeRef> parse_edge_token(const std::string& token);

class GraphSpec {
 public:
  GraphSpec() = default;
  /// Throws InvalidScenario on duplicate node ids, unknown edge endpoints,
  /// duplicate edges or an empty node list.
  GraphSpec(std::vector<Node> nodes, std::vector<EdgeRef> edges);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<EdgeRef>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  std::optional<std::size_t> node_index(NodeId id) const;
  const Node& node(NodeId id) const;  // throws InvalidScenario when unknown
  /// Position of the edge in edges(), or -1.
  int edge_index(EdgeRef e) const;
  bool inside_region(NodeId id, Vec2 p) const;

 private:
  std::vector<Node> nodes_;
  std::vector<EdgeRef> edges_;
};

class SpawnArea {
 public:
  /// Throws InvalidScenario unless radius > 0.
  SpawnArea(Vec2 center, double radius);
  Vec2 center() const { return center_; }
  double radius() const { return radius_; }

 private:
  Vec2 center_;
  double radius_;
};

struct FlowRoute {
  int flow_id = 0;
  std::vector<EdgeRef> edges;
  NodeId goal = 0;
  std::vector<SpawnArea> spawn_areas;
  /// First spawn time of this flow within each spawn cadence.
  double spawn_offset = 0.0;

  /// Position of e in the route, or -1.
  int position(EdgeRef e) const;
  /// Node the agent is heading for while on route edge k: the to-node of a
  /// travel edge, or for a loop edge the to-node of the next travel edge.
  NodeId heading_node(std::size_t k) const;
};

/// True iff the route is non-empty, every edge exists in the graph and
/// consecutive edges chain (to-node of k is the from-node of k + 1).
bool edge_chain_valid(const FlowRoute& route, const GraphSpec& graph);

/// Forward-only progress along a route: stay, advance one edge, or advance
/// two when the skipped edge is a loop edge.
bool route_transition_allowed(const FlowRoute& route, int from_pos, int to_pos);

/// Throws InvalidScenario unless the route chains, ends at its goal, and has
/// at least one spawn area.
void validate_route(const FlowRoute& route, const GraphSpec& graph);

class SignalSchedule {
 public:
  SignalSchedule() = default;
  /// Throws InvalidScenario unless 0 <= t_green < t_red < period and k > 0.
  SignalSchedule(double period, double t_green, double t_red, double steepness);

  double period() const { return period_; }
  double t_green() const { return t_green_; }
  double t_red() const { return t_red_; }
  double steepness() const { return k_; }

 private:
  double period_ = 140.0;
  double t_green_ = 30.0;
  double t_red_ = 100.0;
  double k_ = 1.0;
};

/// Smooth signal value in (0, 1): 0 red, 1 green. Rises as a logistic through
/// t_green, falls through t_red, and repeats with the schedule period.
double signal_state(const SignalSchedule& schedule, double t);

/// Picks one of the route's spawn areas uniformly and a point uniformly inside
/// it. Throws NoSpawnAreas when the route has none.
Vec2 sample_spawn(const FlowRoute& route, Rng& rng);
Vec2 sample_spawn(const FlowRoute& route, std::uint64_t seed);

inline constexpr int kScenarioSchemaVersion = 1;

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name;
  GraphSpec graph;
  std::vector<FlowRoute> flows;
  SignalSchedule schedule;
  double spawn_interval = 2.0;
  Polygon crosswalk;
  std::shared_ptr<const Raster> raster;  // may be null
  std::filesystem::path raster_path;
  std::uint64_t hash = 0;  // FNV-1a of the scenario file bytes

  const FlowRoute& flow(int flow_id) const;  // throws InvalidScenario
};

/// Validates graph, routes (chain, goal, spawn areas), loop edges only at
/// signal-controlled nodes, crosswalk polygon and schedule.
void validate_scenario(const Scenario& s);

/// JSON scenario file; the raster path is resolved relative to the file.
Scenario load_scenario(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace pedflow
