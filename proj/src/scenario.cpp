#include "pedflow/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "pedflow/error.hpp"

namespace pedflow {

std::string edge_label(EdgeRef e) {
  return "E(" + std::to_string(e.from) + ":" + std::to_string(e.to) + ")";
}

std::string edge_token(EdgeRef e) { return std::to_string(e.from) + ":" + std::to_string(e.to); }

std::optional<EdgeRef> parse_edge_token(const std::string& token) {
  const auto colon = token.find(':');
  if (colon == std::string::npos) return std::nullopt;
  try {
    std::size_t p1 = 0, p2 = 0;
    const std::string a = token.substr(0, colon), b = token.substr(colon + 1);
    const int from = std::stoi(a, &p1), to = std::stoi(b, &p2);
    if (p1 != a.size() || p2 != b.size()) return std::nullopt;
    return EdgeRef{from, to};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

GraphSpec::GraphSpec(std::vector<Node> nodes, std::vector<EdgeRef> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  if (nodes_.empty()) throw Error(ErrorCode::InvalidScenario, "graph has no nodes");
  std::set<NodeId> ids;
  for (const auto& n : nodes_) {
    if (!ids.insert(n.id).second) throw Error(ErrorCode::InvalidScenario, "duplicate node id " + std::to_string(n.id));
    if (!(n.region_radius > 0.0)) throw Error(ErrorCode::InvalidScenario, "node region radius must be positive");
  }
  std::set<EdgeRef> seen;
  for (const auto& e : edges_) {
    if (!ids.count(e.from) || !ids.count(e.to))
      throw Error(ErrorCode::InvalidScenario, edge_label(e) + " references an unknown node");
    if (!seen.insert(e).second) throw Error(ErrorCode::InvalidScenario, "duplicate edge " + edge_label(e));
  }
}

std::optional<std::size_t> GraphSpec::node_index(NodeId id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

const Node& GraphSpec::node(NodeId id) const {
  const auto i = node_index(id);
  if (!i) throw Error(ErrorCode::InvalidScenario, "unknown node " + std::to_string(id));
  return nodes_[*i];
}

int GraphSpec::edge_index(EdgeRef e) const {
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i] == e) return static_cast<int>(i);
  return -1;
}

bool GraphSpec::inside_region(NodeId id, Vec2 p) const {
  const Node& n = node(id);
  return norm2(p - n.anchor) < n.region_radius * n.region_radius;
}

SpawnArea::SpawnArea(Vec2 center, double radius) : center_(center), radius_(radius) {
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw Error(ErrorCode::InvalidScenario, "spawn area radius must be positive");
}

int FlowRoute::position(EdgeRef e) const {
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i] == e) return static_cast<int>(i);
  return -1;
}

NodeId FlowRoute::heading_node(std::size_t k) const {
  for (std::size_t i = k; i < edges.size(); ++i)
    if (!edges[i].is_loop()) return edges[i].to;
  return edges.empty() ? goal : edges[std::min(k, edges.size() - 1)].to;
}

bool edge_chain_valid(const FlowRoute& route, const GraphSpec& graph) {
  if (route.edges.empty()) return false;
  for (std::size_t i = 0; i < route.edges.size(); ++i) {
    if (graph.edge_index(route.edges[i]) < 0) return false;
    if (i > 0 && route.edges[i - 1].to != route.edges[i].from) return false;
  }
  return true;
}

bool route_transition_allowed(const FlowRoute& route, int from_pos, int to_pos) {
  const int n = static_cast<int>(route.edges.size());
  if (from_pos < 0 || to_pos < 0 || from_pos >= n || to_pos >= n) return false;
  if (to_pos == from_pos || to_pos == from_pos + 1) return true;
  return to_pos == from_pos + 2 && route.edges[static_cast<std::size_t>(from_pos + 1)].is_loop();
}

void validate_route(const FlowRoute& route, const GraphSpec& graph) {
  const std::string who = "flow " + std::to_string(route.flow_id);
  if (!edge_chain_valid(route, graph)) throw Error(ErrorCode::InvalidScenario, who + ": route does not chain on the graph");
  if (route.edges.back().to != route.goal) throw Error(ErrorCode::InvalidScenario, who + ": route does not end at its goal");
  if (route.spawn_areas.empty()) throw Error(ErrorCode::InvalidScenario, who + ": no spawn areas");
  for (const auto& e : route.edges) {
    if (e.is_loop() && !graph.node(e.from).signal_controlled)
      throw Error(ErrorCode::InvalidScenario, who + ": loop edge " + edge_label(e) + " at a node without a signal");
  }
}

SignalSchedule::SignalSchedule(double period, double t_green, double t_red, double steepness)
    : period_(period), t_green_(t_green), t_red_(t_red), k_(steepness) {
  if (!(0.0 <= t_green && t_green < t_red && t_red < period) || !(steepness > 0.0))
    throw Error(ErrorCode::InvalidScenario, "signal schedule needs 0 <= t_green < t_red < period and k > 0");
}

namespace {
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

double signal_state(const SignalSchedule& sch, double t) {
  const double p = sch.period();
  double tp = std::fmod(t, p);
  if (tp < 0.0) tp += p;
  // Max over neighbouring periods keeps the value continuous across the wrap.
  double s = 0.0;
  for (int n = -1; n <= 1; ++n) {
    const double tau = tp + n * p;
    const double rise = logistic(sch.steepness() * (tau - sch.t_green()));
    const double fall = logistic(sch.steepness() * (sch.t_red() - tau));
    s = std::max(s, std::min(rise, fall));
  }
  return s;
}

Vec2 sample_spawn(const FlowRoute& route, Rng& rng) {
  if (route.spawn_areas.empty())
    throw Error(ErrorCode::NoSpawnAreas, "flow " + std::to_string(route.flow_id) + " has no spawn areas");
  const SpawnArea& area = route.spawn_areas[rng.index(route.spawn_areas.size())];
  const double r = area.radius() * std::sqrt(rng.uniform());
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  return area.center() + Vec2{r * std::cos(theta), r * std::sin(theta)};
}

Vec2 sample_spawn(const FlowRoute& route, std::uint64_t seed) {
  Rng rng(seed);
  return sample_spawn(route, rng);
}

const FlowRoute& Scenario::flow(int flow_id) const {
  for (const auto& f : flows)
    if (f.flow_id == flow_id) return f;
  throw Error(ErrorCode::InvalidScenario, "unknown flow " + std::to_string(flow_id));
}

void validate_scenario(const Scenario& s) {
  if (s.schema_version != kScenarioSchemaVersion)
    throw Error(ErrorCode::VersionMismatch, "scenario schema_version " + std::to_string(s.schema_version) +
                                                " (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  if (s.flows.empty()) throw Error(ErrorCode::InvalidScenario, "scenario has no flows");
  std::set<int> ids;
  for (const auto& f : s.flows) {
    if (!ids.insert(f.flow_id).second) throw Error(ErrorCode::InvalidScenario, "duplicate flow id");
    validate_route(f, s.graph);
  }
  if (!(s.spawn_interval > 0.0)) throw Error(ErrorCode::InvalidScenario, "spawn_interval must be positive");
  if (s.crosswalk.size() < 3 || std::abs(signed_area(s.crosswalk)) <= 0.0)
    throw Error(ErrorCode::InvalidScenario, "crosswalk polygon is degenerate");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

Vec2 vec2_of(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
EdgeRef edge_of(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  Scenario s;
  s.hash = fnv1a64(text);
  try {
    const auto j = nlohmann::json::parse(text);
    s.schema_version = j.at("schema_version").get<int>();
    if (s.schema_version != kScenarioSchemaVersion)
      throw Error(ErrorCode::VersionMismatch, path.string() + ": schema_version " + std::to_string(s.schema_version));
    s.name = j.value("name", path.stem().string());

    std::vector<Node> nodes;
    for (const auto& n : j.at("nodes")) {
      nodes.push_back(Node{n.at("id").get<int>(), vec2_of(n.at("anchor")), n.value("radius", 4.0),
                           n.value("signal", false)});
    }
    std::vector<EdgeRef> edges;
    for (const auto& e : j.at("edges")) edges.push_back(edge_of(e));
    s.graph = GraphSpec(std::move(nodes), std::move(edges));

    for (const auto& f : j.at("flows")) {
      FlowRoute r;
      r.flow_id = f.at("id").get<int>();
      for (const auto& e : f.at("route")) r.edges.push_back(edge_of(e));
      r.goal = f.at("goal").get<int>();
      for (const auto& a : f.at("spawn_areas")) r.spawn_areas.emplace_back(vec2_of(a.at("center")), a.at("radius").get<double>());
      r.spawn_offset = f.value("spawn_offset", 0.0);
      s.flows.push_back(std::move(r));
    }
    const auto& sig = j.at("signal");
    s.schedule = SignalSchedule(sig.at("period").get<double>(), sig.at("t_green").get<double>(),
                                sig.at("t_red").get<double>(), sig.value("steepness", 1.0));
    s.spawn_interval = j.value("spawn_interval", 2.0);
    for (const auto& p : j.at("crosswalk")) s.crosswalk.push_back(vec2_of(p));
    if (j.contains("raster")) {
      s.raster_path = path.parent_path() / j.at("raster").get<std::string>();
      s.raster = std::make_shared<const Raster>(load_raster(s.raster_path));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  validate_scenario(s);
  return s;
}

}  // namespace pedflow
