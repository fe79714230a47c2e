#include <algorithm>
#include <cmath>

#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"

namespace pedflow::dataset {

namespace {

struct OracleAgent {
  std::size_t traj = 0;
  const FlowRoute* route = nullptr;
  Vec2 p;
  double speed = 0.0;
  std::size_t k = 0;
  bool holding = false;
  double spawn_t = 0.0;
  Vec2 dir;  // desired walking direction this frame (zero while holding)
};

}  // namespace

void to_json(nlohmann::json& j, const OracleConfig& c) {
  j = nlohmann::json{{"fps", c.fps},
                     {"speed_mean", c.speed_mean},
                     {"speed_sd", c.speed_sd},
                     {"speed_min", c.speed_min},
                     {"speed_max", c.speed_max},
                     {"green_threshold", c.green_threshold},
                     {"queue_distance", c.queue_distance},
                     {"side_range", c.side_range},
                     {"side_speed", c.side_speed},
                     {"max_speed", c.max_speed},
                     {"timeout", c.timeout},
                     {"start_time", c.start_time},
                     {"avoidance", {{"a", c.avoidance.a}, {"b", c.avoidance.b}, {"c", c.avoidance.c},
                                    {"max_step", c.avoidance.max_step}}}};
}

std::vector<Trajectory> generate_synthetic(const Scenario& scenario, int n_agents, std::uint64_t seed,
                                           const OracleConfig& cfg) {
  validate_scenario(scenario);
  cfg.avoidance.validate();
  if (n_agents < 0 || !(cfg.fps >= 5.0) || !(cfg.timeout > 0.0))
    throw Error(ErrorCode::InvalidConfig, "oracle needs n_agents >= 0, fps >= 5 and a positive timeout");
  const GraphSpec& graph = scenario.graph;
  const double dt = 1.0 / cfg.fps;
  AvoidanceParams frame_avoid = cfg.avoidance;
  frame_avoid.c *= dt / 0.2;
  frame_avoid.max_step *= dt / 0.2;

  Rng rng(seed);
  std::vector<Trajectory> out;
  std::vector<OracleAgent> active;
  std::vector<long> next_spawn(scenario.flows.size());
  for (std::size_t f = 0; f < scenario.flows.size(); ++f)
    next_spawn[f] = std::lround(scenario.flows[f].spawn_offset * cfg.fps);
  const long spawn_step = std::lround(scenario.spawn_interval * cfg.fps);
  int spawned = 0;

  std::vector<Vec2> snapshot, others;
  for (long frame = 0;; ++frame) {
    const double t = cfg.start_time + static_cast<double>(frame) / cfg.fps;
    for (std::size_t f = 0; f < scenario.flows.size() && spawned < n_agents; ++f) {
      if (frame != next_spawn[f]) continue;
      next_spawn[f] += spawn_step;
      const FlowRoute& route = scenario.flows[f];
      OracleAgent a;
      a.traj = out.size();
      a.route = &route;
      a.p = sample_spawn(route, rng);
      a.speed = std::clamp(rng.normal(cfg.speed_mean, cfg.speed_sd), cfg.speed_min, cfg.speed_max);
      a.spawn_t = t;
      Trajectory traj;
      traj.agent_id = spawned + 1;
      traj.flow_id = route.flow_id;
      out.push_back(std::move(traj));
      active.push_back(a);
      ++spawned;
    }
    if (active.empty()) {
      if (spawned >= n_agents) break;
      continue;
    }

    // Record, then retire arrivals and timeouts.
    for (auto& a : active) out[a.traj].records.push_back({t, a.p, kUnlabeled});
    std::erase_if(active, [&](const OracleAgent& a) {
      const bool last = a.k + 1 == a.route->edges.size();
      if (last && graph.inside_region(a.route->goal, a.p)) {
        out[a.traj].status = AgentStatus::Arrived;
        return true;
      }
      if (t - a.spawn_t >= cfg.timeout) {
        out[a.traj].status = AgentStatus::TimedOut;
        return true;
      }
      return false;
    });

    const double s = signal_state(scenario.schedule, t);
    const bool green = s >= cfg.green_threshold;
    // Route progress and hold decisions.
    for (auto& a : active) {
      const auto& edges = a.route->edges;
      if (a.holding && green) {
        a.holding = false;
        if (edges[a.k].is_loop()) ++a.k;
      }
      const EdgeRef e = edges[a.k];
      if (!e.is_loop() && a.k + 1 < edges.size() && graph.inside_region(e.to, a.p)) {
        if (edges[a.k + 1].is_loop()) {
          if (green && a.k + 2 < edges.size()) {
            a.k += 2;
          } else {
            a.k += 1;
            a.holding = true;
          }
        } else {
          a.k += 1;
        }
      }
    }
    for (auto& a : active) {
      a.dir = {};
      if (a.holding) continue;
      const Vec2 to = graph.node(a.route->heading_node(a.k)).anchor - a.p;
      a.dir = normalized(to);
    }
    // Queueing behind holding agents on the approach to a red signal.
    for (auto& a : active) {
      const auto& edges = a.route->edges;
      if (a.holding || green || a.k + 1 >= edges.size() || !edges[a.k + 1].is_loop()) continue;
      for (const auto& b : active) {
        if (&b == &a || !b.holding) continue;
        const Vec2 r = b.p - a.p;
        const double d = norm(r);
        if (d < cfg.queue_distance && dot(r, a.dir) > 0.5 * d) {
          a.holding = true;
          a.dir = {};
          break;
        }
      }
    }

    snapshot.clear();
    for (const auto& a : active) snapshot.push_back(a.p);
    std::vector<Vec2> moves(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      const OracleAgent& a = active[i];
      if (a.holding) continue;
      Vec2 v = a.speed * a.dir;
      // Keep right of oncoming walkers.
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (j == i || active[j].holding || dot(active[j].dir, a.dir) > -0.5) continue;
        const Vec2 r = snapshot[j] - a.p;
        if (norm(r) < cfg.side_range && dot(r, a.dir) > 0.0 && std::abs(cross(a.dir, r)) < 1.0) {
          v += cfg.side_speed * (-perp(a.dir));
          break;
        }
      }
      others.clear();
      for (std::size_t j = 0; j < active.size(); ++j)
        if (j != i) others.push_back(snapshot[j]);
      const Vec2 push = avoidance(a.p, others, frame_avoid, &rng);
      moves[i] = clamp_norm(v * dt + push, cfg.max_speed * dt);
    }
    for (std::size_t i = 0; i < active.size(); ++i) active[i].p += moves[i];
  }
  return out;
}

}  // namespace pedflow::dataset
