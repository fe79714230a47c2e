#include "pedflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pedflow/error.hpp"

namespace pedflow::features {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

int sector_of(double local_angle, int sectors) {
  const double width = kTwoPi / sectors;
  // Shift by half a sector so that sector 0 straddles the heading.
  const int s = static_cast<int>(std::floor(wrap_angle(local_angle + 0.5 * width) / width));
  return std::min(s, sectors - 1);
}

}  // namespace

OccupancyMap occupancy(Vec2 center, double heading, std::span<const Vec2> neighbors,
                       const FeatureConfig& cfg) {
  OccupancyMap map{cfg.rings, cfg.sectors,
                   std::vector<int>(static_cast<std::size_t>(cfg.occupancy_cells()), 0)};
  const double outer = cfg.outer_radius();
  for (const Vec2 n : neighbors) {
    const Vec2 r = n - center;
    const double d = norm(r);
    if (d > outer) continue;
    // Ring k holds distances in (k * spacing, (k + 1) * spacing].
    const int ring = std::clamp(static_cast<int>(std::ceil(d / cfg.ring_spacing)) - 1, 0, cfg.rings - 1);
    const int sector = sector_of(std::atan2(r.y, r.x) - heading, cfg.sectors);
    ++map.counts[static_cast<std::size_t>(ring * cfg.sectors + sector)];
  }
  return map;
}

BirdMap bird_map(Vec2 center, double heading, const Raster* raster, const FeatureConfig& cfg) {
  if (raster == nullptr || raster->empty()) throw Error(ErrorCode::RasterMissing, "no environment raster loaded");
  const int n = cfg.bird_size;
  const double m = cfg.bird_meters_per_cell;
  const Vec2 fwd{std::cos(heading), std::sin(heading)};
  const Vec2 left = perp(fwd);
  const double half = 0.5 * (n - 1);
  BirdMap out{n, m, std::vector<float>(static_cast<std::size_t>(n) * n)};
  for (int i = 0; i < n; ++i) {
    const double f = (half - i) * m;
    for (int j = 0; j < n; ++j) {
      const double l = (half - j) * m;
      const double v = raster->sample(center + f * fwd + l * left);
      out.grid[static_cast<std::size_t>(i) * n + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::vector<Vec2> relative_positions(Vec2 p, const GraphSpec& graph) {
  std::vector<Vec2> out;
  out.reserve(graph.node_count());
  for (const Node& node : graph.nodes()) out.push_back(node.anchor - p);
  return out;
}

double heading_at(const FeatureContext& ctx, const Trajectory& traj, std::size_t i) {
  const auto& rec = traj.records;
  const std::size_t lowest = i + 1 >= static_cast<std::size_t>(ctx.config.window)
                                 ? i + 1 - static_cast<std::size_t>(ctx.config.window)
                                 : 0;
  for (std::size_t j = i; j > lowest; --j) {
    const Vec2 d = rec[j].p - rec[j - 1].p;
    if (norm(d) > ctx.config.min_heading_displacement) return std::atan2(d.y, d.x);
  }
  std::size_t k = 0;
  if (rec[i].edge >= 0) {
    const int pos = ctx.route->position(ctx.graph->edges()[static_cast<std::size_t>(rec[i].edge)]);
    if (pos >= 0) k = static_cast<std::size_t>(pos);
  }
  const Vec2 to_target = ctx.graph->node(ctx.route->heading_node(k)).anchor - rec[i].p;
  if (norm2(to_target) == 0.0) return 0.0;
  return std::atan2(to_target.y, to_target.x);
}

StepRecord compute_step(const FeatureContext& ctx, const Trajectory& traj, std::size_t i,
                        std::span<const Vec2> neighbors) {
  const TrajectoryRecord& r = traj.records[i];
  const double heading = heading_at(ctx, traj, i);
  StepRecord step;
  step.rel = relative_positions(r.p, *ctx.graph);
  const OccupancyMap occ = occupancy(r.p, heading, neighbors, ctx.config);
  step.occupancy.assign(occ.counts.begin(), occ.counts.end());
  const BirdMap bird = bird_map(r.p, heading, ctx.raster, ctx.config);
  step.bird.resize(bird.grid.size());
  for (std::size_t c = 0; c < bird.grid.size(); ++c)
    step.bird[c] = static_cast<std::uint8_t>(std::lround(static_cast<double>(bird.grid[c]) * 255.0));
  step.edge = r.edge;
  step.signal = signal_state(*ctx.schedule, r.t);
  return step;
}

std::vector<int> edge_history(const FeatureContext& ctx, const Trajectory& traj, std::size_t t) {
  std::vector<int> hist;
  const auto& edges = ctx.graph->edges();
  for (std::size_t i = 0; i <= t; ++i) {
    const int e = traj.records[i].edge;
    if (e < 0 || (!hist.empty() && hist.back() == e)) continue;
    if (!hist.empty() && edges[static_cast<std::size_t>(hist.back())].to != edges[static_cast<std::size_t>(e)].from)
      throw Error(ErrorCode::InvalidTrajectory,
                  "agent " + std::to_string(traj.agent_id) + ": edge labels do not chain (" +
                      edge_label(edges[static_cast<std::size_t>(hist.back())]) + " -> " +
                      edge_label(edges[static_cast<std::size_t>(e)]) + ")");
    hist.push_back(e);
  }
  const auto cap = static_cast<std::size_t>(ctx.config.max_history);
  if (hist.size() > cap) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(cap));
  return hist;
}

Sample assemble_sample(const FeatureContext& ctx, const Trajectory& traj, std::size_t t,
                       std::span<const StepRecord* const> steps) {
  const FeatureConfig& cfg = ctx.config;
  const int n = cfg.window;
  const int nodes = static_cast<int>(ctx.graph->node_count());
  Sample s;
  LocalWindow& w = s.local;
  w.steps = n;
  w.nodes = nodes;
  w.occupancy_cells = cfg.occupancy_cells();
  w.bird_cells = cfg.bird_cells();
  w.rel_pos.reserve(static_cast<std::size_t>(n) * nodes * 2);
  w.occupancy.reserve(static_cast<std::size_t>(n) * w.occupancy_cells);
  w.bird.reserve(static_cast<std::size_t>(n) * w.bird_cells);
  for (int k = 0; k < n; ++k) {
    const long j = static_cast<long>(t) - (n - 1) + k;
    const StepRecord& st = *steps[static_cast<std::size_t>(std::max(j, 0L))];
    if (st.rel.size() != static_cast<std::size_t>(nodes) ||
        st.occupancy.size() != static_cast<std::size_t>(w.occupancy_cells) ||
        st.bird.size() != static_cast<std::size_t>(w.bird_cells))
      throw Error(ErrorCode::ShapeMismatch, "step record does not match the feature configuration");
    for (const Vec2 r : st.rel) {
      w.rel_pos.push_back(r.x);
      w.rel_pos.push_back(r.y);
    }
    w.occupancy.insert(w.occupancy.end(), st.occupancy.begin(), st.occupancy.end());
    w.bird.insert(w.bird.end(), st.bird.begin(), st.bird.end());
    w.edge.push_back(static_cast<std::int16_t>(st.edge));
    w.signal.push_back(st.signal);
    w.valid.push_back(j >= 0 ? 1 : 0);
  }

  const auto goal = ctx.graph->node_index(ctx.route->goal);
  if (!goal) throw Error(ErrorCode::InvalidScenario, "route goal is not a graph node");
  s.global.goal = static_cast<int>(*goal);
  s.global.edge_history = edge_history(ctx, traj, t);

  const TrajectoryRecord& cur = traj.records[t];
  s.agent_id = traj.agent_id;
  s.flow_id = traj.flow_id;
  s.time = cur.t;
  s.current_edge = cur.edge;
  if (t + 1 < traj.records.size()) {
    const TrajectoryRecord& next = traj.records[t + 1];
    s.target_delta = next.p - cur.p;
    s.target_edge = next.edge;
    if (!std::isfinite(s.target_delta.x) || !std::isfinite(s.target_delta.y) || norm(s.target_delta) > 1.0)
      throw Error(ErrorCode::InvalidTrajectory,
                  "agent " + std::to_string(traj.agent_id) + ": step displacement exceeds 1 m at t=" +
                      std::to_string(cur.t));
    if (next.edge < 0 || static_cast<std::size_t>(next.edge) >= ctx.graph->edge_count())
      throw Error(ErrorCode::InvalidTrajectory,
                  "agent " + std::to_string(traj.agent_id) + ": unlabeled target edge");
  }
  return s;
}

Sample build_sample(const FeatureContext& ctx, const Trajectory& traj, std::size_t t,
                    std::span<const std::vector<Vec2>> neighbors_at_each_step) {
  if (traj.records.empty()) throw Error(ErrorCode::InsufficientHistory, "trajectory has no records");
  if (t >= traj.records.size()) throw Error(ErrorCode::InsufficientHistory, "sample time beyond trajectory");
  if (neighbors_at_each_step.size() < t + 1)
    throw Error(ErrorCode::ShapeMismatch, "neighbour list shorter than the trajectory");
  const std::size_t first = t + 1 >= static_cast<std::size_t>(ctx.config.window)
                                ? t + 1 - static_cast<std::size_t>(ctx.config.window)
                                : 0;
  std::vector<StepRecord> records(t + 1);
  std::vector<const StepRecord*> ptrs(t + 1, nullptr);
  for (std::size_t i = first; i <= t; ++i) {
    records[i] = compute_step(ctx, traj, i, neighbors_at_each_step[i]);
    ptrs[i] = &records[i];
  }
  return assemble_sample(ctx, traj, t, ptrs);
}

void drop_history(LocalWindow& w) {
  if (w.steps < 2) return;
  const auto last = static_cast<std::size_t>(w.steps - 1);
  auto fill = [last](auto& v, std::size_t width) {
    for (std::size_t k = 0; k < last; ++k)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(last * width), width, v.begin() + static_cast<std::ptrdiff_t>(k * width));
  };
  fill(w.rel_pos, static_cast<std::size_t>(w.nodes) * 2);
  fill(w.occupancy, static_cast<std::size_t>(w.occupancy_cells));
  fill(w.bird, static_cast<std::size_t>(w.bird_cells));
  fill(w.edge, 1);
  fill(w.signal, 1);
  std::fill(w.valid.begin(), w.valid.end() - 1, 0);
}

}  // namespace pedflow::features
