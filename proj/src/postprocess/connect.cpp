#include <algorithm>
#include <cmath>
#include <deque>

#include "pedflow/error.hpp"
#include "pedflow/postprocess.hpp"

namespace pedflow::post {

namespace {

std::vector<Trajectory> resample_scene(const std::vector<Trajectory>& scene) {
  std::vector<Trajectory> out;
  out.reserve(scene.size());
  for (const auto& traj : scene) {
    try {
      out.push_back(traj.size() >= 2 ? dataset::resample_5fps(traj) : traj);
    } catch (const Error&) {
      out.push_back(traj);
    }
  }
  return out;
}

bool labels_follow_route(const Trajectory& traj, const GraphSpec& graph, const FlowRoute& route) {
  int prev = -1;
  for (const auto& r : traj.records) {
    if (r.edge < 0) return false;
    const int pos = route.position(graph.edges()[static_cast<std::size_t>(r.edge)]);
    if (pos < 0 || (prev >= 0 && !route_transition_allowed(route, prev, pos))) return false;
    prev = pos;
  }
  return !traj.empty();
}

// Scene positions at `frame` other than the agent's own (matched by position).
// Fragments starting after `cutoff` may be the agent's own continuation and
// are left out.
std::vector<Vec2> neighbors_without(const dataset::SceneIndex& index, const std::vector<Trajectory>& scene, long frame,
                                    Vec2 self, double cutoff) {
  std::vector<Vec2> out;
  bool skipped = false;
  for (const auto& [i, p] : index.entries_at(frame)) {
    if (scene[i].start_time() > cutoff + 1e-9) continue;
    if (!skipped && p.x == self.x && p.y == self.y) {
      skipped = true;
      continue;
    }
    out.push_back(p);
  }
  return out;
}
}  // namespace

ConnectionConfig::ConnectionConfig(int n_pred_, double delta_) : n_pred(n_pred_), delta(delta_) {
  if (n_pred < 1) throw Error(ErrorCode::InvalidConfig, "N_pred must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw Error(ErrorCode::InvalidConfig, "delta must be positive");
}

std::vector<Vec2> ConstantVelocityPredictor::rollout(const Trajectory& traj, int steps) {
  std::vector<Vec2> out;
  if (traj.empty()) return out;
  const auto& r = traj.records;
  const Vec2 last = r.back().p;
  Vec2 v;
  if (r.size() >= 2) {
    const double dt = r.back().t - r[r.size() - 2].t;
    if (dt > 0.0) v = (last - r[r.size() - 2].p) * (1.0 / dt);
  }
  for (int k = 1; k <= steps; ++k) out.push_back(last + v * (kBridgeStep * k));
  return out;
}

ModelPredictor::ModelPredictor(const nn::ModelParams& params, const Scenario& scenario, const FlowRoute& route,
                               const features::FeatureConfig& fc, const std::vector<Trajectory>& scene)
    : params_(params), scenario_(scenario), route_(route), fc_(fc), scene5_(resample_scene(scene)), index_(scene5_) {
  cache_.memoize_bird = true;
}

std::vector<Vec2> ModelPredictor::rollout(const Trajectory& traj, int steps) {
  const GraphSpec& graph = scenario_.graph;
  Trajectory hist;
  try {
    if (traj.size() < 2) throw Error(ErrorCode::InsufficientHistory, "single record");
    hist = dataset::resample_5fps(traj);
    if (!labels_follow_route(hist, graph, route_))
      hist = dataset::annotate_edges(hist, graph, route_, scenario_.schedule, {.allow_partial = true});
  } catch (const Error&) {
    ++fallbacks_;
    return fallback_.rollout(traj, steps);
  }

  features::FeatureContext ctx;
  ctx.graph = &graph;
  ctx.route = &route_;
  ctx.schedule = &scenario_.schedule;
  ctx.raster = scenario_.raster.get();
  ctx.config = fc_;
  const auto window = static_cast<std::size_t>(fc_.window);

  const double cutoff = hist.end_time();
  std::vector<Vec2> out;
  try {
    std::deque<features::StepRecord> recs;
    const std::size_t first = hist.size() > window ? hist.size() - window : 0;
    for (std::size_t i = first; i < hist.size(); ++i) {
      const auto& r = hist.records[i];
      recs.push_back(features::compute_step(ctx, hist, i, neighbors_without(index_, scene5_, dataset::lattice_frame(r.t), r.p, cutoff)));
    }
    int pos = route_.position(graph.edges()[static_cast<std::size_t>(hist.records.back().edge)]);
    std::vector<const features::StepRecord*> ptrs;
    for (int k = 0; k < steps; ++k) {
      const std::size_t last = hist.size() - 1;
      ptrs.assign(last + 1, nullptr);
      const std::size_t lo = last + 1 - recs.size();
      for (std::size_t j = 0; j < recs.size(); ++j) ptrs[lo + j] = &recs[j];
      const features::Sample sample = features::assemble_sample(ctx, hist, last, ptrs);
      const nn::Prediction& pred = nn::forward(params_, sample, cache_);
      const int next = route_.position(graph.edges()[static_cast<std::size_t>(pred.argmax_edge())]);
      if (next >= 0 && next != pos && route_transition_allowed(route_, pos, next)) pos = next;
      const auto& r = hist.records.back();
      Vec2 step = pred.delta_p;
      if (avoidance) {
        const auto others = neighbors_without(index_, scene5_, dataset::lattice_frame(r.t), r.p, cutoff);
        step = clamp_norm(step + pedflow::avoidance(r.p, others, *avoidance), avoidance->max_step);
      }
      const TrajectoryRecord rec{r.t + kBridgeStep, r.p + step,
                                 graph.edge_index(route_.edges[static_cast<std::size_t>(pos)])};
      hist.records.push_back(rec);
      out.push_back(rec.p);
      recs.push_back(features::compute_step(ctx, hist, hist.size() - 1,
                                            neighbors_without(index_, scene5_, dataset::lattice_frame(rec.t), rec.p, cutoff)));
      if (recs.size() > window) recs.pop_front();
    }
  } catch (const Error&) {
    ++fallbacks_;
    return fallback_.rollout(traj, steps);
  }
  return out;
}

bool flow_member(const Trajectory& traj, const Scenario& scenario, const FlowRoute& route) {
  if (traj.flow_id >= 0) return traj.flow_id == route.flow_id;
  return dataset::infer_flow(traj, scenario) == route.flow_id;
}

ConnectionResult connect_trajectories(const std::vector<Trajectory>& trajs, const ConnectionConfig& cfg,
                                      const Scenario& scenario, const FlowRoute& route, Predictor& predictor) {
  if (!(cfg.arrival_tolerance >= 0.0)) throw Error(ErrorCode::InvalidConfig, "arrival tolerance must be >= 0");
  const std::size_t n = trajs.size();
  std::vector<char> member(n, 0), consumed(n, 0);
  for (std::size_t i = 0; i < n; ++i) member[i] = !trajs[i].empty() && flow_member(trajs[i], scenario, route);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (trajs[a].empty() || trajs[b].empty()) return !trajs[a].empty() && trajs[b].empty();
    return trajs[a].start_time() < trajs[b].start_time();
  });

  ConnectionResult result;
  std::vector<std::optional<Trajectory>> chains(n);
  const double horizon = cfg.n_pred * kBridgeStep + cfg.time_slack;
  for (const std::size_t head : order) {
    if (!member[head] || consumed[head]) continue;
    consumed[head] = 1;
    Trajectory chain = trajs[head];
    for (;;) {
      const std::vector<Vec2> pred = predictor.rollout(chain, cfg.n_pred);
      const double t_end = chain.end_time();
      std::size_t best = n;
      int best_k = 0;
      double best_d = 0.0;
      for (int k = 1; k <= static_cast<int>(pred.size()) && best == n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
          if (!member[j] || consumed[j]) continue;
          const double start = trajs[j].start_time();
          if (start < t_end - 1e-9 || start > t_end + horizon + 1e-9) continue;
          if (std::abs(start - (t_end + k * kBridgeStep)) > cfg.arrival_tolerance) continue;
          const double d = norm(pred[static_cast<std::size_t>(k - 1)] - trajs[j].records.front().p);
          if (d > cfg.delta) continue;
          if (best == n || d < best_d || (d == best_d && start < trajs[best].start_time())) {
            best = j;
            best_d = d;
            best_k = k;
          }
        }
      }
      if (best == n) break;

      const Trajectory& tail = trajs[best];
      const double t_start = tail.start_time();
      const double arrival = t_end + best_k * kBridgeStep;
      const bool rescale = std::abs(t_start - arrival) < cfg.rescale_window;
      const int edge = chain.records.back().edge;
      int bridged = 0;
      for (int i = 1; i < best_k; ++i) {
        const double t = rescale ? t_end + (t_start - t_end) * i / best_k : t_end + i * kBridgeStep;
        if (t >= t_start - 1e-9) break;
        chain.records.push_back({t, pred[static_cast<std::size_t>(i - 1)], edge});
        ++bridged;
      }
      chain.records.insert(chain.records.end(), tail.records.begin(), tail.records.end());
      chain.status = tail.status;
      consumed[best] = 1;
      result.connections.push_back({trajs[head].agent_id, tail.agent_id, bridged});
    }
    chains[head] = std::move(chain);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (chains[i]) result.trajectories.push_back(std::move(*chains[i]));
    else if (!consumed[i]) result.trajectories.push_back(trajs[i]);
  }
  return result;
}

}  // namespace pedflow::post
