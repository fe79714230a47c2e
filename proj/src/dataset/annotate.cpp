#include <algorithm>
#include <cmath>

#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"

namespace pedflow::dataset {

namespace {

double speed_at(const Trajectory& traj, std::size_t i) {
  const auto& r = traj.records;
  if (r.size() < 2) return 0.0;
  const std::size_t a = i > 0 ? i - 1 : 0;
  const std::size_t b = i > 0 ? i : 1;
  return norm(r[b].p - r[a].p) / (r[b].t - r[a].t);
}

}  // namespace

Trajectory annotate_edges(const Trajectory& traj, const GraphSpec& graph, const FlowRoute& route,
                          const SignalSchedule& schedule, const AnnotationConfig& cfg) {
  if (route.edges.empty()) throw Error(ErrorCode::InvalidScenario, "route has no edges");
  const NodeId second = route.edges.front().to;
  const bool reaches = std::any_of(traj.records.begin(), traj.records.end(),
                                   [&](const TrajectoryRecord& r) { return graph.inside_region(second, r.p); });
  if (!reaches && !cfg.allow_partial)
    throw Error(ErrorCode::RouteMismatch, "agent " + std::to_string(traj.agent_id) + " never enters the region of node " +
                                              std::to_string(second));
  std::vector<int> index(route.edges.size());
  for (std::size_t k = 0; k < route.edges.size(); ++k) {
    index[k] = graph.edge_index(route.edges[k]);
    if (index[k] < 0) throw Error(ErrorCode::InvalidScenario, edge_label(route.edges[k]) + " is not in the graph");
  }

  Trajectory out = traj;
  out.flow_id = route.flow_id;
  const std::size_t n = route.edges.size();
  std::size_t k = 0;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const Vec2 p = out.records[i].p;
    const bool green = signal_state(schedule, out.records[i].t) >= cfg.green_threshold;
    const double speed = speed_at(out, i);
    // Several edges can be passed within one record (leave a loop, then
    // nothing else); bounded by the route length.
    for (std::size_t guard = 0; guard < n; ++guard) {
      const EdgeRef e = route.edges[k];
      std::size_t next = k;
      if (e.is_loop()) {
        if ((green || !graph.inside_region(e.to, p)) && k + 1 < n) next = k + 1;
      } else if (k + 1 < n && graph.inside_region(e.to, p)) {
        if (!route.edges[k + 1].is_loop()) {
          next = k + 1;
        } else if (green) {
          next = k + 2 < n ? k + 2 : k + 1;
        } else if (speed < cfg.speed_threshold) {
          next = k + 1;
        }
      }
      if (next == k) break;
      k = next;
    }
    out.records[i].edge = index[k];
  }
  return out;
}

Trajectory resample_5fps(const Trajectory& traj) {
  constexpr double kStep = 0.2;
  const auto& r = traj.records;
  if (r.size() < 2) return traj;
  const double span = r.back().t - r.front().t;
  if (static_cast<double>(r.size() - 1) / span < 5.0 - 1e-9)
    throw Error(ErrorCode::RateTooLow, "agent " + std::to_string(traj.agent_id) + " is sampled below 5 FPS");
  Trajectory out = traj;
  out.records.clear();
  const long last = static_cast<long>(std::floor(span / kStep + 1e-9));
  std::size_t j = 0;
  std::size_t prev = r.size();
  for (long m = 0; m <= last; ++m) {
    const double target = r.front().t + kStep * static_cast<double>(m);
    while (j + 1 < r.size() && std::abs(r[j + 1].t - target) < std::abs(r[j].t - target)) ++j;
    if (j == prev) continue;
    out.records.push_back(r[j]);
    prev = j;
  }
  return out;
}

std::vector<std::size_t> negative_downsample_indices(std::span<const std::uint8_t> is_transition, std::uint64_t seed) {
  std::vector<std::size_t> same, moved;
  for (std::size_t i = 0; i < is_transition.size(); ++i) (is_transition[i] ? moved : same).push_back(i);
  if (moved.empty()) throw Error(ErrorCode::NoTransitions, "negative_downsample: no edge transitions in the data");
  Rng rng(seed);
  std::vector<std::size_t>& larger = same.size() >= moved.size() ? same : moved;
  const std::vector<std::size_t>& smaller = same.size() >= moved.size() ? moved : same;
  // Partial Fisher-Yates: a uniform subset of the larger group.
  for (std::size_t i = 0; i < smaller.size(); ++i) std::swap(larger[i], larger[i + rng.index(larger.size() - i)]);
  std::vector<std::size_t> out(smaller.begin(), smaller.end());
  out.insert(out.end(), larger.begin(), larger.begin() + static_cast<std::ptrdiff_t>(smaller.size()));
  rng.shuffle(out);
  return out;
}

std::vector<features::Sample> negative_downsample(const std::vector<features::Sample>& samples, std::uint64_t seed) {
  std::vector<std::uint8_t> flags(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) flags[i] = samples[i].is_transition() ? 1 : 0;
  std::vector<features::Sample> out;
  for (const std::size_t i : negative_downsample_indices(flags, seed)) out.push_back(samples[i]);
  return out;
}

}  // namespace pedflow::dataset
