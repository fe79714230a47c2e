#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pedflow/error.hpp"
#include "pedflow/postprocess.hpp"
#include "pedflow/random.hpp"

namespace pedflow::post {

namespace {

void check_region(const Polygon& region) {
  if (region.size() < 3 || std::abs(signed_area(region)) < 1e-12)
    throw Error(ErrorCode::EmptyRegion, "region needs at least 3 vertices and a nonzero area");
}

long frame_of(double t, double rate) { return std::lround(t * rate); }

// Agent index and position of everyone inside the region, per frame; an
// agent counts once per frame.
using Occupants = std::map<long, std::vector<std::pair<std::size_t, Vec2>>>;

Occupants occupants(const std::vector<const Trajectory*>& trajs, const Polygon& region, double rate) {
  Occupants out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    long last = std::numeric_limits<long>::min();
    for (const auto& r : trajs[i]->records) {
      const long f = frame_of(r.t, rate);
      if (f == last) continue;
      last = f;
      if (point_in_polygon(region, r.p)) out[f].emplace_back(i, r.p);
    }
  }
  return out;
}

double segregation(const std::vector<std::pair<int, double>>& members, double strip_width, double lo) {
  std::map<long, std::pair<int, int>> strips;
  for (const auto& [flow, u] : members) {
    auto& s = strips[static_cast<long>(std::floor((u - lo) / strip_width))];
    (flow == 0 ? s.first : s.second) += 1;
  }
  double diff = 0.0;
  for (const auto& [k, s] : strips) diff += std::abs(s.first - s.second);
  return diff / static_cast<double>(members.size());
}

double lane_index_impl(const std::vector<Trajectory>& flow_a, const std::vector<Trajectory>& flow_b,
                       const Polygon& region, const LaneConfig& cfg, Rng* shuffle) {
  check_region(region);
  if (!(cfg.strip_width > 0.0) || !(cfg.frame_rate > 0.0))
    throw Error(ErrorCode::InvalidConfig, "strip width and frame rate must be positive");
  std::vector<const Trajectory*> all;
  for (const auto& t : flow_a) all.push_back(&t);
  for (const auto& t : flow_b) all.push_back(&t);
  const Occupants occ = occupants(all, region, cfg.frame_rate);
  bool seen_a = false, seen_b = false;
  for (const auto& [f, list] : occ)
    for (const auto& [i, p] : list) (i < flow_a.size() ? seen_a : seen_b) = true;
  if (!seen_a || !seen_b) throw Error(ErrorCode::EmptyRegion, "both flows must enter the region");

  const Vec2 axis = lateral_axis(region);
  double lo = std::numeric_limits<double>::infinity();
  for (const Vec2 v : region) lo = std::min(lo, dot(v, axis));
  double total = 0.0;
  std::vector<std::pair<int, double>> members;
  std::vector<int> labels;
  for (const auto& [f, list] : occ) {
    labels.clear();
    for (const auto& [i, p] : list) labels.push_back(i < flow_a.size() ? 0 : 1);
    if (shuffle) shuffle->shuffle(labels);
    members.clear();
    for (std::size_t k = 0; k < list.size(); ++k) members.emplace_back(labels[k], dot(list[k].second, axis));
    total += segregation(members, cfg.strip_width, lo);
  }
  return total / static_cast<double>(occ.size());
}

}  // namespace

std::vector<double> record_speeds(const Trajectory& traj) {
  const auto& r = traj.records;
  std::vector<double> out(r.size(), 0.0);
  if (r.size() < 2) return out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == r.size() ? i : i + 1;
    const double dt = r[b].t - r[a].t;
    out[i] = dt > 0.0 ? norm(r[b].p - r[a].p) / dt : 0.0;
  }
  return out;
}

CrowdSeries crowd_metrics(const std::vector<Trajectory>& trajs, const Polygon& region, double frame_rate,
                          std::optional<std::pair<double, double>> range) {
  check_region(region);
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "frame rate must be positive");
  long f0 = 0, f1 = -1;
  if (range) {
    f0 = frame_of(range->first, frame_rate);
    f1 = frame_of(range->second, frame_rate);
  } else {
    bool any = false;
    for (const auto& traj : trajs) {
      if (traj.empty()) continue;
      const long a = frame_of(traj.start_time(), frame_rate), b = frame_of(traj.end_time(), frame_rate);
      f0 = any ? std::min(f0, a) : a;
      f1 = any ? std::max(f1, b) : b;
      any = true;
    }
  }
  CrowdSeries out;
  if (f1 < f0) return out;
  const auto frames = static_cast<std::size_t>(f1 - f0 + 1);
  std::vector<int> count(frames, 0);
  std::vector<double> speed(frames, 0.0);
  for (const auto& traj : trajs) {
    const std::vector<double> v = record_speeds(traj);
    long last = std::numeric_limits<long>::min();
    for (std::size_t i = 0; i < traj.records.size(); ++i) {
      const long f = frame_of(traj.records[i].t, frame_rate);
      if (f == last) continue;
      last = f;
      if (f < f0 || f > f1 || !point_in_polygon(region, traj.records[i].p)) continue;
      ++count[static_cast<std::size_t>(f - f0)];
      speed[static_cast<std::size_t>(f - f0)] += v[i];
    }
  }
  out.resize(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    out[k].t = static_cast<double>(f0 + static_cast<long>(k)) / frame_rate;
    out[k].count = count[k];
    if (count[k] > 0) out[k].mean_speed = speed[k] / count[k];
  }
  return out;
}

RmseResult rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::LengthMismatch,
                "series lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return {std::sqrt(sum / static_cast<double>(a.size())), a.size(), 0};
}

RmseResult rmse(std::span<const std::optional<double>> a, std::span<const std::optional<double>> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::LengthMismatch,
                "series lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  RmseResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i] || !b[i]) {
      ++r.excluded;
      continue;
    }
    sum += (*a[i] - *b[i]) * (*a[i] - *b[i]);
    ++r.used;
  }
  if (r.used > 0) r.value = std::sqrt(sum / static_cast<double>(r.used));
  return r;
}

std::vector<double> counts_of(const CrowdSeries& s) {
  std::vector<double> out;
  for (const auto& f : s) out.push_back(f.count);
  return out;
}

std::vector<std::optional<double>> speeds_of(const CrowdSeries& s) {
  std::vector<std::optional<double>> out;
  for (const auto& f : s) out.push_back(f.mean_speed);
  return out;
}

Vec2 lateral_axis(const Polygon& region) {
  check_region(region);
  Vec2 longest;
  double best = -1.0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    const Vec2 e = region[(i + 1) % region.size()] - region[i];
    if (norm(e) > best + 1e-12) {
      best = norm(e);
      longest = e;
    }
  }
  const Vec2 u = normalized(longest);
  return {-u.y, u.x};
}

double lane_index(const std::vector<Trajectory>& flow_a, const std::vector<Trajectory>& flow_b, const Polygon& region,
                  const LaneConfig& cfg) {
  return lane_index_impl(flow_a, flow_b, region, cfg, nullptr);
}

double lane_index_shuffled(const std::vector<Trajectory>& flow_a, const std::vector<Trajectory>& flow_b,
                           const Polygon& region, std::uint64_t seed, const LaneConfig& cfg) {
  Rng rng(seed);
  return lane_index_impl(flow_a, flow_b, region, cfg, &rng);
}

}  // namespace pedflow::post
