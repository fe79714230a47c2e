#include <algorithm>
#include <cmath>

#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"

namespace pedflow::dataset {

long lattice_frame(double t) { return std::lround(t / 0.2); }

SceneIndex::SceneIndex(const std::vector<Trajectory>& scene) : scene_(&scene) {
  long lo = 0, hi = -1;
  bool any = false;
  for (const auto& traj : scene) {
    if (traj.empty()) continue;
    const long a = lattice_frame(traj.start_time()), b = lattice_frame(traj.end_time());
    lo = any ? std::min(lo, a) : a;
    hi = any ? std::max(hi, b) : b;
    any = true;
  }
  first_frame_ = lo;
  frames_.resize(any ? static_cast<std::size_t>(hi - lo + 1) : 0);
  for (std::size_t i = 0; i < scene.size(); ++i)
    for (const auto& r : scene[i].records)
      frames_[static_cast<std::size_t>(lattice_frame(r.t) - lo)].emplace_back(i, r.p);
}

std::vector<Vec2> SceneIndex::neighbors(std::size_t traj, std::size_t record) const {
  return positions_at(lattice_frame((*scene_)[traj].records[record].t), traj);
}

std::vector<Vec2> SceneIndex::positions_at(long frame, std::size_t exclude) const {
  const long f = frame - first_frame_;
  std::vector<Vec2> out;
  if (f < 0 || static_cast<std::size_t>(f) >= frames_.size()) return out;
  for (const auto& [i, p] : frames_[static_cast<std::size_t>(f)])
    if (i != exclude) out.push_back(p);
  return out;
}

std::span<const std::pair<std::size_t, Vec2>> SceneIndex::entries_at(long frame) const {
  const long f = frame - first_frame_;
  if (f < 0 || static_cast<std::size_t>(f) >= frames_.size()) return {};
  return frames_[static_cast<std::size_t>(f)];
}

std::vector<SampleRef> enumerate_samples(const std::vector<Trajectory>& scene, std::uint32_t scene_id) {
  std::vector<SampleRef> refs;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& r = scene[i].records;
    for (std::size_t t = 0; t + 1 < r.size(); ++t)
      refs.push_back({scene_id, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t), r[t].edge != r[t + 1].edge});
  }
  return refs;
}

std::vector<features::Sample> build_samples(const Scenario& scenario, const features::FeatureConfig& fc,
                                            const std::vector<std::vector<Trajectory>>& scenes,
                                            std::span<const SampleRef> refs) {
  std::vector<SceneIndex> index;
  index.reserve(scenes.size());
  for (const auto& scene : scenes) index.emplace_back(scene);
  features::FeatureContext ctx;
  ctx.graph = &scenario.graph;
  ctx.schedule = &scenario.schedule;
  ctx.raster = scenario.raster.get();
  ctx.config = fc;

  std::vector<features::Sample> out;
  out.reserve(refs.size());
  std::vector<features::StepRecord> steps;
  std::vector<const features::StepRecord*> ptrs;
  for (const SampleRef& ref : refs) {
    const Trajectory& traj = scenes.at(ref.scene).at(ref.traj);
    ctx.route = &scenario.flow(traj.flow_id);
    const std::size_t t = ref.t;
    const std::size_t first = t + 1 >= static_cast<std::size_t>(fc.window) ? t + 1 - static_cast<std::size_t>(fc.window) : 0;
    steps.assign(t + 1 - first, {});
    ptrs.assign(t + 1, nullptr);
    for (std::size_t i = first; i <= t; ++i) {
      steps[i - first] = features::compute_step(ctx, traj, i, index[ref.scene].neighbors(ref.traj, i));
      ptrs[i] = &steps[i - first];
    }
    out.push_back(features::assemble_sample(ctx, traj, t, ptrs));
  }
  return out;
}

DatasetBundle prepare_dataset(const Scenario& scenario, const features::FeatureConfig& fc,
                              const std::vector<std::vector<Trajectory>>& scenes, std::uint64_t seed,
                              double validation_fraction) {
  std::vector<std::vector<Trajectory>> processed(scenes.size());
  std::vector<SampleRef> refs;
  std::size_t skipped = 0, agents = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::vector<std::uint8_t> eligible;
    for (const Trajectory& raw : scenes[s]) {
      Trajectory traj = raw;
      if (traj.flow_id < 0) traj.flow_id = infer_flow(traj, scenario);
      bool ok = traj.flow_id >= 0 && traj.size() >= 2;
      const bool unlabeled = std::any_of(traj.records.begin(), traj.records.end(),
                                         [](const TrajectoryRecord& r) { return r.edge < 0; });
      if (ok && unlabeled) {
        try {
          traj = annotate_edges(traj, scenario.graph, scenario.flow(traj.flow_id), scenario.schedule);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::RouteMismatch) throw;
          ok = false;
        }
      }
      if (traj.size() >= 2) traj = resample_5fps(traj);
      ok = ok && traj.size() >= 2;
      processed[s].push_back(std::move(traj));
      eligible.push_back(ok ? 1 : 0);
      ++agents;
      if (!ok) ++skipped;
    }
    for (const SampleRef& r : enumerate_samples(processed[s], static_cast<std::uint32_t>(s)))
      if (eligible[r.traj]) refs.push_back(r);
  }

  std::vector<std::uint8_t> flags(refs.size());
  std::size_t transitions = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    flags[i] = refs[i].transition ? 1 : 0;
    transitions += flags[i];
  }
  std::vector<SampleRef> chosen;
  for (const std::size_t i : negative_downsample_indices(flags, seed)) chosen.push_back(refs[i]);

  DatasetBundle bundle;
  bundle.samples = build_samples(scenario, fc, processed, chosen);
  bundle.split = nn::split_indices(bundle.samples.size(), validation_fraction, seed);
  nlohmann::json sources = nlohmann::json::array();
  for (const SampleRef& r : chosen) sources.push_back({r.scene, processed[r.scene][r.traj].agent_id, r.t});
  bundle.provenance = {{"scenario", scenario.name},
                       {"scenario_hash", std::to_string(scenario.hash)},
                       {"seed", seed},
                       {"validation_fraction", validation_fraction},
                       {"features", feature_config_to_json(fc)},
                       {"nodes", scenario.graph.node_count()},
                       {"edges", scenario.graph.edge_count()},
                       {"scenes", scenes.size()},
                       {"agents", agents},
                       {"agents_skipped", skipped},
                       {"candidate_samples", refs.size()},
                       {"candidate_transitions", transitions},
                       {"sources", sources}};
  return bundle;
}

}  // namespace pedflow::dataset
