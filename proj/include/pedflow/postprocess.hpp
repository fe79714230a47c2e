#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedflow/avoidance.hpp"
#include "pedflow/dataset.hpp"
#include "pedflow/features.hpp"
#include "pedflow/nn/model.hpp"
#include "pedflow/polygon.hpp"
#include "pedflow/scenario.hpp"
#include "pedflow/trajectory.hpp"

namespace pedflow::post {

inline constexpr double kBridgeStep = 0.2;  // s between bridge points

/// Rolls a trajectory forward from its last record.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// `steps` future positions at 0.2 s spacing after `traj`'s last record.
  virtual std::vector<Vec2> rollout(const Trajectory& traj, int steps) = 0;
};

/// Continues the last observed velocity.
class ConstantVelocityPredictor final : public Predictor {
 public:
  std::vector<Vec2> rollout(const Trajectory& traj, int steps) override;
};

/// Feeds the trajectory's last window to the network and iterates its
/// displacement and edge predictions. Neighbours come from `scene`, which
/// must outlive the predictor; fragments that start after the rolled-out
/// trajectory ends are not neighbours, since one of them may be its own
/// continuation. Trajectories that cannot be featurized
/// (too short, or no route-consistent labels) fall back to constant velocity.
class ModelPredictor final : public Predictor {
 public:
  ModelPredictor(const nn::ModelParams& params, const Scenario& scenario, const FlowRoute& route,
                 const features::FeatureConfig& fc, const std::vector<Trajectory>& scene);
  std::vector<Vec2> rollout(const Trajectory& traj, int steps) override;
  int fallbacks() const { return fallbacks_; }

  /// Each predicted step adds the avoidance push from the scene's agents at
  /// that frame, capped like a simulation step. Reset to predict with the
  /// network's displacement alone.
  std::optional<AvoidanceParams> avoidance = AvoidanceParams{};

 private:
  const nn::ModelParams& params_;
  const Scenario& scenario_;
  const FlowRoute& route_;
  features::FeatureConfig fc_;
  std::vector<Trajectory> scene5_;
  dataset::SceneIndex index_;
  nn::ForwardCache cache_;
  ConstantVelocityPredictor fallback_;
  int fallbacks_ = 0;
};

struct ConnectionConfig {
  /// Throws InvalidConfig unless n_pred >= 1 and delta > 0.
  ConnectionConfig(int n_pred, double delta);

  int n_pred;
  double delta;                // m
  double time_slack = 2.0;     // s beyond n_pred * 0.2 a candidate may start
  double rescale_window = 1.0; // s, bridge timestamps are fitted below this mismatch
  /// s; when finite, a predicted point k steps ahead only matches a start
  /// within this of t_end + 0.2 k. The default keeps the distance-only test.
  double arrival_tolerance = std::numeric_limits<double>::infinity();
};

/// Membership used to pick a flow's trajectories: explicit flow id, otherwise
/// dataset::infer_flow.
bool flow_member(const Trajectory& traj, const Scenario& scenario, const FlowRoute& route);

struct Connection {
  int head_id = 0;   // trajectory the chain started from
  int tail_id = 0;   // trajectory appended
  int bridge_points = 0;
};

struct ConnectionResult {
  std::vector<Trajectory> trajectories;
  std::vector<Connection> connections;
};

/// Gap stitching: every flow member is extended by the predictor up to n_pred
/// steps; the first predicted point within delta of an unconsumed member's
/// start (nearest, then earliest start) splices the bridge and that member,
/// and the search resumes from the new end. Non-members pass through. Output
/// keeps the input order of chain heads.
ConnectionResult connect_trajectories(const std::vector<Trajectory>& trajs, const ConnectionConfig& cfg,
                                      const Scenario& scenario, const FlowRoute& route, Predictor& predictor);

struct CrowdFrame {
  double t = 0.0;
  int count = 0;
  std::optional<double> mean_speed;  // absent when count = 0
};

using CrowdSeries = std::vector<CrowdFrame>;

/// Speed of each record: central difference, one-sided at the ends, 0 for a
/// single record.
std::vector<double> record_speeds(const Trajectory& traj);

/// Per-frame count and mean speed of agents inside `region`. Frames cover
/// [t0, t1] when a range is given, otherwise the span of the input. Throws
/// EmptyRegion for a polygon with fewer than 3 vertices or zero area.
CrowdSeries crowd_metrics(const std::vector<Trajectory>& trajs, const Polygon& region, double frame_rate = 5.0,
                          std::optional<std::pair<double, double>> range = std::nullopt);

struct RmseResult {
  std::optional<double> value;  // absent when every pair was excluded
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// Throws LengthMismatch for different or zero lengths.
RmseResult rmse(std::span<const double> a, std::span<const double> b);
/// Pairs where either side is absent are excluded and counted.
RmseResult rmse(std::span<const std::optional<double>> a, std::span<const std::optional<double>> b);

std::vector<double> counts_of(const CrowdSeries& s);
std::vector<std::optional<double>> speeds_of(const CrowdSeries& s);

struct LaneConfig {
  double strip_width = 1.0;  // m across the region's lateral axis
  double frame_rate = 5.0;
};

/// Lateral unit axis of a region: perpendicular to its longest edge.
Vec2 lateral_axis(const Polygon& region);

/// Band segregation of two opposing flows inside `region`, averaged over the
/// frames where anyone is inside: sum over strips |n1 - n2| / total. Throws
/// EmptyRegion when either flow never enters the region.
double lane_index(const std::vector<Trajectory>& flow_a, const std::vector<Trajectory>& flow_b, const Polygon& region,
                  const LaneConfig& cfg = {});

/// Same index after randomly permuting flow labels among the agents inside
/// the region in each frame (counts per flow kept).
double lane_index_shuffled(const std::vector<Trajectory>& flow_a, const std::vector<Trajectory>& flow_b,
                           const Polygon& region, std::uint64_t seed, const LaneConfig& cfg = {});

struct PlotSeries {
  std::string label;
  std::vector<double> t;
  std::vector<std::optional<double>> y;
};

/// Line plot of series against time with red phases (s < 0.5) shaded.
std::string series_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label,
                       const SignalSchedule* schedule);

/// Top view of trajectories coloured by flow, with the crosswalk and node regions.
std::string trajectories_svg(const std::vector<Trajectory>& trajs, const Scenario& scenario);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pedflow::post
