#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedflow/avoidance.hpp"
#include "pedflow/features.hpp"
#include "pedflow/nn/train.hpp"
#include "pedflow/scenario.hpp"
#include "pedflow/trajectory.hpp"

namespace pedflow::dataset {

inline constexpr double kMaxSpeed = 4.0;  // m/s, trajectory sanity bound

/// Throws InvalidTrajectory unless timestamps strictly increase, coordinates
/// are finite and every step is slower than kMaxSpeed.
void validate_trajectory(const Trajectory& traj);

/// CSV `t,id,x,y[,edge]`; edge is a token like "1:2" or empty. Rows are
/// grouped by id (ascending); records keep file order.
std::vector<Trajectory> read_trajectories_csv(const std::filesystem::path& path, const GraphSpec& graph);
void write_trajectories_csv(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                            const GraphSpec& graph);

/// Flow whose route contains the trajectory's first labeled edge. Unlabeled
/// trajectories take the flow whose origin-to-goal axis best matches their
/// net displacement. -1 when neither decides.
int infer_flow(const Trajectory& traj, const Scenario& scenario);

struct AnnotationConfig {
  double speed_threshold = 0.2;  // m/s, below this an agent dwells
  double green_threshold = 0.5;  // signal value that releases a dwell
  bool allow_partial = false;    // label fragments that stop before node 2
};

/// Labels every record with the route edge the agent occupies. Progress only
/// moves forward along the route:
///  - on a travel edge into node b, entering b's region advances to the next
///    edge; if that is a loop edge at b, the agent moves onto it only when it
///    is slower than the threshold during red, and skips it when s >= 0.5;
///  - a loop edge is left when s >= 0.5 or the agent leaves the region.
/// Throws RouteMismatch when the agent never enters the region of the
/// route's second node, unless cfg.allow_partial.
Trajectory annotate_edges(const Trajectory& traj, const GraphSpec& graph, const FlowRoute& route,
                          const SignalSchedule& schedule, const AnnotationConfig& cfg = {});

/// Keeps the record nearest to each point of a 0.2 s lattice anchored at the
/// first timestamp (earlier record on ties). Throws RateTooLow when the mean
/// input rate is below 5 FPS.
Trajectory resample_5fps(const Trajectory& traj);

/// Indices into the input that balance transition and non-transition
/// entries (larger group subsampled without replacement), in seeded shuffled
/// order. Throws NoTransitions.
std::vector<std::size_t> negative_downsample_indices(std::span<const std::uint8_t> is_transition, std::uint64_t seed);
std::vector<features::Sample> negative_downsample(const std::vector<features::Sample>& samples, std::uint64_t seed);

struct OracleConfig {
  double fps = 30.0;
  double speed_mean = 1.34;
  double speed_sd = 0.26;
  double speed_min = 0.5;
  double speed_max = 2.2;
  double green_threshold = 0.5;
  double queue_distance = 1.2;   // stop behind a holding agent this close ahead
  double side_range = 3.0;       // oncoming agents within this range trigger a sidestep
  double side_speed = 0.3;       // m/s to the right
  double max_speed = 3.0;        // m/s, total
  double timeout = 300.0;        // s after spawn
  double start_time = 0.0;       // clock at the first frame
  AvoidanceParams avoidance;     // per 0.2 s step; rescaled to the frame rate
};

void to_json(nlohmann::json& j, const OracleConfig& c);

/// Rule-based crowd on the scenario's routes, recorded at cfg.fps. Each flow
/// spawns every spawn_interval seconds from its offset until n_agents agents
/// exist in total; the run continues until every agent arrived or timed out.
/// Trajectories are unlabeled; flow_id and status are set.
std::vector<Trajectory> generate_synthetic(const Scenario& scenario, int n_agents, std::uint64_t seed,
                                           const OracleConfig& cfg = {});

/// Positions of all agents per 0.2 s lattice frame, for neighbour lookup.
class SceneIndex {
 public:
  explicit SceneIndex(const std::vector<Trajectory>& scene);
  /// Positions of every other agent recorded at the same lattice time.
  std::vector<Vec2> neighbors(std::size_t traj, std::size_t record) const;
  /// Positions recorded at lattice frame `frame`, skipping trajectory `exclude`.
  std::vector<Vec2> positions_at(long frame, std::size_t exclude) const;
  /// (trajectory index, position) pairs recorded at lattice frame `frame`.
  std::span<const std::pair<std::size_t, Vec2>> entries_at(long frame) const;

 private:
  const std::vector<Trajectory>* scene_;
  long first_frame_ = 0;
  std::vector<std::vector<std::pair<std::size_t, Vec2>>> frames_;
};

long lattice_frame(double t);

struct SampleRef {
  std::uint32_t scene = 0;
  std::uint32_t traj = 0;
  std::uint32_t t = 0;
  bool transition = false;
};

/// One reference per record with a successor (length - 1 per trajectory).
std::vector<SampleRef> enumerate_samples(const std::vector<Trajectory>& scene, std::uint32_t scene_id = 0);

/// Builds full samples for the given references. Trajectories must be
/// labeled and on the 0.2 s lattice.
std::vector<features::Sample> build_samples(const Scenario& scenario, const features::FeatureConfig& fc,
                                            const std::vector<std::vector<Trajectory>>& scenes,
                                            std::span<const SampleRef> refs);

nlohmann::json feature_config_to_json(const features::FeatureConfig& fc);
features::FeatureConfig feature_config_from_json(const nlohmann::json& j);

struct DatasetBundle {
  std::vector<features::Sample> samples;
  nlohmann::json provenance;
  nn::Split split;
};

/// Annotates (unlabeled records only), resamples, enumerates, balances and
/// featurizes. The split is drawn from `seed`.
DatasetBundle prepare_dataset(const Scenario& scenario, const features::FeatureConfig& fc,
                              const std::vector<std::vector<Trajectory>>& scenes, std::uint64_t seed,
                              double validation_fraction = 0.1);

/// Directory layout: samples.bin (binary container "PFSMPL01") and
/// manifest.json (provenance + split).
inline constexpr std::uint32_t kSampleFileVersion = 1;
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace pedflow::dataset
