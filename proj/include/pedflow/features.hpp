#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pedflow/raster.hpp"
#include "pedflow/scenario.hpp"
#include "pedflow/trajectory.hpp"
#include "pedflow/vec2.hpp"

namespace pedflow::features {

struct FeatureConfig {
  int window = 20;            // N past steps
  double dt = 0.2;            // 5 FPS
  int rings = 4;
  int sectors = 8;
  double ring_spacing = 1.0;  // ring k spans ((k) * spacing, (k + 1) * spacing]
  int bird_size = 50;
  double bird_meters_per_cell = 0.2;
  /// Displacements shorter than this do not define a heading.
  double min_heading_displacement = 1e-3;
  int max_history = 8;

  int occupancy_cells() const { return rings * sectors; }
  int bird_cells() const { return bird_size * bird_size; }
  double outer_radius() const { return rings * ring_spacing; }
};

/// Neighbour counts on a polar grid in the agent's heading frame.
/// Index = ring * sectors + sector; sector 0 is centred on the heading and
/// sectors advance counter-clockwise.
struct OccupancyMap {
  int rings = 0;
  int sectors = 0;
  std::vector<int> counts;
};

OccupancyMap occupancy(Vec2 center, double heading, std::span<const Vec2> neighbors,
                       const FeatureConfig& cfg = {});

/// Heading-aligned crop of the environment raster; row 0 is the far end
/// ahead of the agent, column 0 its leftmost side. Values in [0, 1].
struct BirdMap {
  int size = 0;
  double meters_per_cell = 0.0;
  std::vector<float> grid;  // size * size, one channel

  float at(int row, int col) const { return grid[static_cast<std::size_t>(row) * size + col]; }
};

/// Throws RasterMissing when `raster` is null or empty.
BirdMap bird_map(Vec2 center, double heading, const Raster* raster, const FeatureConfig& cfg = {});

/// anchor_k - p for every node, in graph order.
std::vector<Vec2> relative_positions(Vec2 p, const GraphSpec& graph);

/// Fixed-shape, windowed local inputs. Shorter histories are front-padded
/// with the earliest record and flagged invalid.
struct LocalWindow {
  int steps = 0;
  int nodes = 0;
  int occupancy_cells = 0;
  int bird_cells = 0;
  std::vector<double> rel_pos;            // steps * nodes * 2
  std::vector<std::uint16_t> occupancy;   // steps * occupancy_cells
  std::vector<std::uint8_t> bird;         // steps * bird_cells, value * 255 rounded
  std::vector<std::int16_t> edge;         // steps, edge index
  std::vector<double> signal;             // steps
  std::vector<std::uint8_t> valid;        // steps

  friend bool operator==(const LocalWindow&, const LocalWindow&) = default;
};

struct GlobalInput {
  int goal = 0;                   // node index (not id)
  std::vector<int> edge_history;  // edge indices, loop dwell collapsed, oldest first

  friend bool operator==(const GlobalInput&, const GlobalInput&) = default;
};

struct Sample {
  GlobalInput global;
  LocalWindow local;
  Vec2 target_delta;        // p[t+1] - p[t]
  int target_edge = -1;     // E[t+1]
  // provenance
  int agent_id = 0;
  int flow_id = -1;
  double time = 0.0;
  int current_edge = -1;    // E[t]

  bool is_transition() const { return current_edge != target_edge; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Everything the featurizer needs besides the trajectory itself.
struct FeatureContext {
  const GraphSpec* graph = nullptr;
  const FlowRoute* route = nullptr;
  const SignalSchedule* schedule = nullptr;
  const Raster* raster = nullptr;
  FeatureConfig config;
};

/// Features of a single time step, reused across the windows containing it.
struct StepRecord {
  std::vector<Vec2> rel;
  std::vector<std::uint16_t> occupancy;
  std::vector<std::uint8_t> bird;
  int edge = -1;
  double signal = 0.0;
};

/// Heading at record i: direction of the latest displacement within the
/// window that exceeds min_heading_displacement, else the direction to the
/// node the route is heading for.
double heading_at(const FeatureContext& ctx, const Trajectory& traj, std::size_t i);

StepRecord compute_step(const FeatureContext& ctx, const Trajectory& traj, std::size_t i,
                        std::span<const Vec2> neighbors);

/// Collapsed edge history over records [0, t].
std::vector<int> edge_history(const FeatureContext& ctx, const Trajectory& traj, std::size_t t);

/// Builds the window ending at record t from per-step records
/// (`steps[i]` belongs to record i; only [t-N+1, t] are read). Targets are
/// filled when record t+1 exists.
Sample assemble_sample(const FeatureContext& ctx, const Trajectory& traj, std::size_t t,
                       std::span<const StepRecord* const> steps);

/// Replaces every step but the last with a copy of the last one and clears
/// their valid flags, as if the record were the first of its trajectory.
void drop_history(LocalWindow& w);

/// One training example at record t. neighbors_at_each_step[i] holds the
/// other agents' positions at record i's time. Throws InsufficientHistory
/// for an empty trajectory.
Sample build_sample(const FeatureContext& ctx, const Trajectory& traj, std::size_t t,
                    std::span<const std::vector<Vec2>> neighbors_at_each_step);

}  // namespace pedflow::features
