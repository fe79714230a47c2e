#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "pedflow/avoidance.hpp"
#include "pedflow/features.hpp"
#include "pedflow/nn/model.hpp"
#include "pedflow/random.hpp"
#include "pedflow/scenario.hpp"
#include "pedflow/trajectory.hpp"

namespace pedflow::sim {

inline constexpr double kStep = 0.2;  // seconds per simulation step

struct SimConfig {
  double max_step = 0.6;  // m per step, cap on the total displacement
  AvoidanceParams avoidance;
  double timeout = 300.0;
  double start_time = 0.0;
  bool spawn = true;
  /// Keep stepping after the duration (without spawning) until every agent
  /// arrived or timed out.
  bool drain = false;
  features::FeatureConfig features;
};

struct Agent {
  int id = 0;
  int flow_id = 0;
  const FlowRoute* route = nullptr;
  int route_pos = 0;
  AgentStatus status = AgentStatus::Active;
  double spawn_time = 0.0;
  bool replay = false;     // reference agent replayed verbatim
  Trajectory history;      // 5 FPS, labeled
  std::deque<features::StepRecord> steps;  // feature records of the last N history entries

  Vec2 position() const { return history.records.back().p; }
};

struct SimState {
  double clock = 0.0;
  long step_index = 0;
  std::vector<Agent> agents;
  std::vector<long> next_spawn_step;  // per flow
  int next_id = 1;
  int spawned = 0;
  long rejected_transitions = 0;
  long coincident_events = 0;
  Rng rng{0};
};

/// Predicts the next displacement and edge of one agent.
class StepModel {
 public:
  virtual ~StepModel() = default;
  /// Throws ModelScenarioMismatch when the model cannot drive this scenario.
  virtual void check(const Scenario& scenario, const features::FeatureConfig& fc) const = 0;
  virtual const nn::Prediction& predict(const features::Sample& sample, const Agent& agent, const Scenario& scenario,
                                        double t) = 0;
};

/// The trained network.
class NetworkModel final : public StepModel {
 public:
  explicit NetworkModel(const nn::ModelParams& params) : params_(params) { cache_.memoize_bird = true; }
  void check(const Scenario& scenario, const features::FeatureConfig& fc) const override;
  const nn::Prediction& predict(const features::Sample& sample, const Agent& agent, const Scenario& scenario,
                                double t) override;

 private:
  const nn::ModelParams& params_;
  nn::ForwardCache cache_;
};

/// The oracle's walking rule for an isolated agent at a fixed speed: head for
/// the route's next node, stop inside a signal node's region during red.
class RulePolicy final : public StepModel {
 public:
  explicit RulePolicy(double speed, double green_threshold = 0.5) : speed_(speed), green_(green_threshold) {}
  void check(const Scenario&, const features::FeatureConfig&) const override {}
  const nn::Prediction& predict(const features::Sample& sample, const Agent& agent, const Scenario& scenario,
                                double t) override;

 private:
  double speed_;
  double green_;
  nn::Prediction pred_;
};

class Simulator {
 public:
  /// Throws ModelScenarioMismatch via model.check and InvalidConfig.
  Simulator(const Scenario& scenario, StepModel& model, const SimConfig& cfg, std::uint64_t seed);

  const SimState& state() const { return state_; }
  const SimConfig& config() const { return cfg_; }

  /// Adds an agent whose history starts at the given record (edge label is
  /// replaced by the route's first edge when unlabeled). Returns its id.
  int add_agent(int flow_id, const TrajectoryRecord& first, int id = -1);
  /// Adds a reference agent that replays `traj` verbatim.
  void add_replay(const Trajectory& traj);

  /// One synchronous step: spawn (when enabled and before `spawn_until`),
  /// predict every simulated agent from a frozen snapshot, apply moves,
  /// advance the clock by 0.2 s.
  void step(double spawn_until);

  bool any_active() const;
  std::vector<Trajectory> trajectories() const;

 private:
  features::FeatureContext context(const Agent& a) const;
  void push_step_record(Agent& a, std::span<const Vec2> neighbors);

  const Scenario& scenario_;
  StepModel& model_;
  SimConfig cfg_;
  SimState state_;
  std::vector<const features::StepRecord*> ptrs_;
};

using StepObserver = std::function<void(const SimState&)>;

/// Runs `duration / 0.2` steps (plus the drain when configured) from a
/// fresh state. Zero duration gives no trajectories.
std::vector<Trajectory> run(const Scenario& scenario, StepModel& model, double duration, std::uint64_t seed,
                            const SimConfig& cfg = {}, const StepObserver& observer = {});

/// Replacement mode: agents of `reference` (5 FPS) listed in `replace_ids`
/// are driven by the model from their first record; the rest replay verbatim.
/// Output keeps the reference order.
std::vector<Trajectory> run_replacement(const Scenario& scenario, StepModel& model,
                                        const std::vector<Trajectory>& reference, const std::vector<int>& replace_ids,
                                        std::uint64_t seed, const SimConfig& cfg = {},
                                        const StepObserver& observer = {});

/// One JSON object per line: {"t":..,"agents":[{"id","flow","x","y","edge","status"}]}.
void write_state_json(std::ostream& out, const SimState& state, const GraphSpec& graph);

const char* status_name(AgentStatus s);

}  // namespace pedflow::sim
