#include "pedflow/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"

namespace pedflow::sim {

namespace {

std::size_t replay_index(const Trajectory& traj, long frame) {
  const auto& r = traj.records;
  const auto it = std::lower_bound(r.begin(), r.end(), frame, [](const TrajectoryRecord& rec, long f) {
    return dataset::lattice_frame(rec.t) < f;
  });
  if (it == r.end() || dataset::lattice_frame(it->t) != frame) return r.size();
  return static_cast<std::size_t>(it - r.begin());
}

}  // namespace

const char* status_name(AgentStatus s) {
  switch (s) {
    case AgentStatus::Active: return "active";
    case AgentStatus::Arrived: return "arrived";
    case AgentStatus::TimedOut: return "timed_out";
  }
  return "unknown";
}

void NetworkModel::check(const Scenario& scenario, const features::FeatureConfig& fc) const {
  const nn::ModelConfig& c = params_.config();
  if (c.nodes != static_cast<int>(scenario.graph.node_count()) ||
      c.edges != static_cast<int>(scenario.graph.edge_count()))
    throw Error(ErrorCode::ModelScenarioMismatch,
                "model expects " + std::to_string(c.nodes) + " nodes / " + std::to_string(c.edges) +
                    " edges, scenario has " + std::to_string(scenario.graph.node_count()) + " / " +
                    std::to_string(scenario.graph.edge_count()));
  if (c.window != fc.window || c.occupancy_cells != fc.occupancy_cells() || c.bird_cells != fc.bird_cells() ||
      c.max_history != fc.max_history)
    throw Error(ErrorCode::ModelScenarioMismatch, "model input shapes differ from the feature configuration");
}

const nn::Prediction& NetworkModel::predict(const features::Sample& sample, const Agent&, const Scenario&, double) {
  return nn::forward(params_, sample, cache_);
}

const nn::Prediction& RulePolicy::predict(const features::Sample&, const Agent& agent, const Scenario& scenario,
                                          double t) {
  const GraphSpec& graph = scenario.graph;
  const auto& edges = agent.route->edges;
  const bool green = signal_state(scenario.schedule, t) >= green_;
  const Vec2 p = agent.position();
  std::size_t k = static_cast<std::size_t>(agent.route_pos);
  bool hold = false;
  if (edges[k].is_loop()) {
    if (green && k + 1 < edges.size()) ++k;
    else hold = true;
  } else if (k + 1 < edges.size() && graph.inside_region(edges[k].to, p)) {
    if (!edges[k + 1].is_loop()) {
      ++k;
    } else if (green && k + 2 < edges.size()) {
      k += 2;
    } else {
      ++k;
      hold = true;
    }
  }
  pred_.delta_p = hold ? Vec2{} : speed_ * kStep * normalized(graph.node(agent.route->heading_node(k)).anchor - p);
  pred_.edge_logits.assign(graph.edge_count(), 0.0);
  pred_.edge_probs.assign(graph.edge_count(), 0.0);
  pred_.edge_probs[static_cast<std::size_t>(graph.edge_index(edges[k]))] = 1.0;
  return pred_;
}

Simulator::Simulator(const Scenario& scenario, StepModel& model, const SimConfig& cfg, std::uint64_t seed)
    : scenario_(scenario), model_(model), cfg_(cfg) {
  validate_scenario(scenario);
  cfg.avoidance.validate();
  if (!(cfg.max_step > 0.0) || !(cfg.timeout > 0.0))
    throw Error(ErrorCode::InvalidConfig, "simulation needs a positive step cap and timeout");
  model.check(scenario, cfg.features);
  state_.rng = Rng(seed);
  state_.clock = cfg.start_time;
  for (const auto& f : scenario.flows) state_.next_spawn_step.push_back(std::lround(f.spawn_offset / kStep));
}

features::FeatureContext Simulator::context(const Agent& a) const {
  features::FeatureContext ctx;
  ctx.graph = &scenario_.graph;
  ctx.route = a.route;
  ctx.schedule = &scenario_.schedule;
  ctx.raster = scenario_.raster.get();
  ctx.config = cfg_.features;
  return ctx;
}

int Simulator::add_agent(int flow_id, const TrajectoryRecord& first, int id) {
  Agent a;
  a.id = id >= 0 ? id : state_.next_id;
  state_.next_id = std::max(state_.next_id, a.id + 1);
  a.flow_id = flow_id;
  a.route = &scenario_.flow(flow_id);
  a.spawn_time = first.t;
  int pos = 0;
  if (first.edge >= 0) pos = a.route->position(scenario_.graph.edges()[static_cast<std::size_t>(first.edge)]);
  a.route_pos = std::max(pos, 0);
  a.history.agent_id = a.id;
  a.history.flow_id = flow_id;
  a.history.records.push_back(
      {first.t, first.p, scenario_.graph.edge_index(a.route->edges[static_cast<std::size_t>(a.route_pos)])});
  state_.agents.push_back(std::move(a));
  return state_.agents.back().id;
}

void Simulator::add_replay(const Trajectory& traj) {
  Agent a;
  a.id = traj.agent_id;
  a.flow_id = traj.flow_id;
  a.replay = true;
  a.status = traj.status;
  a.history = traj;
  state_.next_id = std::max(state_.next_id, a.id + 1);
  state_.agents.push_back(std::move(a));
}

void Simulator::push_step_record(Agent& a, std::span<const Vec2> neighbors) {
  const features::FeatureContext ctx = context(a);
  a.steps.push_back(features::compute_step(ctx, a.history, a.history.size() - 1, neighbors));
  while (a.steps.size() > static_cast<std::size_t>(cfg_.features.window)) a.steps.pop_front();
}

bool Simulator::any_active() const {
  const long frame = dataset::lattice_frame(state_.clock);
  for (const Agent& a : state_.agents) {
    if (a.replay) {
      if (!a.history.empty() && dataset::lattice_frame(a.history.end_time()) >= frame) return true;
    } else if (a.status == AgentStatus::Active) {
      return true;
    }
  }
  return false;
}

void Simulator::step(double spawn_until) {
  const double t = state_.clock;
  const long frame = dataset::lattice_frame(t);
  if (cfg_.spawn && t < spawn_until - 1e-9) {
    const long interval = std::lround(scenario_.spawn_interval / kStep);
    for (std::size_t f = 0; f < scenario_.flows.size(); ++f) {
      if (state_.step_index < state_.next_spawn_step[f]) continue;
      state_.next_spawn_step[f] += interval;
      const FlowRoute& route = scenario_.flows[f];
      add_agent(route.flow_id, {t, sample_spawn(route, state_.rng), kUnlabeled});
      ++state_.spawned;
    }
  }

  // Frozen snapshot of everyone present at t.
  std::vector<std::size_t> present;
  std::vector<Vec2> snapshot;
  for (std::size_t i = 0; i < state_.agents.size(); ++i) {
    const Agent& a = state_.agents[i];
    if (a.replay) {
      const std::size_t r = replay_index(a.history, frame);
      if (r < a.history.size()) {
        present.push_back(i);
        snapshot.push_back(a.history.records[r].p);
      }
    } else if (a.status == AgentStatus::Active && dataset::lattice_frame(a.history.end_time()) == frame) {
      present.push_back(i);
      snapshot.push_back(a.position());
    }
  }

  struct Move {
    std::size_t agent;
    Vec2 p;
    int route_pos;
  };
  std::vector<Move> moves;
  std::vector<Vec2> others;
  for (std::size_t s = 0; s < present.size(); ++s) {
    Agent& a = state_.agents[present[s]];
    if (a.replay) continue;
    others.clear();
    for (std::size_t o = 0; o < present.size(); ++o)
      if (o != s) others.push_back(snapshot[o]);
    push_step_record(a, others);
    const std::size_t last = a.history.size() - 1;
    ptrs_.assign(last + 1, nullptr);
    const std::size_t first = last + 1 - a.steps.size();
    for (std::size_t k = 0; k < a.steps.size(); ++k) ptrs_[first + k] = &a.steps[k];
    const features::Sample sample = features::assemble_sample(context(a), a.history, last, ptrs_);
    const nn::Prediction& pred = model_.predict(sample, a, scenario_, t);

    int coincident = 0;
    const Vec2 push = avoidance(snapshot[s], others, cfg_.avoidance, &state_.rng, &coincident);
    state_.coincident_events += coincident;
    const Vec2 delta = clamp_norm(pred.delta_p + push, cfg_.max_step);

    int pos = a.route_pos;
    const int e = pred.argmax_edge();
    const int predicted = a.route->position(scenario_.graph.edges()[static_cast<std::size_t>(e)]);
    if (predicted != pos) {
      if (predicted >= 0 && route_transition_allowed(*a.route, pos, predicted)) pos = predicted;
      else ++state_.rejected_transitions;
    }
    moves.push_back({present[s], snapshot[s] + delta, pos});
  }

  ++state_.step_index;
  state_.clock = cfg_.start_time + static_cast<double>(state_.step_index) * kStep;
  for (const Move& m : moves) {
    Agent& a = state_.agents[m.agent];
    a.route_pos = m.route_pos;
    a.history.records.push_back(
        {state_.clock, m.p, scenario_.graph.edge_index(a.route->edges[static_cast<std::size_t>(a.route_pos)])});
    if (scenario_.graph.inside_region(a.route->goal, m.p)) a.status = AgentStatus::Arrived;
    else if (state_.clock - a.spawn_time >= cfg_.timeout - 1e-9) a.status = AgentStatus::TimedOut;
    a.history.status = a.status;
  }
}

std::vector<Trajectory> Simulator::trajectories() const {
  std::vector<Trajectory> out;
  for (const Agent& a : state_.agents) out.push_back(a.history);
  return out;
}

std::vector<Trajectory> run(const Scenario& scenario, StepModel& model, double duration, std::uint64_t seed,
                            const SimConfig& cfg, const StepObserver& observer) {
  if (!(duration >= 0.0)) throw Error(ErrorCode::InvalidConfig, "duration must be >= 0");
  Simulator sim(scenario, model, cfg, seed);
  const long steps = std::lround(duration / kStep);
  const double spawn_until = cfg.start_time + duration;
  for (long k = 0; k < steps; ++k) {
    sim.step(spawn_until);
    if (observer) observer(sim.state());
  }
  if (cfg.drain && steps > 0) {
    const long guard = std::lround(cfg.timeout / kStep) + 1;
    for (long k = 0; k < guard && sim.any_active(); ++k) {
      sim.step(-std::numeric_limits<double>::infinity());
      if (observer) observer(sim.state());
    }
  }
  return sim.trajectories();
}

std::vector<Trajectory> run_replacement(const Scenario& scenario, StepModel& model,
                                        const std::vector<Trajectory>& reference, const std::vector<int>& replace_ids,
                                        std::uint64_t seed, const SimConfig& cfg, const StepObserver& observer) {
  const std::set<int> replace(replace_ids.begin(), replace_ids.end());
  double start = std::numeric_limits<double>::infinity(), end = -start;
  for (const auto& traj : reference) {
    if (traj.empty()) continue;
    start = std::min(start, traj.start_time());
    end = std::max(end, traj.end_time());
  }
  if (replace.empty() || reference.empty() || !std::isfinite(start)) return reference;

  SimConfig c = cfg;
  c.spawn = false;
  c.start_time = kStep * static_cast<double>(dataset::lattice_frame(start));
  Simulator sim(scenario, model, c, seed);
  // Replaced agents join when the clock reaches their first record.
  std::vector<std::pair<long, std::size_t>> pending;
  std::vector<int> order(reference.size(), -1);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const Trajectory& traj = reference[i];
    if (replace.count(traj.agent_id) && !traj.empty()) {
      pending.emplace_back(dataset::lattice_frame(traj.start_time()), i);
    } else {
      sim.add_replay(traj);
    }
  }
  std::stable_sort(pending.begin(), pending.end());
  std::size_t next = 0;
  std::vector<std::pair<std::size_t, int>> sim_ids;  // reference index -> agent id
  auto admit = [&] {
    const long frame = dataset::lattice_frame(sim.state().clock);
    for (; next < pending.size() && pending[next].first <= frame; ++next) {
      const Trajectory& traj = reference[pending[next].second];
      int flow = traj.flow_id >= 0 ? traj.flow_id : dataset::infer_flow(traj, scenario);
      if (flow < 0)
        throw Error(ErrorCode::InvalidTrajectory, "cannot infer the flow of replaced agent " + std::to_string(traj.agent_id));
      TrajectoryRecord first = traj.records.front();
      first.t = sim.state().clock;
      sim.add_agent(flow, first, traj.agent_id);
      sim_ids.emplace_back(pending[next].second, traj.agent_id);
    }
  };
  const long last_frame = dataset::lattice_frame(end);
  while (dataset::lattice_frame(sim.state().clock) < last_frame) {
    admit();
    sim.step(0.0);
    if (observer) observer(sim.state());
  }
  if (cfg.drain) {
    const long guard = std::lround(cfg.timeout / kStep) + 1;
    for (long k = 0; k < guard && sim.any_active(); ++k) {
      sim.step(0.0);
      if (observer) observer(sim.state());
    }
  }

  std::vector<Trajectory> out = reference;
  const auto simulated = sim.trajectories();
  for (const auto& [ref_index, id] : sim_ids) {
    for (const auto& traj : simulated) {
      if (traj.agent_id == id) {
        out[ref_index] = traj;
        break;
      }
    }
  }
  return out;
}

void write_state_json(std::ostream& out, const SimState& state, const GraphSpec& graph) {
  nlohmann::json agents = nlohmann::json::array();
  for (const Agent& a : state.agents) {
    if (a.replay || a.history.empty()) continue;
    const auto& r = a.history.records.back();
    agents.push_back({{"id", a.id},
                      {"flow", a.flow_id},
                      {"x", r.p.x},
                      {"y", r.p.y},
                      {"edge", r.edge >= 0 ? edge_token(graph.edges()[static_cast<std::size_t>(r.edge)]) : ""},
                      {"status", status_name(a.status)}});
  }
  out << nlohmann::json{{"t", state.clock}, {"step", state.step_index}, {"agents", agents}}.dump() << '\n';
}

}  // namespace pedflow::sim
