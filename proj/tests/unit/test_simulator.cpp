#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "pedflow/avoidance.hpp"
#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"
#include "pedflow/simulator.hpp"
#include "support/fixtures.hpp"

using namespace pedflow;
using namespace pedflow::sim;
namespace t = pedflow::testing;
using t::code_of;

namespace {

nn::ModelConfig small_network_config(const Scenario& s) {
  nn::ModelConfig c = nn::model_config_for({}, static_cast<int>(s.graph.node_count()), static_cast<int>(s.graph.edge_count()));
  c.local_embed = 4;
  c.encoder_hidden = 4;
  c.decoder_hidden = 4;
  c.attention_dim = 4;
  return c;
}

bool labels_chain(const Trajectory& tr, const Scenario& s) {
  const FlowRoute& route = s.flow(tr.flow_id);
  int prev = 0;
  for (const auto& r : tr.records) {
    if (r.edge < 0) return false;
    const int pos = route.position(s.graph.edges()[static_cast<std::size_t>(r.edge)]);
    if (pos < 0 || !route_transition_allowed(route, prev, pos)) return false;
    prev = pos;
  }
  return true;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("avoidance examples") {
  const AvoidanceParams p;
  CHECK(avoidance({0, 0}, {}, p) == Vec2{0, 0});
  CHECK(avoidance_magnitude(0.8, p) == doctest::Approx(1.25));
  AvoidanceParams uncapped = p;
  uncapped.max_step = 10.0;
  const std::vector<Vec2> one{{0.8, 0.0}};
  const Vec2 d = avoidance({0, 0}, one, uncapped);
  CHECK(d.x == doctest::Approx(-1.25));
  CHECK(d.y == doctest::Approx(0.0));
  const Vec2 capped = avoidance({0, 0}, one, p);
  CHECK(norm(capped) == doctest::Approx(0.6));
  CHECK(capped.x < 0.0);
  const std::vector<Vec2> far{{3.0, 0.0}};
  CHECK(norm(avoidance({0, 0}, far, p)) < 1e-8);
  // Symmetric neighbours cancel.
  const std::vector<Vec2> both{{0.5, 0.0}, {-0.5, 0.0}};
  CHECK(norm(avoidance({0, 0}, both, uncapped)) < 1e-12);
  AvoidanceParams bad = p;
  bad.c = 0.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("coincident neighbours push along a seeded direction") {
  const AvoidanceParams p;
  const std::vector<Vec2> same{{1.0, 1.0}};
  Rng a(3), b(3);
  int count = 0;
  const Vec2 da = avoidance({1.0, 1.0}, same, p, &a, &count);
  const Vec2 db = avoidance({1.0, 1.0}, same, p, &b);
  CHECK(count == 1);
  CHECK(da == db);
  CHECK(norm(da) == doctest::Approx(std::min(p.max_step, avoidance_magnitude(0.0, p))));
}

TEST_CASE("zero duration gives no trajectories") {
  RulePolicy rule(1.34);
  CHECK(run(t::shibuya(), rule, 0.0, 1).empty());
  CHECK(code_of([&] { (void)run(t::shibuya(), rule, -1.0, 1); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("rule-driven crowd: caps, labels, arrival, determinism") {
  const Scenario& s = t::shibuya();
  RulePolicy rule(1.34);
  SimConfig cfg;
  cfg.drain = true;
  long steps = 0;
  const auto a = run(s, rule, 20.0, 4, cfg, [&](const SimState&) { ++steps; });
  CHECK(a.size() == 20);
  for (const auto& tr : a) {
    CHECK(tr.status == AgentStatus::Arrived);
    CHECK(s.graph.inside_region(s.flow(tr.flow_id).goal, tr.records.back().p));
    CHECK(labels_chain(tr, s));
    CHECK(tr.end_time() - tr.start_time() <= 300.0);
    for (std::size_t i = 1; i < tr.size(); ++i) {
      CHECK(norm(tr.records[i].p - tr.records[i - 1].p) <= cfg.max_step + 1e-12);
      CHECK(tr.records[i].t - tr.records[i - 1].t == doctest::Approx(0.2).epsilon(1e-9));
    }
  }
  CHECK(steps > 100);
  const auto b = run(s, rule, 20.0, 4, cfg);
  CHECK(a == b);
}

TEST_CASE("spawn cadence follows the flow offsets") {
  const Scenario& s = t::shibuya();
  RulePolicy rule(1.34);
  const auto out = run(s, rule, 9.0, 1);
  std::vector<double> f1, f2;
  for (const auto& tr : out) (tr.flow_id == 1 ? f1 : f2).push_back(tr.start_time());
  std::sort(f1.begin(), f1.end());
  std::sort(f2.begin(), f2.end());
  CHECK(f1 == std::vector<double>{0.0, 2.0, 4.0, 6.0, 8.0});
  REQUIRE(f2.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(f2[k] == doctest::Approx(1.0 + 2.0 * static_cast<double>(k)));
}

TEST_CASE("a faithful policy reproduces a lone oracle walker") {
  const Scenario& s = t::shibuya();
  dataset::OracleConfig oc;
  oc.start_time = 35.0;
  const Trajectory oracle = dataset::resample_5fps(dataset::generate_synthetic(s, 1, 8, oc).at(0));
  const double speed = norm(oracle.records[1].p - oracle.records[0].p) / 0.2;
  RulePolicy rule(speed);
  SimConfig cfg;
  cfg.spawn = false;
  cfg.start_time = oracle.start_time();
  Simulator sim(s, rule, cfg, 1);
  sim.add_agent(1, oracle.records[0]);
  for (std::size_t k = 0; k + 1 < oracle.size() && sim.any_active(); ++k) sim.step(0.0);
  const Trajectory mine = sim.trajectories().at(0);
  CHECK(mine.status == AgentStatus::Arrived);
  const std::size_t n = std::min(mine.size(), oracle.size());
  REQUIRE(n > 50);
  for (std::size_t i = 11; i < n; ++i) {
    const Vec2 dm = mine.records[i].p - mine.records[i - 1].p;
    const Vec2 dr = oracle.records[i].p - oracle.records[i - 1].p;
    INFO("step " << i);
    CHECK(norm(dm - dr) <= 0.1);
  }
}

TEST_CASE("replacement mode") {
  const Scenario& s = t::shibuya();
  auto raw = dataset::generate_synthetic(s, 12, 2);
  std::vector<Trajectory> ref;
  for (const auto& tr : raw) ref.push_back(dataset::resample_5fps(tr));
  RulePolicy rule(1.34);
  CHECK(run_replacement(s, rule, ref, {}, 1) == ref);

  const int target = ref[3].agent_id;
  const auto out = run_replacement(s, rule, ref, {target}, 1);
  REQUIRE(out.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(out[i].agent_id == ref[i].agent_id);
    if (ref[i].agent_id == target) {
      CHECK(out[i].records.front().p == ref[i].records.front().p);
      CHECK(out[i].start_time() == doctest::Approx(ref[i].start_time()));
      CHECK(out[i].flow_id == ref[i].flow_id);
      CHECK(labels_chain(out[i], s));
    } else {
      CHECK(out[i].records == ref[i].records);
    }
  }
  CHECK(run_replacement(s, rule, ref, {target}, 1) == out);
}

TEST_CASE("network model: shape checks and a short deterministic run") {
  const Scenario& s = t::shibuya();
  const nn::ModelParams params = nn::init_params(small_network_config(s), 5);
  NetworkModel net(params);
  const auto a = run(s, net, 3.0, 2);
  const auto b = run(s, net, 3.0, 2);
  CHECK(a == b);
  CHECK(a.size() == 3);
  for (const auto& tr : a)
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(norm(tr.records[i].p - tr.records[i - 1].p) <= 0.6 + 1e-12);

  nn::ModelConfig wrong = small_network_config(s);
  wrong.nodes = 3;
  const nn::ModelParams bad(wrong);
  NetworkModel badnet(bad);
  CHECK(code_of([&] { (void)run(s, badnet, 1.0, 1); }) == ErrorCode::ModelScenarioMismatch);
  nn::ModelConfig short_window = small_network_config(s);
  short_window.window = 10;
  const nn::ModelParams bad2(short_window);
  NetworkModel badnet2(bad2);
  CHECK(code_of([&] { (void)run(s, badnet2, 1.0, 1); }) == ErrorCode::ModelScenarioMismatch);
}

TEST_CASE("state dump is one JSON object per step") {
  const Scenario& s = t::shibuya();
  RulePolicy rule(1.2);
  std::ostringstream out;
  (void)run(s, rule, 2.0, 1, {}, [&](const SimState& st) { write_state_json(out, st, s.graph); });
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t"));
    CHECK(j.at("agents").is_array());
    ++lines;
  }
  CHECK(lines == 10);
}

TEST_CASE("simulator configuration is validated") {
  RulePolicy rule(1.2);
  SimConfig cfg;
  cfg.max_step = 0.0;
  CHECK(code_of([&] { Simulator(t::shibuya(), rule, cfg, 1); }) == ErrorCode::InvalidConfig);
  cfg = {};
  cfg.avoidance.a = -1.0;
  CHECK(code_of([&] { Simulator(t::shibuya(), rule, cfg, 1); }) == ErrorCode::InvalidConfig);
}

}
