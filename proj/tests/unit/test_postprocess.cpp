#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"
#include "pedflow/postprocess.hpp"
#include "pedflow/random.hpp"
#include "support/fixtures.hpp"

using namespace pedflow;
using namespace pedflow::post;
namespace t = pedflow::testing;
using t::code_of;

namespace {

// Straight walk from p0 at velocity v, one record per 0.2 s over [t0, t1].
Trajectory line(int id, int flow, double t0, double t1, Vec2 p0, Vec2 v) {
  Trajectory tr;
  tr.agent_id = id;
  tr.flow_id = flow;
  for (long k = std::lround(t0 * 5); k <= std::lround(t1 * 5); ++k) {
    const double tt = static_cast<double>(k) / 5.0;
    tr.records.push_back({tt, p0 + v * (tt - t0), kUnlabeled});
  }
  return tr;
}

Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

// Winding number of a closed polygon around p.
int winding(const Polygon& poly, Vec2 p) {
  int w = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++w;
    } else if (b.y <= p.y && side < 0) {
      --w;
    }
  }
  return w;
}

bool contains_in_order(const Trajectory& outer, const Trajectory& inner) {
  auto it = outer.records.begin();
  for (const auto& r : inner.records) {
    it = std::find(it, outer.records.end(), r);
    if (it == outer.records.end()) return false;
    ++it;
  }
  return true;
}

}  // namespace

TEST_SUITE("postprocess") {

TEST_CASE("constant-velocity bridge across a 2 s gap") {
  const Scenario& s = t::shibuya();
  const Trajectory a = line(1, 1, 0.0, 2.0, {-2.8, 0.0}, {1.4, 0.0});
  const Trajectory b = line(2, 1, 4.0, 6.0, {2.8, 0.0}, {1.4, 0.0});
  ConstantVelocityPredictor cv;
  const auto res = connect_trajectories({a, b}, ConnectionConfig(15, 0.5), s, s.flow(1), cv);
  REQUIRE(res.trajectories.size() == 1);
  REQUIRE(res.connections.size() == 1);
  CHECK(res.connections[0].head_id == 1);
  CHECK(res.connections[0].tail_id == 2);
  const Trajectory& c = res.trajectories[0];
  CHECK(c.agent_id == 1);
  CHECK(c.size() == a.size() + b.size() + static_cast<std::size_t>(res.connections[0].bridge_points));
  CHECK(res.connections[0].bridge_points > 0);
  CHECK(contains_in_order(c, a));
  CHECK(contains_in_order(c, b));
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c.records[i].t > c.records[i - 1].t);
  for (std::size_t i = a.size(); i < a.size() + static_cast<std::size_t>(res.connections[0].bridge_points); ++i) {
    CHECK(c.records[i].p.y == doctest::Approx(0.0));
    CHECK(c.records[i].p.x > 0.0);
    CHECK(c.records[i].p.x < 2.8);
    CHECK(c.records[i].t > 2.0);
    CHECK(c.records[i].t < 4.0);
  }
}

TEST_CASE("connection parameters are validated") {
  CHECK(code_of([] { ConnectionConfig(15, 0.0); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { ConnectionConfig(0, 0.5); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { ConnectionConfig(15, std::nan("")); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("no splice when the successor is off the prediction or too late") {
  const Scenario& s = t::shibuya();
  const Trajectory a = line(1, 1, 0.0, 2.0, {-2.8, 0.0}, {1.4, 0.0});
  ConstantVelocityPredictor cv;
  const ConnectionConfig cfg(15, 0.5);
  const Trajectory off = line(2, 1, 4.0, 6.0, {2.8, 5.0}, {1.4, 0.0});
  auto res = connect_trajectories({a, off}, cfg, s, s.flow(1), cv);
  CHECK(res.connections.empty());
  REQUIRE(res.trajectories.size() == 2);
  CHECK(res.trajectories[0] == a);
  CHECK(res.trajectories[1] == off);

  const Trajectory late = line(3, 1, 60.0, 62.0, {2.8, 0.0}, {1.4, 0.0});
  res = connect_trajectories({a, late}, cfg, s, s.flow(1), cv);
  CHECK(res.connections.empty());

  // Other flow passes through untouched.
  const Trajectory other = line(4, 2, 4.0, 6.0, {2.8, 0.0}, {1.4, 0.0});
  res = connect_trajectories({a, other}, cfg, s, s.flow(1), cv);
  CHECK(res.connections.empty());
  CHECK(res.trajectories.size() == 2);
}

TEST_CASE("a fragment is consumed at most once") {
  const Scenario& s = t::shibuya();
  const Trajectory a1 = line(1, 1, 0.0, 2.0, {-2.8, 0.0}, {1.4, 0.0});
  const Trajectory a2 = line(2, 1, 0.2, 2.2, {-2.8, 0.1}, {1.4, 0.0});
  const Trajectory b = line(3, 1, 4.0, 6.0, {2.8, 0.0}, {1.4, 0.0});
  ConstantVelocityPredictor cv;
  const auto res = connect_trajectories({a1, a2, b}, ConnectionConfig(15, 0.5), s, s.flow(1), cv);
  CHECK(res.connections.size() == 1);
  CHECK(res.trajectories.size() == 2);
}

TEST_CASE("arrival tolerance rejects time-inconsistent matches") {
  const Scenario& s = t::shibuya();
  const Trajectory a = line(1, 1, 0.0, 2.0, {-2.8, 0.0}, {1.4, 0.0});
  const Trajectory late = line(2, 1, 6.0, 8.0, {2.8, 0.0}, {1.4, 0.0});
  ConstantVelocityPredictor cv;
  ConnectionConfig cfg(15, 0.5);
  CHECK(connect_trajectories({a, late}, cfg, s, s.flow(1), cv).connections.size() == 1);
  cfg.arrival_tolerance = 1.0;
  CHECK(connect_trajectories({a, late}, cfg, s, s.flow(1), cv).connections.empty());
  const Trajectory on_time = line(3, 1, 4.0, 6.0, {2.8, 0.0}, {1.4, 0.0});
  CHECK(connect_trajectories({a, on_time}, cfg, s, s.flow(1), cv).connections.size() == 1);
  cfg.arrival_tolerance = -1.0;
  CHECK(code_of([&] { (void)connect_trajectories({a}, cfg, s, s.flow(1), cv); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("model predictor") {
  const Scenario& s = t::shibuya();
  nn::ModelConfig c = nn::model_config_for({}, static_cast<int>(s.graph.node_count()),
                                           static_cast<int>(s.graph.edge_count()));
  c.local_embed = c.encoder_hidden = c.decoder_hidden = c.attention_dim = 4;
  const nn::ModelParams params = nn::init_params(c, 2);
  std::vector<Trajectory> scene;
  for (const auto& tr : dataset::generate_synthetic(s, 30, 4)) scene.push_back(dataset::resample_5fps(tr));
  const Trajectory& full = scene[6];
  REQUIRE(full.size() > 60);
  Trajectory head = full, tail = full;
  head.records.resize(40);
  tail.records.erase(tail.records.begin(), tail.records.begin() + 50);
  tail.agent_id = 999;

  std::vector<Trajectory> without = scene;
  without[6] = head;
  std::vector<Trajectory> with = without;
  with.push_back(tail);
  ModelPredictor a(params, s, s.flow(full.flow_id), {}, without);
  ModelPredictor b(params, s, s.flow(full.flow_id), {}, with);
  const auto pa = a.rollout(head, 20);
  CHECK(pa.size() == 20);
  CHECK(a.fallbacks() == 0);
  // The agent's own continuation is never a neighbour.
  CHECK(pa == b.rollout(head, 20));
  CHECK(pa == a.rollout(head, 20));
  for (std::size_t k = 0; k < pa.size(); ++k)
    CHECK(norm(pa[k] - (k == 0 ? head.records.back().p : pa[k - 1])) <= 0.6 + 1e-12);

  Trajectory one = head;
  one.records.resize(1);
  ConstantVelocityPredictor cv;
  CHECK(a.rollout(one, 5) == cv.rollout(one, 5));
  CHECK(a.fallbacks() == 1);
}

TEST_CASE("stitching conserves every observed record") {
  const Scenario& s = t::shibuya();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::vector<Trajectory> frags;
    int next_id = 1000;
    Rng rng(seed);
    for (const auto& raw : dataset::generate_synthetic(s, 12, seed)) {
      Trajectory tr = dataset::resample_5fps(raw);
      if (tr.size() < 60 || rng.uniform() < 0.5) {
        frags.push_back(tr);
        continue;
      }
      const std::size_t cut = 20 + rng.index(tr.size() - 50);
      const std::size_t gap = 5 + rng.index(20);
      Trajectory head = tr, tail = tr;
      head.records.resize(cut);
      tail.records.erase(tail.records.begin(), tail.records.begin() + static_cast<long>(cut + gap));
      tail.agent_id = next_id++;
      frags.push_back(head);
      frags.push_back(tail);
    }
    for (int flow : {1, 2}) {
      ConstantVelocityPredictor cv;
      const auto res = connect_trajectories(frags, ConnectionConfig(30, 0.5), s, s.flow(flow), cv);
      std::size_t in = 0, out = 0, bridged = 0;
      for (const auto& f : frags) in += f.size();
      for (const auto& f : res.trajectories) out += f.size();
      for (const auto& c : res.connections) bridged += static_cast<std::size_t>(c.bridge_points);
      CHECK(out == in + bridged);
      CHECK(res.trajectories.size() == frags.size() - res.connections.size());
      for (const auto& f : frags) {
        int hosts = 0;
        for (const auto& o : res.trajectories) hosts += contains_in_order(o, f) ? 1 : 0;
        CHECK(hosts >= 1);
      }
      for (const auto& o : res.trajectories)
        for (std::size_t i = 1; i < o.size(); ++i) CHECK(o.records[i].t > o.records[i - 1].t);
    }
  }
}

TEST_CASE("crowd metrics examples") {
  const Polygon box = rect(0.0, -2.0, 10.0, 2.0);
  Trajectory still;
  still.agent_id = 1;
  for (int k = 0; k <= 10; ++k) still.records.push_back({k * 0.2, {5.0, 0.0}, kUnlabeled});
  const auto s1 = crowd_metrics({still}, box);
  REQUIRE(s1.size() == 11);
  for (const auto& f : s1) {
    CHECK(f.count == 1);
    REQUIRE(f.mean_speed.has_value());
    CHECK(*f.mean_speed == 0.0);
  }

  const Trajectory walker = line(2, 1, 0.0, 12.0, {-2.1, 0.0}, {1.25, 0.0});
  const auto s2 = crowd_metrics({walker}, box);
  int inside = 0;
  for (const auto& f : s2) {
    if (f.count == 0) {
      CHECK_FALSE(f.mean_speed.has_value());
      continue;
    }
    ++inside;
    CHECK(*f.mean_speed == doctest::Approx(1.25).epsilon(1e-9));
  }
  CHECK(inside == 40);

  const auto s3 = crowd_metrics({}, box, 5.0, std::pair{0.0, 2.0});
  REQUIRE(s3.size() == 11);
  for (const auto& f : s3) {
    CHECK(f.count == 0);
    CHECK_FALSE(f.mean_speed.has_value());
  }
  CHECK(crowd_metrics({}, box).empty());

  CHECK(code_of([&] { (void)crowd_metrics({still}, Polygon{{0, 0}, {1, 1}}); }) == ErrorCode::EmptyRegion);
  CHECK(code_of([&] { (void)crowd_metrics({still}, Polygon{{0, 0}, {1, 1}, {2, 2}}); }) == ErrorCode::EmptyRegion);
}

TEST_CASE("record speeds") {
  Trajectory one;
  one.records.push_back({0.0, {1.0, 1.0}, kUnlabeled});
  CHECK(record_speeds(one) == std::vector<double>{0.0});
  const auto v = record_speeds(line(1, 1, 0.0, 1.0, {0, 0}, {0.0, -2.0}));
  for (double x : v) CHECK(x == doctest::Approx(2.0));
}

TEST_CASE("counts match a winding-number oracle on a concave region") {
  // Five-pointed star, concave.
  Polygon star;
  for (int k = 0; k < 10; ++k) {
    const double r = k % 2 == 0 ? 6.0 : 2.5;
    const double a = std::numbers::pi / 2 + k * std::numbers::pi / 5;
    star.push_back({r * std::cos(a), r * std::sin(a)});
  }
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<Trajectory> scene;
    for (int i = 0; i < 15; ++i) {
      Trajectory tr;
      tr.agent_id = i;
      const long k0 = static_cast<long>(rng.index(20));
      const long n = 5 + static_cast<long>(rng.index(30));
      Vec2 p{rng.uniform(-7, 7), rng.uniform(-7, 7)};
      for (long k = k0; k < k0 + n; ++k) {
        tr.records.push_back({static_cast<double>(k) / 5.0, p, kUnlabeled});
        p = p + Vec2{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      }
      scene.push_back(tr);
    }
    const auto series = crowd_metrics(scene, star, 5.0, std::pair{0.0, 12.0});
    REQUIRE(series.size() == 61);
    for (std::size_t f = 0; f < series.size(); ++f) {
      int expect = 0;
      for (const auto& tr : scene)
        for (const auto& r : tr.records)
          if (std::lround(r.t * 5) == static_cast<long>(f) && winding(star, r.p) != 0) ++expect;
      CHECK(series[f].count == expect);
    }
  }
}

TEST_CASE("rmse") {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 5};
  CHECK(*rmse(a, a).value == 0.0);
  CHECK(*rmse(a, b).value == doctest::Approx(std::sqrt(4.0 / 3.0)));
  CHECK(*rmse(a, b).value == *rmse(b, a).value);
  const std::vector<double> shorter{1, 2};
  CHECK(code_of([&] { (void)rmse(a, shorter); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([&] { (void)rmse(std::vector<double>{}, std::vector<double>{}); }) == ErrorCode::LengthMismatch);

  const std::vector<std::optional<double>> x{1.0, std::nullopt, 3.0}, y{1.0, 2.0, 5.0};
  const auto r = rmse(x, y);
  CHECK(r.used == 2);
  CHECK(r.excluded == 1);
  CHECK(*r.value == doctest::Approx(std::sqrt(2.0)));
  const std::vector<std::optional<double>> none(3);
  CHECK_FALSE(rmse(none, y).value.has_value());
}

TEST_CASE("lane index") {
  const Scenario& s = t::shibuya();
  const Polygon& cw = s.crosswalk;
  const Vec2 ax = lateral_axis(cw);
  CHECK(std::abs(ax.x) < 1e-12);
  CHECK(std::abs(ax.y) == doctest::Approx(1.0));

  const std::vector<Trajectory> east{line(1, 1, 0, 10, {-7, 2.5}, {1.4, 0})};
  const std::vector<Trajectory> west{line(2, 2, 0, 10, {7, -2.5}, {-1.4, 0})};
  CHECK(lane_index(east, west, cw) == doctest::Approx(1.0));

  const std::vector<Trajectory> east2{line(1, 1, 0, 10, {-7, 2.2}, {1.4, 0}), line(3, 1, 0, 10, {-7, -1.8}, {1.4, 0})};
  const std::vector<Trajectory> west2{line(2, 2, 0, 10, {7, 2.6}, {-1.4, 0}), line(4, 2, 0, 10, {7, -1.4}, {-1.4, 0})};
  CHECK(lane_index(east2, west2, cw) == doctest::Approx(0.0));

  const double sh = lane_index_shuffled(east, west, cw, 9);
  CHECK(sh == lane_index_shuffled(east, west, cw, 9));
  CHECK(sh >= 0.0);
  CHECK(sh <= 1.0);

  const std::vector<Trajectory> away{line(5, 2, 0, 10, {30, 30}, {0, 1})};
  CHECK(code_of([&] { (void)lane_index(east, away, cw); }) == ErrorCode::EmptyRegion);
  LaneConfig bad;
  bad.strip_width = 0.0;
  CHECK(code_of([&] { (void)lane_index(east, west, cw, bad); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("svg output is deterministic") {
  const Scenario& s = t::shibuya();
  PlotSeries a{"actual", {0.0, 0.2, 0.4}, {1.0, std::nullopt, 2.0}};
  PlotSeries b{"simulated", {0.0, 0.2, 0.4}, {1.5, 1.0, 0.5}};
  const std::string one = series_svg({a, b}, "count", "agents", &s.schedule);
  CHECK(one == series_svg({a, b}, "count", "agents", &s.schedule));
  CHECK(one.rfind("<svg", 0) != std::string::npos);
  CHECK(one.find("</svg>") != std::string::npos);
  CHECK(one.find("simulated") != std::string::npos);

  const auto trajs = dataset::generate_synthetic(s, 3, 2);
  const std::string top = trajectories_svg(trajs, s);
  CHECK(top == trajectories_svg(trajs, s));
  CHECK(top.find("<polyline") != std::string::npos);

  t::TempDir dir("svg");
  write_text(dir / "a.svg", one);
  CHECK(t::slurp(dir / "a.svg") == one);
  CHECK(code_of([&] { write_text(dir / "missing" / "a.svg", one); }) == ErrorCode::Io);
}

}
