#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pedflow/error.hpp"
#include "pedflow/features.hpp"
#include "support/fixtures.hpp"

using namespace pedflow;
using namespace pedflow::features;
namespace t = pedflow::testing;
using t::code_of;

namespace {

FeatureContext shibuya_context(int flow = 1) {
  const Scenario& s = t::shibuya();
  return {&s.graph, &s.flow(flow), &s.schedule, s.raster.get(), {}};
}

Raster uniform_raster(int w, int h, double mpc, Vec2 origin, float value) {
  Raster r;
  r.width = w;
  r.height = h;
  r.meters_per_cell = mpc;
  r.origin = origin;
  r.values.assign(static_cast<std::size_t>(w) * h, value);
  return r;
}

// Bilinear interpolation between cell centres with zero outside, written
// directly from the raster's cell convention.
double bilinear_oracle(const Raster& r, double x, double y) {
  const double gx = (x - r.origin.x) / r.meters_per_cell - 0.5;
  const double gy = (y - r.origin.y) / r.meters_per_cell - 0.5;
  const int c = static_cast<int>(std::floor(gx)), rr = static_cast<int>(std::floor(gy));
  double acc = 0.0;
  for (int dr = 0; dr <= 1; ++dr)
    for (int dc = 0; dc <= 1; ++dc) {
      const int row = rr + dr, col = c + dc;
      if (row < 0 || col < 0 || row >= r.height || col >= r.width) continue;
      const double wx = dc ? gx - c : 1.0 - (gx - c);
      const double wy = dr ? gy - rr : 1.0 - (gy - rr);
      acc += wx * wy * r.at(row, col);
    }
  return acc;
}

Trajectory straight_line(Vec2 start, Vec2 velocity, int n, int edge = 0, double t0 = 40.0) {
  Trajectory tr;
  tr.agent_id = 1;
  tr.flow_id = 1;
  for (int i = 0; i < n; ++i) tr.records.push_back({t0 + 0.2 * i, start + velocity * (0.2 * i), edge});
  return tr;
}

std::vector<std::vector<Vec2>> no_neighbors(const Trajectory& tr) { return std::vector<std::vector<Vec2>>(tr.size()); }

}  // namespace

TEST_SUITE("features") {

TEST_CASE("occupancy examples") {
  const FeatureConfig cfg;
  const auto empty = occupancy({0, 0}, 0.0, {}, cfg);
  CHECK(empty.counts.size() == 32);
  for (int c : empty.counts) CHECK(c == 0);

  const std::vector<Vec2> ahead{{1.0, 0.0}};
  auto m = occupancy({0, 0}, 0.0, ahead, cfg);
  CHECK(m.counts[0] == 1);
  int total = 0;
  for (int c : m.counts) total += c;
  CHECK(total == 1);

  // Same neighbour, agent facing +y: a quarter turn clockwise.
  m = occupancy({0, 0}, std::numbers::pi / 2, ahead, cfg);
  CHECK(m.counts[6] == 1);

  const std::vector<Vec2> left_far{{0.0, 2.5}};
  m = occupancy({0, 0}, 0.0, left_far, cfg);
  CHECK(m.counts[2 * 8 + 2] == 1);

  const std::vector<Vec2> outside{{4.01, 0.0}, {0.0, -10.0}};
  m = occupancy({0, 0}, 0.0, outside, cfg);
  for (int c : m.counts) CHECK(c == 0);
}

TEST_CASE("occupancy total equals the brute-force neighbour count") {
  Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const Vec2 c{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::vector<Vec2> nb;
    const int n = static_cast<int>(rng.index(40));
    for (int i = 0; i < n; ++i) nb.push_back({c.x + rng.uniform(-6, 6), c.y + rng.uniform(-6, 6)});
    int expected = 0;
    for (const Vec2 p : nb)
      if (std::hypot(p.x - c.x, p.y - c.y) <= 4.0) ++expected;
    const auto m = occupancy(c, rng.uniform(-4, 4), nb);
    int total = 0;
    for (int v : m.counts) {
      CHECK(v >= 0);
      total += v;
    }
    CHECK(total == expected);
  }
}

TEST_CASE("bird map on a uniform raster and off the raster") {
  const Raster r = uniform_raster(100, 100, 0.2, {-10, -10}, 0.5f);
  const BirdMap b = bird_map({0, 0}, 0.0, &r);
  CHECK(b.size == 50);
  for (float v : b.grid) CHECK(v == doctest::Approx(0.5f));
  const BirdMap off = bird_map({100, 100}, 1.0, &r);
  for (float v : off.grid) CHECK(v == 0.0f);
  CHECK(code_of([] { (void)bird_map({0, 0}, 0.0, nullptr); }) == ErrorCode::RasterMissing);
  const Raster empty;
  CHECK(code_of([&] { (void)bird_map({0, 0}, 0.0, &empty); }) == ErrorCode::RasterMissing);
}

TEST_CASE("bird map matches an independent crop oracle") {
  Raster r = uniform_raster(23, 17, 0.37, {-4.1, -3.3}, 0.0f);
  Rng rng(4);
  for (float& v : r.values) v = static_cast<float>(rng.uniform());
  FeatureConfig cfg;
  cfg.bird_size = 9;
  cfg.bird_meters_per_cell = 0.5;
  for (int k = 0; k < 20; ++k) {
    const Vec2 c{rng.uniform(-3, 6), rng.uniform(-3, 4)};
    const double h = rng.uniform(-3.14, 3.14);
    const BirdMap b = bird_map(c, h, &r, cfg);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        // Row 0 is ahead, column 0 on the left.
        const double ahead = (4 - i) * 0.5, left = (4 - j) * 0.5;
        const double x = c.x + ahead * std::cos(h) - left * std::sin(h);
        const double y = c.y + ahead * std::sin(h) + left * std::cos(h);
        CHECK(b.at(i, j) == doctest::Approx(bilinear_oracle(r, x, y)).epsilon(1e-6));
      }
  }
}

TEST_CASE("turning around flips the crop") {
  const Scenario& s = t::shibuya();
  const Vec2 c{-3.3, 1.7};
  const BirdMap a = bird_map(c, 0.4, s.raster.get());
  const BirdMap b = bird_map(c, 0.4 + std::numbers::pi, s.raster.get());
  double worst = 0.0;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) worst = std::max(worst, std::abs(double(a.at(i, j)) - double(b.at(49 - i, 49 - j))));
  CHECK(worst < 1e-6);
}

TEST_CASE("relative positions") {
  const GraphSpec g({{1, {1, 0}, 1.0, false}, {2, {0, 2}, 1.0, false}}, {{1, 2}});
  const auto r = relative_positions({0, 0}, g);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == Vec2{1, 0});
  CHECK(r[1] == Vec2{0, 2});
  CHECK(relative_positions({1, 0}, g)[0] == Vec2{0, 0});
  const Vec2 off{3.5, -7.25};
  const GraphSpec moved({{1, Vec2{1, 0} + off, 1.0, false}, {2, Vec2{0, 2} + off, 1.0, false}}, {{1, 2}});
  const auto m = relative_positions(Vec2{0.3, 0.9} + off, moved);
  const auto o = relative_positions({0.3, 0.9}, g);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(m[k].x == doctest::Approx(o[k].x).epsilon(1e-12));
    CHECK(m[k].y == doctest::Approx(o[k].y).epsilon(1e-12));
  }
}

TEST_CASE("sample targets") {
  const auto ctx = shibuya_context();
  const Trajectory still = straight_line({-20, -6}, {0, 0}, 5);
  const Sample a = build_sample(ctx, still, 3, no_neighbors(still));
  CHECK(a.target_delta == Vec2{0, 0});
  CHECK(a.target_edge == 0);

  const Trajectory walk = straight_line({-20, -6}, {1.4, 0}, 5);
  const Sample b = build_sample(ctx, walk, 2, no_neighbors(walk));
  CHECK(b.target_delta.x == doctest::Approx(0.28).epsilon(1e-12));
  CHECK(b.target_delta.y == doctest::Approx(0.0));
  CHECK(b.time == doctest::Approx(40.4));
  CHECK(b.global.goal == 3);

  CHECK(code_of([&] {
          Trajectory e;
          (void)build_sample(ctx, e, 0, {});
        }) == ErrorCode::InsufficientHistory);
}

TEST_CASE("short histories are front-padded and masked") {
  const auto ctx = shibuya_context();
  const Trajectory walk = straight_line({-20, -6}, {1.0, 0.5}, 4);
  const Sample s = build_sample(ctx, walk, 2, no_neighbors(walk));
  const LocalWindow& w = s.local;
  CHECK(w.steps == 20);
  CHECK(w.rel_pos.size() == 20u * 4 * 2);
  CHECK(w.occupancy.size() == 20u * 32);
  CHECK(w.bird.size() == 20u * 2500);
  CHECK(w.edge.size() == 20u);
  for (int k = 0; k < 20; ++k) CHECK(w.valid[static_cast<std::size_t>(k)] == (k >= 17 ? 1 : 0));
  // Padding repeats the earliest record.
  const auto first = relative_positions(walk.records[0].p, *ctx.graph);
  for (int k = 0; k < 18; ++k) {
    CHECK(w.rel_pos[static_cast<std::size_t>(k * 8)] == first[0].x);
    CHECK(w.rel_pos[static_cast<std::size_t>(k * 8 + 1)] == first[0].y);
  }
  const auto last = relative_positions(walk.records[2].p, *ctx.graph);
  CHECK(w.rel_pos[19 * 8 + 6] == last[3].x);
  CHECK(w.signal[19] == signal_state(*ctx.schedule, walk.records[2].t));
}

TEST_CASE("edge history collapses dwell and keeps chain order") {
  const auto ctx = shibuya_context();
  Trajectory tr = straight_line({-12, 0}, {0.5, 0}, 8);
  const int labels[8] = {0, 0, 1, 1, 1, 2, 2, 2};
  for (int i = 0; i < 8; ++i) tr.records[static_cast<std::size_t>(i)].edge = labels[i];
  CHECK(edge_history(ctx, tr, 7) == std::vector<int>{0, 1, 2});
  CHECK(edge_history(ctx, tr, 3) == std::vector<int>{0, 1});
  tr.records[4].edge = 3;  // E(3:4) straight after E(2:2)
  CHECK(code_of([&] { (void)edge_history(ctx, tr, 5); }) == ErrorCode::InvalidTrajectory);
}

TEST_CASE("heading falls back to the route target when standing still") {
  const auto ctx = shibuya_context();
  const Trajectory still = straight_line({-9, -5}, {0, 0}, 3);
  // E(1:2) heads for node 2 at (-9, 0): straight up.
  CHECK(heading_at(ctx, still, 2) == doctest::Approx(std::numbers::pi / 2));
  const Trajectory walk = straight_line({-9, -5}, {-1, 0}, 3);
  CHECK(heading_at(ctx, walk, 2) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("drop_history keeps only the current step") {
  const auto ctx = shibuya_context();
  const Trajectory walk = straight_line({-20, -6}, {1.2, 0.3}, 30);
  Sample s = build_sample(ctx, walk, 25, no_neighbors(walk));
  const LocalWindow before = s.local;
  drop_history(s.local);
  const LocalWindow& w = s.local;
  CHECK(w.rel_pos.size() == before.rel_pos.size());
  for (int k = 0; k < 20; ++k) {
    CHECK(w.valid[static_cast<std::size_t>(k)] == (k == 19 ? 1 : 0));
    for (int c = 0; c < 8; ++c) CHECK(w.rel_pos[static_cast<std::size_t>(k * 8 + c)] == before.rel_pos[19 * 8 + static_cast<std::size_t>(c)]);
    CHECK(w.signal[static_cast<std::size_t>(k)] == before.signal[19]);
  }
}

TEST_CASE("a trajectory yields one sample per record with a successor") {
  const auto ctx = shibuya_context();
  const Trajectory walk = straight_line({-20, -6}, {1.3, 0.2}, 12);
  int count = 0;
  for (std::size_t i = 0; i + 1 < walk.size(); ++i) {
    const Sample s = build_sample(ctx, walk, i, no_neighbors(walk));
    CHECK(s.target_edge >= 0);
    ++count;
  }
  CHECK(count == 11);
}

TEST_CASE("build_sample is deterministic and matches assemble_sample") {
  const auto ctx = shibuya_context();
  const Trajectory walk = straight_line({-20, -6}, {1.3, 0.2}, 25);
  std::vector<std::vector<Vec2>> nb(walk.size());
  Rng rng(8);
  for (std::size_t i = 0; i < walk.size(); ++i)
    for (int k = 0; k < 5; ++k) nb[i].push_back(walk.records[i].p + Vec2{rng.uniform(-3, 3), rng.uniform(-3, 3)});
  const Sample a = build_sample(ctx, walk, 22, nb);
  const Sample b = build_sample(ctx, walk, 22, nb);
  CHECK(a == b);
  std::vector<StepRecord> steps;
  for (std::size_t i = 0; i < walk.size(); ++i) steps.push_back(compute_step(ctx, walk, i, nb[i]));
  std::vector<const StepRecord*> ptrs;
  for (const auto& s : steps) ptrs.push_back(&s);
  CHECK(assemble_sample(ctx, walk, 22, ptrs) == a);
}

}
