#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pedflow/error.hpp"
#include "pedflow/geometry.hpp"
#include "support/camera.hpp"
#include "support/fixtures.hpp"

using namespace pedflow;
using namespace pedflow::geometry;
namespace t = pedflow::testing;

namespace {

ProjectionMatrix identity_camera() { return ProjectionMatrix({1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0}); }

double max_reprojection(const ProjectionMatrix& M, const std::vector<Correspondence>& pts) {
  const auto e = reprojection_errors(M, pts);
  return *std::max_element(e.begin(), e.end());
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("projection matrix is stored normalized") {
  const ProjectionMatrix M({-2, 0, 0, 0, 0, -2, 0, 0, 0, 0, -2, 0});
  double f = 0.0;
  for (double v : M.row_major()) f += v * v;
  CHECK(f == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(M(0, 0) > 0.0);
  CHECK_THROWS_AS(ProjectionMatrix({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}), Error);
  CHECK_THROWS_AS(ProjectionMatrix({1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 1, 0}), Error);
}

TEST_CASE("identity camera projects and back-projects at Z = 1") {
  const auto M = identity_camera();
  const auto p = project(M, {2, 3, 1});
  CHECK(p.u == doctest::Approx(2.0));
  CHECK(p.v == doctest::Approx(3.0));
  const auto o = project(M, {0, 0, 1});
  CHECK(o.u == 0.0);
  CHECK(o.v == 0.0);
  const auto q = pixel_to_plane(M, {2, 3}, 1.0);
  CHECK(q.X == doctest::Approx(2.0));
  CHECK(q.Y == doctest::Approx(3.0));
}

TEST_CASE("zero scale is a point at infinity") {
  try {
    (void)project(identity_camera(), {1, 1, 0});
    FAIL("expected PointAtInfinity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointAtInfinity);
  }
}

TEST_CASE("viewing ray parallel to the plane is SingularA") {
  // Y never reaches the image, so every ray runs along Y inside Z = const.
  const ProjectionMatrix M({1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  try {
    (void)pixel_to_plane(M, {0.5, 1.0}, 1.0);
    FAIL("expected SingularA");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularA);
  }
}

TEST_CASE("noise-free DLT recovers the camera") {
  const auto truth = t::street_camera();
  const auto layout = t::crosswalk_layout();
  const std::vector<WorldPoint3> world{layout[0], layout[1], layout[2], layout[9], layout[11], layout[14]};
  const auto pts = t::correspondences(truth, world);
  const auto M = calibrate_dlt(pts);
  const auto expected = t::normalize(truth);
  for (std::size_t i = 0; i < 12; ++i) CHECK(M.row_major()[i] == doctest::Approx(expected[i]).epsilon(1e-9));
  CHECK(max_reprojection(M, pts) < 1e-8);
}

TEST_CASE("DLT rejects too few and degenerate inputs") {
  const auto truth = t::street_camera();
  auto pts = t::correspondences(truth, t::crosswalk_layout());
  std::vector<Correspondence> five(pts.begin(), pts.begin() + 5);
  try {
    (void)calibrate_dlt(five);
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewPoints);
  }
  std::vector<Correspondence> same(8, pts[0]);
  try {
    (void)calibrate_dlt(same);
    FAIL("expected DegenerateConfiguration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateConfiguration);
  }
}

TEST_CASE("noisy crosswalk calibration stays below a pixel") {
  const auto truth = t::street_camera();
  Rng rng(2024);
  double total = 0.0;
  const int trials = 20;
  for (int k = 0; k < trials; ++k) {
    const auto pts = t::correspondences(truth, t::crosswalk_layout(), 0.5, &rng);
    const auto e = reprojection_errors(calibrate_dlt(pts), pts);
    double mean = 0.0;
    for (double v : e) mean += v;
    mean /= static_cast<double>(e.size());
    CHECK(mean < 1.0);
    total += mean;
  }
  MESSAGE("mean reprojection error " << total / trials << " px");
}

TEST_CASE("DLT is invariant to the order of correspondences") {
  const auto truth = t::street_camera();
  Rng rng(5);
  auto pts = t::correspondences(truth, t::crosswalk_layout(), 0.5, &rng);
  const auto a = calibrate_dlt(pts).row_major();
  rng.shuffle(pts);
  const auto b = calibrate_dlt(pts).row_major();
  for (std::size_t i = 0; i < 12; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
}

TEST_CASE("reprojection stays exact as noise-free points are added") {
  const auto truth = t::street_camera();
  const auto layout = t::crosswalk_layout();
  std::vector<WorldPoint3> order{layout[0], layout[1], layout[2], layout[9], layout[11], layout[14]};
  for (std::size_t k : {3, 4, 5, 6, 7, 8, 10, 12, 13, 15}) order.push_back(layout[k]);
  const auto all = t::correspondences(truth, order);
  for (std::size_t n = 6; n <= all.size(); ++n) {
    std::vector<Correspondence> pts(all.begin(), all.begin() + static_cast<long>(n));
    INFO("n = " << n);
    CHECK(max_reprojection(calibrate_dlt(pts), pts) < 1e-8);
  }
}

TEST_CASE("pixel_to_plane inverts project over random cameras") {
  Rng rng(77);
  for (int cam = 0; cam < 5; ++cam) {
    const auto M = ProjectionMatrix(t::look_at_camera({rng.uniform(-30, 30), rng.uniform(-30, -10), rng.uniform(6, 20)},
                                                      {rng.uniform(-3, 3), rng.uniform(-3, 3), 0.0},
                                                      rng.uniform(800, 2500), 1920, 1080));
    for (int i = 0; i < 100; ++i) {
      const WorldPoint3 x{rng.uniform(-12, 12), rng.uniform(-8, 8), 1.0};
      const auto back = pixel_to_plane(M, project(M, x), 1.0);
      CHECK(std::abs(back.X - x.X) <= 1e-9 * std::max(1.0, std::abs(x.X)));
      CHECK(std::abs(back.Y - x.Y) <= 1e-9 * std::max(1.0, std::abs(x.Y)));
    }
  }
}

TEST_CASE("correspondence CSV needs its header") {
  t::TempDir dir("geom");
  t::spit(dir / "ok.csv", "u,v,X,Y,Z\n1,2,3,4,5\n6,7,8,9,10\n");
  const auto pts = read_correspondences_csv(dir / "ok.csv");
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].pixel.u == 6.0);
  CHECK(pts[1].world.Z == 10.0);
  t::spit(dir / "bad.csv", "1,2,3,4,5\n");
  CHECK_THROWS_AS(read_correspondences_csv(dir / "bad.csv"), Error);
}

}
