#include "pedflow/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "pedflow/csv.hpp"
#include "pedflow/error.hpp"

namespace pedflow::geometry {
namespace {

using Mat34 = Eigen::Matrix<double, 3, 4, Eigen::RowMajor>;

// Similarity transform taking the centroid to the origin and the mean distance
// from it to sqrt(dim).
template <int Dim>
Eigen::Matrix<double, Dim + 1, Dim + 1> normalizer(const std::vector<Eigen::Matrix<double, Dim, 1>>& pts) {
  Eigen::Matrix<double, Dim, 1> centroid = Eigen::Matrix<double, Dim, 1>::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 1e-12 * (1.0 + centroid.norm()))) {
    throw Error(ErrorCode::DegenerateConfiguration, "calibration points are coincident");
  }
  const double s = std::sqrt(static_cast<double>(Dim)) / mean_dist;
  Eigen::Matrix<double, Dim + 1, Dim + 1> t = Eigen::Matrix<double, Dim + 1, Dim + 1>::Identity();
  t.template topLeftCorner<Dim, Dim>() *= s;
  t.template topRightCorner<Dim, 1>() = -s * centroid;
  return t;
}

}  // namespace

ProjectionMatrix::ProjectionMatrix(const std::array<double, 12>& row_major) {
  double frob2 = 0.0;
  for (double v : row_major) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateConfiguration, "projection matrix is not finite");
    frob2 += v * v;
  }
  if (frob2 == 0.0) throw Error(ErrorCode::DegenerateConfiguration, "projection matrix is zero");
  const double frob = std::sqrt(frob2);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < 12; ++i)
    if (std::abs(row_major[i]) > std::abs(row_major[arg])) arg = i;
  const double scale = (row_major[arg] < 0.0 ? -1.0 : 1.0) / frob;
  for (std::size_t i = 0; i < 12; ++i) m_[i] = row_major[i] * scale;

  Mat34 e = Eigen::Map<const Mat34>(m_.data());
  Eigen::JacobiSVD<Mat34> svd(e);
  const auto sv = svd.singularValues();
  if (sv(2) <= 1e-12 * sv(0)) throw Error(ErrorCode::DegenerateConfiguration, "projection matrix is not rank 3");
}

ProjectionMatrix calibrate_dlt(std::span<const Correspondence> points) {
  const std::size_t n = points.size();
  if (n < 6) throw Error(ErrorCode::TooFewPoints, "DLT needs at least 6 correspondences, got " + std::to_string(n));

  std::vector<Eigen::Vector2d> pix(n);
  std::vector<Eigen::Vector3d> wld(n);
  for (std::size_t i = 0; i < n; ++i) {
    pix[i] = {points[i].pixel.u, points[i].pixel.v};
    wld[i] = {points[i].world.X, points[i].world.Y, points[i].world.Z};
    if (!pix[i].allFinite() || !wld[i].allFinite())
      throw Error(ErrorCode::DegenerateConfiguration, "non-finite correspondence");
  }
  const Eigen::Matrix3d tp = normalizer<2>(pix);
  const Eigen::Matrix4d tw = normalizer<3>(wld);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d u = tp * pix[i].homogeneous();
    const Eigen::Vector4d x = tw * wld[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    // u * (m3 . x) - (m1 . x) = 0, v * (m3 . x) - (m2 . x) = 0
    a.block<1, 4>(r, 0) = -x.transpose();
    a.block<1, 4>(r, 8) = u(0) * x.transpose();
    a.block<1, 4>(r + 1, 4) = -x.transpose();
    a.block<1, 4>(r + 1, 8) = u(1) * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // One null direction is expected; a second (near-)zero singular value means
  // the configuration does not determine M.
  if (sv(10) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "DLT design matrix has rank deficiency beyond one");
  }
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Mat34 mn;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) mn(r, c) = h(r * 4 + c);
  const Mat34 m = tp.inverse() * mn * tw;

  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = m(r, c);
  return ProjectionMatrix(out);
}

PixelPoint project(const ProjectionMatrix& m, const WorldPoint3& x) {
  const double xh[4] = {x.X, x.Y, x.Z, 1.0};
  double row[3];
  double mag3 = 0.0;
  for (int r = 0; r < 3; ++r) {
    row[r] = 0.0;
    for (int c = 0; c < 4; ++c) row[r] += m(r, c) * xh[c];
  }
  for (int c = 0; c < 4; ++c) mag3 += std::abs(m(2, c) * xh[c]);
  if (std::abs(row[2]) <= 1e-14 * mag3 || row[2] == 0.0) {
    throw Error(ErrorCode::PointAtInfinity, "scale m3 . x is zero");
  }
  return {row[0] / row[2], row[1] / row[2]};
}

PlanePoint pixel_to_plane(const ProjectionMatrix& m, const PixelPoint& p, double z) {
  // C = [u; v] m3^T - [m1^T; m2^T] = [A | B], A (X, Y)^T = -B (z, 1)^T
  double c[2][4];
  const double uv[2] = {p.u, p.v};
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 4; ++k) c[r][k] = uv[r] * m(2, k) - m(r, k);
  const double a00 = c[0][0], a01 = c[0][1], a10 = c[1][0], a11 = c[1][1];
  const double b0 = -(c[0][2] * z + c[0][3]);
  const double b1 = -(c[1][2] * z + c[1][3]);
  const double det = a00 * a11 - a01 * a10;
  const double scale = std::max({std::abs(a00), std::abs(a01), std::abs(a10), std::abs(a11)});
  if (!(std::abs(det) > 1e-12 * scale * scale)) {
    throw Error(ErrorCode::SingularA, "viewing ray is parallel to the plane Z = " + std::to_string(z));
  }
  return {(a11 * b0 - a01 * b1) / det, (a00 * b1 - a10 * b0) / det};
}

std::vector<double> reprojection_errors(const ProjectionMatrix& m,
                                        std::span<const Correspondence> points) {
  std::vector<double> err;
  err.reserve(points.size());
  for (const auto& c : points) {
    const PixelPoint q = project(m, c.world);
    err.push_back(std::hypot(q.u - c.pixel.u, q.v - c.pixel.v));
  }
  return err;
}

std::vector<Correspondence> read_correspondences_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path, {"u", "v", "X", "Y", "Z"});
  std::vector<Correspondence> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    Correspondence c;
    c.pixel = {csv::to_double(row[0], path, i), csv::to_double(row[1], path, i)};
    c.world = {csv::to_double(row[2], path, i), csv::to_double(row[3], path, i),
               csv::to_double(row[4], path, i)};
    out.push_back(c);
  }
  return out;
}

}  // namespace pedflow::geometry
