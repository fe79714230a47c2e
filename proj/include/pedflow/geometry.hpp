#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace pedflow::geometry {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

struct WorldPoint3 {
  double X = 0.0;
  double Y = 0.0;
  double Z = 0.0;
};

struct PlanePoint {
  double X = 0.0;
  double Y = 0.0;
};

struct Correspondence {
  PixelPoint pixel;
  WorldPoint3 world;
};

/// Pedestrians are located at the centre of a bounding box of this height.
inline constexpr double kPersonHeight = 2.0;
inline constexpr double kPedestrianPlaneZ = kPersonHeight / 2.0;

/// 3x4 camera projection matrix, s [u v 1]^T = M [X Y Z 1]^T.
///
/// Stored normalized: unit Frobenius norm, with the largest-magnitude entry
/// positive. Construction rejects non-finite, zero or rank-deficient input.
class ProjectionMatrix {
 public:
  explicit ProjectionMatrix(const std::array<double, 12>& row_major);

  double operator()(int row, int col) const { return m_[static_cast<std::size_t>(row * 4 + col)]; }
  const std::array<double, 12>& row_major() const { return m_; }

 private:
  std::array<double, 12> m_{};
};

/// Direct linear transform over >= 6 correspondences, with Hartley-style
/// normalization of both point sets before the SVD.
ProjectionMatrix calibrate_dlt(std::span<const Correspondence> points);

PixelPoint project(const ProjectionMatrix& m, const WorldPoint3& x);

/// Intersects the viewing ray of pixel p with the horizontal plane Z = z.
PlanePoint pixel_to_plane(const ProjectionMatrix& m, const PixelPoint& p, double z);

/// Euclidean pixel distance between project(world) and the observed pixel.
std::vector<double> reprojection_errors(const ProjectionMatrix& m,
                                        std::span<const Correspondence> points);

/// CSV with header u,v,X,Y,Z.
std::vector<Correspondence> read_correspondences_csv(const std::filesystem::path& path);

}  // namespace pedflow::geometry
