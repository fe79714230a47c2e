#include "pedflow/polygon.hpp"

namespace pedflow {

bool point_in_polygon(std::span<const Vec2> poly, Vec2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double signed_area(std::span<const Vec2> poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) a += cross(poly[j], poly[i]);
  return 0.5 * a;
}

}  // namespace pedflow
