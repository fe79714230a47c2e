#include "pedflow/avoidance.hpp"

#include <cmath>
#include <numbers>

#include "pedflow/error.hpp"

namespace pedflow {

void AvoidanceParams::validate() const {
  if (!(a > 0.0 && b > 0.0 && c > 0.0 && max_step > 0.0))
    throw Error(ErrorCode::InvalidConfig, "avoidance parameters must be positive");
}

double avoidance_magnitude(double r, const AvoidanceParams& params) {
  return params.c / (1.0 + std::exp(params.a * (r - params.b)));
}

Vec2 avoidance(Vec2 p, std::span<const Vec2> others, const AvoidanceParams& params, Rng* rng, int* coincident) {
  Vec2 sum;
  for (const Vec2 o : others) {
    const Vec2 r = o - p;
    const double d = norm(r);
    Vec2 away;
    if (d < 1e-9) {
      const double theta = rng ? 2.0 * std::numbers::pi * rng->uniform() : 0.0;
      away = {std::cos(theta), std::sin(theta)};
      if (coincident) ++*coincident;
    } else {
      away = r * (-1.0 / d);
    }
    sum += avoidance_magnitude(d, params) * away;
  }
  return clamp_norm(sum, params.max_step);
}

}  // namespace pedflow
