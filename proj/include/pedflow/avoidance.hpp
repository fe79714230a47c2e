#pragma once

#include <span>

#include "pedflow/random.hpp"
#include "pedflow/vec2.hpp"

namespace pedflow {

struct AvoidanceParams {
  double a = 10.0;        // 1/m
  double b = 0.8;         // m
  double c = 2.5;         // m per step
  double max_step = 0.6;  // cap on the summed term, m per step

  /// Throws InvalidConfig unless all values are positive.
  void validate() const;
};

/// s(r) = c / (1 + exp(a (r - b)))
double avoidance_magnitude(double r, const AvoidanceParams& params);

/// Repulsive displacement sum_j s(|r_ij|) * (-r_ij / |r_ij|), r_ij = p_j - p_i,
/// clamped to params.max_step. Neighbours closer than 1e-9 m push along a
/// random unit direction drawn from rng (a fixed direction when rng is null);
/// their number is added to *coincident when given.
Vec2 avoidance(Vec2 p, std::span<const Vec2> others, const AvoidanceParams& params, Rng* rng = nullptr,
               int* coincident = nullptr);

}  // namespace pedflow
