#pragma once

#include <span>
#include <vector>

#include "pedflow/vec2.hpp"

namespace pedflow {

using Polygon = std::vector<Vec2>;

/// Even-odd crossing test. Points exactly on an edge may land either side.
bool point_in_polygon(std::span<const Vec2> poly, Vec2 p);

double signed_area(std::span<const Vec2> poly);

}  // namespace pedflow
