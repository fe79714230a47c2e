#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pedflow/vec2.hpp"

namespace pedflow {

/// Static environment raster (walkability in [0, 1]), one channel.
///
/// Cell (row, col) covers the square whose centre is
/// origin + ((col + 0.5) * meters_per_cell, (row + 0.5) * meters_per_cell);
/// rows increase with world y.
struct Raster {
  int width = 0;
  int height = 0;
  Vec2 origin;  // world position of the lower-left corner of cell (0, 0)
  double meters_per_cell = 1.0;
  std::vector<float> values;  // row-major, height * width

  bool empty() const { return values.empty(); }
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  /// Bilinear sample between cell centres; cells outside the raster read as 0.
  double sample(Vec2 world) const;
};

/// Loads a PGM (P2 or P5) or a CSV grid (one raster row per line, top row
/// first, like the image) and the sidecar georeference `<file>.geo.json`
/// holding {"origin": [x, y], "meters_per_cell": m}.
Raster load_raster(const std::filesystem::path& path);

/// Writes an ASCII PGM plus its sidecar; values are quantized to 0..255.
void save_raster_pgm(const Raster& raster, const std::filesystem::path& path);

}  // namespace pedflow
