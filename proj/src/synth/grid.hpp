#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geom/camera.hpp"
#include "synth/scene.hpp"

namespace df {

// Dense voxel grid of bytes over an axis-aligned box; x varies fastest.
struct BitGrid {
  int nx = 0, ny = 0, nz = 0;
  std::array<double, 6> bounds{};  // min x,y,z then max x,y,z
  std::vector<uint8_t> bits;

  int64_t size() const { return static_cast<int64_t>(nx) * ny * nz; }
  int64_t index(int ix, int iy, int iz) const {
    return static_cast<int64_t>(iz) * ny * nx + static_cast<int64_t>(iy) * nx + ix;
  }
  Vec3 cell_center(int ix, int iy, int iz) const {
    return {bounds[0] + (bounds[3] - bounds[0]) * (ix + 0.5) / nx,
            bounds[1] + (bounds[4] - bounds[1]) * (iy + 0.5) / ny,
            bounds[2] + (bounds[5] - bounds[2]) * (iz + 0.5) / nz};
  }
  // edge length of a volume-equivalent cube
  double cell_edge() const {
    const double v = (bounds[3] - bounds[0]) / nx * (bounds[4] - bounds[1]) / ny * (bounds[5] - bounds[2]) / nz;
    return std::cbrt(v);
  }
};

struct GridSpec {
  int nx = 64, ny = 16, nz = 64;
  std::array<double, 6> bounds{-9, 0, 3, 9, 1, 23};
};

// Cell-center containment against the analytic scene.
BitGrid occupancy_grid_from_scene(const SceneGT& scene, const GridSpec& spec);

// Cell-center visibility from the given camera; cells behind the camera
// count as invisible.
BitGrid visibility_grid_from_scene(const SceneGT& scene, const CameraModel& cam, const GridSpec& spec);

}  // namespace df
