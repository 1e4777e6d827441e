#pragma once

#include <array>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "geom/camera.hpp"

namespace df {

// World frame: x right, y down, z forward. The ground plane sits below
// the cameras at y = height; "underground" (y > height) is solid.
struct Primitive {
  enum class Kind { Box, Sphere };
  Kind kind = Kind::Box;
  Vec3 center;
  Vec3 half_extents;    // box
  double radius = 0.5;  // sphere
  std::array<double, 3> albedo{0.5, 0.5, 0.5};
  double sigma_solid = 50.0;

  bool contains(const Vec3& p) const;
  // conservative axis-aligned bound (exact for boxes)
  void aabb(Vec3& lo, Vec3& hi) const;
};

struct GroundPlane {
  double height = 1.0;
  std::array<double, 3> albedo{0.35, 0.35, 0.35};
  double sigma_solid = 50.0;
};

struct SceneGT {
  std::vector<Primitive> primitives;
  GroundPlane ground;
  Vec3 bounds_min{-9, -3, 3};
  Vec3 bounds_max{9, 1.5, 23};
  uint64_t seed = 0;
};

struct SceneGenConfig {
  int n_primitives_min = 4;
  int n_primitives_max = 7;
  double sigma_solid = 50.0;
  double place_x_min = -8, place_x_max = 8;
  double place_z_min = 4.5, place_z_max = 21.5;
  double box_half_min = 0.4, box_half_max = 1.5;
  double sphere_r_min = 0.4, sphere_r_max = 1.2;
  double max_overlap_fraction = 0.5;
  // texture-bearing structure: colored backdrop segments closing off the
  // far end and thin floor tiles breaking up the ground
  int n_backdrop_segments = 5;
  double backdrop_z = 22.0;
  double backdrop_height = 6.0;
  int n_floor_tiles = 8;
  double tile_half_min = 1.0, tile_half_max = 3.0;
  double tile_thickness = 0.1;
};

// Deterministic in seed; rejects placements overlapping an existing
// primitive by more than max_overlap_fraction of the smaller volume.
SceneGT generate_scene(uint64_t seed, const SceneGenConfig& cfg);

// sigma_solid inside any primitive or below the ground plane, else 0.
double gt_density(const SceneGT& scene, const Vec3& point);

// Albedo of the solid matter at a point (first containing primitive,
// then ground); black in free space.
std::array<double, 3> gt_albedo(const SceneGT& scene, const Vec3& point);

// Fixed-step ray marching against the analytic density, flat shading by
// albedo, black background. Returns [3,H,W].
Tensor render_gt_image(const SceneGT& scene, const CameraModel& cam, double step);

// Solid spans along a ray as (t_enter, t_exit, sigma); overlaps resolved
// by the max density, matching gt_density.
struct SolidSpan {
  double t0, t1, sigma;
};
std::vector<SolidSpan> solid_spans(const SceneGT& scene, const Ray& ray, double t_max);

// Exact optical depth of the segment [0, t_len] along the ray.
double optical_depth(const SceneGT& scene, const Ray& ray, double t_len);

// Smallest t >= 0 where the ray enters solid matter; +inf when it never
// does within t_max.
double first_hit(const SceneGT& scene, const Ray& ray, double t_max);

// True iff the segment from the camera center to the point accumulates
// optical depth below ln 2. The point must be in front of the camera.
bool visibility(const SceneGT& scene, const CameraModel& cam, const Vec3& point);

}  // namespace df
