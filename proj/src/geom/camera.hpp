#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "geom/vec.hpp"

namespace df {

// Pinhole camera. The pose maps camera coordinates (x right, y down,
// z forward) to world coordinates.
struct CameraModel {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 8, height = 8;
  Rigid pose;  // camera -> world

  void validate() const;

  // Mirror the camera across the world x=0 plane together with a
  // horizontally flipped image; stays a proper rotation.
  CameraModel flipped_horizontal() const;
};

struct Projection {
  double u = 0, v = 0;
  double depth = 0;  // camera-frame z
  bool valid = false;
};

// u' = K [R|t]^-1 x; valid iff depth > 0 and the pixel lands inside
// [0,W-1] x [0,H-1].
Projection project(const CameraModel& cam, const Vec3& point);

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit
  Vec3 at(double t) const { return origin + dir * t; }
};

// Pixel must lie inside the image bounds.
Ray ray_through_pixel(const CameraModel& cam, double u, double v);

enum class SampleMode { InverseDepth, Linear };

struct SamplerConfig {
  int samples_per_ray = 64;
  double z_near = 3.0;
  double z_far = 23.0;
  SampleMode mode = SampleMode::InverseDepth;
  bool jitter = false;
};

struct RaySamples {
  std::vector<double> depths;    // strictly increasing distances along the ray
  std::vector<double> spacings;  // depths[i+1]-depths[i]; last = mean spacing
  std::vector<Vec3> points;
};

// Stratified depths, one sample per stratum (midpoint, or uniform within
// the stratum when jittering). InverseDepth stratifies in 1/d.
RaySamples sample_ray_points(const Ray& ray, const SamplerConfig& cfg, Rng* rng = nullptr);

struct ViewMask {
  std::vector<uint8_t> bits;
  bool any() const {
    for (uint8_t b : bits)
      if (b) return true;
    return false;
  }
  int count() const {
    int n = 0;
    for (uint8_t b : bits) n += b ? 1 : 0;
    return n;
  }
};

ViewMask frustum_mask(const std::vector<CameraModel>& cams, const Vec3& point);

// Text format: line 1 "fx fy cx cy W H", lines 2-5 the rows of the pose.
std::string camera_to_text(const CameraModel& cam);
CameraModel camera_from_text(const std::string& text, const std::string& context);

}  // namespace df
