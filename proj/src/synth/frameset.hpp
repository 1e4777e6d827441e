#pragma once

#include "synth/grid.hpp"
#include "synth/scene.hpp"

namespace df {

struct Frame {
  CameraModel cam;
  Tensor image;  // [3,H,W] in [0,1]
  int timestamp = 0;
};

// Frames with their role split: density views are a subset of all
// frames; loss and render views partition them.
struct FrameSet {
  std::vector<Frame> frames;
  std::vector<int> density_views;  // I_D, reference first
  std::vector<int> loss_views;     // I_L
  std::vector<int> render_views;   // I_R

  void validate_roles() const;
};

struct RigConfig {
  int n_cameras = 8;  // stereo pairs of two, advancing along the trajectory
  int n_density_views = 3;
  double baseline_m = 0.5;
  double speed_mps = 2.0;
  double t_offset_min_s = 0.1;
  double t_offset_max_s = 0.8;
  double yaw_jitter_deg = 2.0;
  int image_width = 96;
  int image_height = 64;
  double focal_px = 60.0;
  double gt_march_step = 0.02;
};

// Stereo pairs displaced by the baseline along camera-right; successive
// timestamps advance along +z by speed times a random time offset, with
// a small yaw jitter. Images are rendered from the analytic scene.
FrameSet build_frameset(const SceneGT& scene, const RigConfig& rig, uint64_t seed);

// Camera poses only (no image rendering); used internally and by tests.
std::vector<Frame> build_rig_frames(const RigConfig& rig, uint64_t seed);

}  // namespace df
