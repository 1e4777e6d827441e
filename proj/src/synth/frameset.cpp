#include "synth/frameset.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace df {

void FrameSet::validate_roles() const {
  const int n = static_cast<int>(frames.size());
  std::vector<int> role(static_cast<size_t>(n), 0);
  for (int i : loss_views) {
    require(i >= 0 && i < n, "frameset: loss view index out of range");
    role[static_cast<size_t>(i)] |= 1;
  }
  for (int i : render_views) {
    require(i >= 0 && i < n, "frameset: render view index out of range");
    require((role[static_cast<size_t>(i)] & 1) == 0, "frameset: loss and render views must be disjoint");
    role[static_cast<size_t>(i)] |= 2;
  }
  for (int i = 0; i < n; ++i)
    require(role[static_cast<size_t>(i)] != 0, "frameset: every frame must be a loss or render view");
  require(!density_views.empty(), "frameset: need at least one density view");
  for (int i : density_views) require(i >= 0 && i < n, "frameset: density view index out of range");
}

std::vector<Frame> build_rig_frames(const RigConfig& rig, uint64_t seed) {
  require(rig.n_cameras >= 3, "build_frameset: need at least 3 cameras to separate density/loss/render roles");
  Rng rng(seed ^ 0xF7A3E5ull);
  std::vector<Frame> frames;
  double z = 0.0;
  int timestamp = 0;
  const double deg = 3.141592653589793 / 180.0;
  while (static_cast<int>(frames.size()) < rig.n_cameras) {
    if (timestamp > 0) z += rig.speed_mps * rng.uniform(rig.t_offset_min_s, rig.t_offset_max_s);
    const double yaw = rng.uniform(-rig.yaw_jitter_deg, rig.yaw_jitter_deg) * deg;
    CameraModel left;
    left.fx = left.fy = rig.focal_px;
    left.width = rig.image_width;
    left.height = rig.image_height;
    left.cx = (rig.image_width - 1) / 2.0;
    left.cy = (rig.image_height - 1) / 2.0;
    left.pose.R = Mat3::rot_y(yaw);
    left.pose.t = {-rig.baseline_m / 2.0, 0.0, z};
    frames.push_back({left, Tensor(), timestamp});
    if (static_cast<int>(frames.size()) < rig.n_cameras) {
      CameraModel right = left;
      // displaced along camera-right
      const Vec3 r_axis = left.pose.R.col(0);
      right.pose.t = left.pose.t + r_axis * rig.baseline_m;
      frames.push_back({right, Tensor(), timestamp});
    }
    ++timestamp;
  }
  return frames;
}

FrameSet build_frameset(const SceneGT& scene, const RigConfig& rig, uint64_t seed) {
  FrameSet fs;
  fs.frames = build_rig_frames(rig, seed);
  for (auto& f : fs.frames) f.image = render_gt_image(scene, f.cam, rig.gt_march_step);

  // lefts (even indices) carry the loss, rights render colors; density
  // views are the first lefts
  for (int i = 0; i < static_cast<int>(fs.frames.size()); ++i)
    (i % 2 == 0 ? fs.loss_views : fs.render_views).push_back(i);
  const int n_lefts = static_cast<int>(fs.loss_views.size());
  require(rig.n_density_views >= 1 && rig.n_density_views <= n_lefts,
          "build_frameset: density view count must be between 1 and the number of stereo-left frames");
  for (int k = 0; k < rig.n_density_views; ++k) fs.density_views.push_back(2 * k);
  fs.validate_roles();
  return fs;
}

BitGrid occupancy_grid_from_scene(const SceneGT& scene, const GridSpec& spec) {
  BitGrid g;
  g.nx = spec.nx;
  g.ny = spec.ny;
  g.nz = spec.nz;
  g.bounds = spec.bounds;
  g.bits.assign(static_cast<size_t>(g.size()), 0);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix)
        g.bits[static_cast<size_t>(g.index(ix, iy, iz))] = gt_density(scene, g.cell_center(ix, iy, iz)) > 0 ? 1 : 0;
  return g;
}

BitGrid visibility_grid_from_scene(const SceneGT& scene, const CameraModel& cam, const GridSpec& spec) {
  BitGrid g;
  g.nx = spec.nx;
  g.ny = spec.ny;
  g.nz = spec.nz;
  g.bounds = spec.bounds;
  g.bits.assign(static_cast<size_t>(g.size()), 0);
  const Rigid world_to_cam = cam.pose.inverse();
  for (int iz = 0; iz < g.nz; ++iz)
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        const Vec3 c = g.cell_center(ix, iy, iz);
        if (world_to_cam.apply(c).z <= 0.0) continue;  // behind: invisible
        g.bits[static_cast<size_t>(g.index(ix, iy, iz))] = visibility(scene, cam, c) ? 1 : 0;
      }
  return g;
}

}  // namespace df
