#pragma once

#include <string>

#include "geom/camera.hpp"
#include "loss/losses.hpp"
#include "model/heads.hpp"
#include "synth/dataset_io.hpp"
#include "synth/frameset.hpp"
#include "synth/grid.hpp"
#include "synth/scene.hpp"

namespace df {

// Flat key=value configuration shared by every pipeline command. Unknown
// keys are rejected.
struct Config {
  // dataset generation
  int image_width = 96;
  int image_height = 64;
  int n_train_scenes = 64;
  int n_test_scenes = 16;
  int n_primitives_min = 4;
  int n_primitives_max = 7;
  double sigma_solid = 50.0;
  int n_cameras = 8;
  int n_density_views = 3;
  double baseline_m = 0.5;
  double speed_mps = 2.0;
  double t_offset_min_s = 0.1;
  double t_offset_max_s = 0.8;
  double yaw_jitter_deg = 2.0;
  double focal_px = 60.0;
  double gt_march_step = 0.02;
  int n_backdrop_segments = 5;
  int n_floor_tiles = 8;

  // ray sampling
  int samples_per_ray = 64;
  double z_near = 3.0;
  double z_far = 23.0;
  std::string ray_mode = "inverse";  // "inverse" | "linear"

  // training
  int batch_size = 8;
  int patches_per_item = 32;
  int patch_size = 8;
  int steps_mv = 20000;
  int steps_kd = 2000;
  double lr = 1e-4;
  double lr_late = 1e-5;
  double late_fraction = 0.2;
  double lr_kd = 1e-4;
  double view_dropout_rate = 0.5;
  bool aug_color = true;
  bool aug_flip = true;
  double lambda_l1 = 0.15;
  double lambda_ssim = 0.85;
  double lambda_eas = 1e-3;
  std::string init_checkpoint;  // distillation teacher stem

  // evaluation
  int grid_nx = 64;
  int grid_ny = 16;
  int grid_nz = 64;
  double ext_x_min = -9, ext_x_max = 9;
  double ext_y_min = 0, ext_y_max = 1;
  double ext_z_min = 3, ext_z_max = 23;
  double tau_occ = 0.0;  // 0 = ln2 / cell edge
  int eval_samples_per_ray = 64;

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  KvPairs to_kv() const;  // resolved snapshot, fixed order
  void save(const std::string& path) const;

  // typed views
  SceneGenConfig scene_config() const;
  RigConfig rig_config() const;
  GridSpec grid_spec() const;
  SamplerConfig sampler_config(bool jitter) const;
  LossConfig loss_config() const;
  PositionalEncodingConfig pe_config() const;
  double resolved_tau_occ() const;
};

}  // namespace df
