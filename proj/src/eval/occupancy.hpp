#pragma once

#include "eval/metrics.hpp"
#include "train/trainer.hpp"

namespace df {

struct OccupancyPrediction {
  BitGrid bits;
  std::vector<double> sigma;  // raw densities, same layout as bits
};

// Inference modes: "sv" and "kd" query the single-view head; "mv-<k>view"
// fuses the first k density views; "mv-nview" uses all of them.
struct EvalMode {
  DensityHead head = DensityHead::MultiView;
  int n_views = 0;  // 0 = all
};
EvalMode parse_eval_mode(const std::string& mode);

// Queries the field at every cell center and thresholds at tau.
OccupancyPrediction predict_occupancy_grid(const RenderContext& ctx, const GridSpec& spec, double tau);

// Convenience: build the context for a dataset item from a checkpoint.
OccupancyPrediction predict_occupancy_grid(const Checkpoint& ckpt, const DatasetItem& item,
                                           const Config& cfg, const std::string& mode);

// Occupancy metrics for one mode over a test set; confusion counts are
// pooled across scenes. Optionally also returns per-scene reports.
MetricsReport evaluate_occupancy(const Checkpoint& ckpt, const Dataset& test, const Config& cfg,
                                 const std::string& mode, std::vector<MetricsReport>* per_scene = nullptr);

// Expected-termination depth map for the item's reference view.
Tensor render_depth_map(const Checkpoint& ckpt, const DatasetItem& item, const Config& cfg,
                        const std::string& mode);

// Exact first-surface distances; mask selects rays hitting inside
// [z_near, z_far].
void gt_depth_map(const SceneGT& scene, const CameraModel& cam, double z_near, double z_far,
                  Tensor& depth, Tensor& mask);

// Depth metrics pooled over all test scenes for one mode.
MetricsReport evaluate_depth(const Checkpoint& ckpt, const Dataset& test, const Config& cfg,
                             const std::string& mode);

// Top-down profile: per (x,z) column, transmittance through the y axis,
// occupied dark. Writes a PPM of nx by nz pixels (far z at the top).
void render_profile(const std::vector<double>& sigma, const GridSpec& spec, const std::string& path);

}  // namespace df
