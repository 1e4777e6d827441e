#pragma once

#include "core/param.hpp"
#include "render/renderer.hpp"
#include "train/config.hpp"

namespace df {

// Model parameters plus optimizer state and the stage tag. kd-stage
// checkpoints carry the backbone and fusion head frozen.
struct Checkpoint {
  ParamSet params;
  AdamState adam;
  int64_t step = 0;
  std::string stage = "mv";  // "mv" | "kd"
  KvPairs config_snapshot;
};

// Fresh stage-1 model: backbone + both heads; the single-view head is
// frozen until distillation.
Checkpoint init_checkpoint(const Config& cfg, uint64_t seed);

// Files: <stem>.dfld (parameters + frozen flags), <stem>.opt.dfld
// (optimizer moments), <stem>.cfg (stage, step, config snapshot).
void save_checkpoint(const Checkpoint& ckpt, const std::string& stem);
Checkpoint load_checkpoint(const std::string& stem);

// Every non-reference view is dropped independently with the given
// probability; the reference view always survives.
std::vector<int> view_dropout(const std::vector<int>& density_views, double rate, Rng& rng);

struct StepResult {
  double loss = 0;
  double lr = 0;
};

// One self-supervised rendering step: dropout, encode, render patches
// from loss views against render-view colors, photometric+smoothness
// loss, Adam update.
StepResult train_step_mv(Checkpoint& ckpt, const std::vector<const DatasetItem*>& batch, const Config& cfg,
                         Rng& rng);

// One distillation step: the fused multi-view prediction (all available
// views) supervises the single-view head at shared sample points.
StepResult train_step_kd(Checkpoint& ckpt, const std::vector<const DatasetItem*>& batch, const Config& cfg,
                         Rng& rng);

// Teacher/student density agreement on a fixed point set drawn from the
// given items; pure evaluation, no parameter updates.
double kd_loss_on_items(const Checkpoint& ckpt, const std::vector<const DatasetItem*>& items,
                        const Config& cfg, uint64_t seed);

// Converts an mv checkpoint into the kd stage: backbone and fusion head
// frozen, single-view head trainable, fresh optimizer.
void begin_kd_stage(Checkpoint& ckpt);

// Full stage driver: loads <dataset_dir>/train, runs the requested
// stage, writes loss_<stage>.csv, periodic checkpoints every 10% of
// steps, and the final ckpt_<stage> stem under out_dir.
void run_training(const std::string& dataset_dir, const Config& cfg, const std::string& stage,
                  uint64_t seed, const std::string& out_dir);

// Shared helpers (also used by evaluation).
Tensor crop_image(const Tensor& image /*[3,H,W]*/, int x0, int y0, int size);
Tensor flip_image_horizontal(const Tensor& image);
Tensor color_jitter(const Tensor& image, Rng& rng);  // brightness/contrast within ±10%

// Render context for one dataset item at inference time (no dropout, no
// augmentation). n_views limits the density views (0 = all).
RenderContext make_eval_context(BoundParams& bp, const DatasetItem& item,
                                const Config& cfg, DensityHead head, int n_views = 0);

}  // namespace df
