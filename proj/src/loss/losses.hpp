#pragma once

#include "core/ops.hpp"

namespace df {

struct LossConfig {
  double lambda_l1 = 0.15;
  double lambda_ssim = 0.85;
  double lambda_eas = 1e-3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
};

// Ground-truth patches, their per-render-view reconstructions, and the
// rendered depth. Patch layout is [B,3,s,s] / [B,s,s].
struct PatchBatch {
  Tensor targets;              // [B,3,s,s] constants in [0,1]
  std::vector<Tensor> recons;  // K x [B,3,s,s]
  Tensor depth;                // [B,s,s]
};

// Per-pixel SSIM in [-1,1], 3x3 mean filtering with reflected borders,
// averaged over the channel axis. Inputs [...,3,H,W] -> [...,H,W].
Tensor ssim_map(Tape* tp, const Tensor& a, const Tensor& b, const LossConfig& cfg);

// Per pixel: min over render views of
//   lambda_l1 * |P - P_k|_1 + lambda_ssim * (1 - SSIM_k)/2
// (channel means), then the mean over pixels and patches.
Tensor photometric_loss(Tape* tp, const PatchBatch& batch, const LossConfig& cfg);

// Forward differences of mean-normalized inverse depth, attenuated by
// image gradients. depth [...,H,W] (> 0), image [...,3,H,W].
Tensor edge_aware_smoothness(Tape* tp, const Tensor& depth, const Tensor& image, const LossConfig& cfg);

// photometric + lambda_eas * smoothness; the smoothness input is floored
// at a tiny positive depth so fully transparent rays stay finite.
Tensor total_loss(Tape* tp, const PatchBatch& batch, const LossConfig& cfg);

// mean |stop_gradient(teacher) - student|; no gradient reaches teacher
// parameters.
Tensor kd_loss(Tape* tp, const Tensor& sigma_teacher, const Tensor& sigma_student);

}  // namespace df
