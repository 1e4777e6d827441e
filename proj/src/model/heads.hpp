#pragma once

#include <optional>

#include "core/ops.hpp"
#include "core/param.hpp"
#include "core/rng.hpp"
#include "geom/camera.hpp"

namespace df {

// gamma(d, u): raw (normalized depth, pixel x, pixel y) plus 6 sin/cos
// frequency bands per component = 39 values. Depth is normalized in
// inverse depth so that z_near -> 1 and z_far -> 0; pixels to [-1,1].
struct PositionalEncodingConfig {
  int bands = 6;
  double z_near = 3.0;
  double z_far = 23.0;
  int dim() const { return 3 + 3 * 2 * bands; }
};

constexpr int kPosEncodingDim = 39;
constexpr int kHeadInputDim = 64 + kPosEncodingDim;  // feature + encoding
constexpr int kViewFeatureDim = 16;

// Fills out[0..38]; depth in meters, pixel in image coordinates.
void positional_encoding_into(const PositionalEncodingConfig& cfg, double depth_m, double u, double v,
                              const CameraModel& cam, double* out);
Tensor positional_encoding(const PositionalEncodingConfig& cfg, double depth_m, double u, double v,
                           const CameraModel& cam);

// ---- single-view head: input 103, hidden 64 with one post-activation
// residual block, softplus output ----
Tensor density_sv_batch(BoundParams& p, Tape* tp, const Tensor& feats /*[P,64]*/,
                        const Tensor& pes /*[P,39]*/);
Tensor density_sv(BoundParams& p, Tape* tp, const Tensor& feat /*[64]*/, const Tensor& pe /*[39]*/);

// ---- multi-view fusion head ----
// weights over views from confidence logits; exact zeros on masked views
Tensor masked_softmax(Tape* tp, const Tensor& logits /*[V]*/, const ViewMask& mask);

struct MultiViewDensity {
  Tensor sigma;    // [P] (or scalar for the single-point form), >= 0
  Tensor weights;  // [P,V]; empty sentinel when no view is valid
};

// feats/pes are per-view [P,64] / [P,39]; mask_bits is P*V row-major with
// 1 = point projects into view v. Rows with no valid view get sigma == 0.
MultiViewDensity density_mv_batch(BoundParams& p, Tape* tp, const std::vector<Tensor>& feats,
                                  const std::vector<Tensor>& pes, const std::vector<uint8_t>& mask_bits);

MultiViewDensity density_mv(BoundParams& p, Tape* tp, const std::vector<Tensor>& feats /*V x [64]*/,
                            const std::vector<Tensor>& pes /*V x [39]*/, const ViewMask& mask);

void init_head_params(ParamSet& ps, Rng& rng);

// Additive mask tensor [P,V] with 0 on valid and -1e30 on masked slots.
Tensor additive_mask_from_bits(const std::vector<uint8_t>& bits, int p, int v);

}  // namespace df
