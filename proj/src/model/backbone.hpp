#pragma once

#include "core/ops.hpp"
#include "core/param.hpp"
#include "core/rng.hpp"

namespace df {

// Pixel-aligned feature map: 64 channels at the source image resolution.
// The channel count is the head input contract and is fixed repo-wide.
struct FeatureMap {
  Tensor values;  // [64, H, W]
  int channels() const { return values.dim(0); }
  int height() const { return values.dim(1); }
  int width() const { return values.dim(2); }
};

constexpr int kFeatureChannels = 64;

// Encoder-decoder: three conv blocks (stride 2, stride 2, stride 1;
// channels 16/32/64), two upsample+conv blocks with skips from the first
// encoder block and the input image, then a 1x1 projection to 64 channels.
// Requires H and W divisible by 4.
FeatureMap encode(BoundParams& params, Tape* tape, const Tensor& image);

// Bilinear lookup at a continuous pixel; differentiable w.r.t. the map.
Tensor sample_feature(Tape* tape, const FeatureMap& fmap, double u, double v);

void init_backbone_params(ParamSet& ps, Rng& rng);

}  // namespace df
