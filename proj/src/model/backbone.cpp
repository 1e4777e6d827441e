#include "model/backbone.hpp"

namespace df {

namespace {

Tensor conv_block(BoundParams& p, Tape* tp, const Tensor& x, const std::string& name, int stride) {
  return relu(tp, conv2d(tp, x, p("backbone." + name + ".w"), p("backbone." + name + ".b"), stride, 1));
}

Tensor he_conv(Rng& rng, int co, int ci, int k) {
  std::vector<double> w(static_cast<size_t>(co) * ci * k * k);
  const double s = std::sqrt(2.0 / (ci * k * k));
  for (auto& v : w) v = rng.normal(0.0, s);
  return Tensor::from({co, ci, k, k}, std::move(w));
}

}  // namespace

FeatureMap encode(BoundParams& p, Tape* tp, const Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, "encode: image must be [3,H,W], got " + shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  require(h % 4 == 0 && w % 4 == 0, "encode: image extents must be divisible by 4, got " + shape_str(image.shape()));

  Tensor e1 = conv_block(p, tp, image, "enc1", 2);  // [16, h/2, w/2]
  Tensor e2 = conv_block(p, tp, e1, "enc2", 2);     // [32, h/4, w/4]
  Tensor e3 = conv_block(p, tp, e2, "enc3", 1);     // [64, h/4, w/4]

  Tensor d1_in = concat(tp, {upsample_nearest2(tp, e3), e1}, 0);  // [80, h/2, w/2]
  Tensor d1 = conv_block(p, tp, d1_in, "dec1", 1);                // [12, h/2, w/2]

  Tensor d2_in = concat(tp, {upsample_nearest2(tp, d1), image}, 0);  // [15, h, w]
  Tensor d2 = conv_block(p, tp, d2_in, "dec2", 1);                   // [12, h, w]

  Tensor out = conv2d(tp, d2, p("backbone.out.w"), p("backbone.out.b"), 1, 0);  // [64, h, w]
  return FeatureMap{out};
}

Tensor sample_feature(Tape* tape, const FeatureMap& fmap, double u, double v) {
  Tensor row = bilinear_sample(tape, fmap.values, {u, v});  // [1, C]
  return reshape(tape, row, {fmap.channels()});
}

void init_backbone_params(ParamSet& ps, Rng& rng) {
  ps.insert("backbone.enc1.w", he_conv(rng, 16, 3, 3));
  ps.insert("backbone.enc1.b", Tensor::zeros({16}));
  ps.insert("backbone.enc2.w", he_conv(rng, 32, 16, 3));
  ps.insert("backbone.enc2.b", Tensor::zeros({32}));
  ps.insert("backbone.enc3.w", he_conv(rng, 64, 32, 3));
  ps.insert("backbone.enc3.b", Tensor::zeros({64}));
  ps.insert("backbone.dec1.w", he_conv(rng, 12, 80, 3));
  ps.insert("backbone.dec1.b", Tensor::zeros({12}));
  ps.insert("backbone.dec2.w", he_conv(rng, 12, 15, 3));
  ps.insert("backbone.dec2.b", Tensor::zeros({12}));
  ps.insert("backbone.out.w", he_conv(rng, kFeatureChannels, 12, 1));
  ps.insert("backbone.out.b", Tensor::zeros({kFeatureChannels}));
}

}  // namespace df
