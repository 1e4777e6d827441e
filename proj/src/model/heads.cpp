#include "model/heads.hpp"

#include <cmath>

#include "model/backbone.hpp"

namespace df {

namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kMasked = -1e30;

double normalize_depth(const PositionalEncodingConfig& cfg, double d) {
  const double inv = 1.0 / std::min(std::max(d, cfg.z_near), cfg.z_far);
  return (inv - 1.0 / cfg.z_far) / (1.0 / cfg.z_near - 1.0 / cfg.z_far);
}

Tensor he_linear(Rng& rng, int in, int out) {
  std::vector<double> w(static_cast<size_t>(in) * out);
  const double s = std::sqrt(2.0 / in);
  for (auto& v : w) v = rng.normal(0.0, s);
  return Tensor::from({in, out}, std::move(w));
}

// two weight layers around one post-activation residual block at the
// hidden width; final layer is affine
Tensor res_mlp(BoundParams& p, Tape* tp, const Tensor& x, const std::string& prefix) {
  Tensor h = relu(tp, linear(tp, x, p(prefix + ".w_in"), p(prefix + ".b_in")));
  Tensor r = relu(tp, add(tp, h, linear(tp, h, p(prefix + ".w_res"), p(prefix + ".b_res"))));
  return linear(tp, r, p(prefix + ".w_out"), p(prefix + ".b_out"));
}

Tensor plain_mlp(BoundParams& p, Tape* tp, const Tensor& x, const std::string& prefix) {
  Tensor h = relu(tp, linear(tp, x, p(prefix + ".w_in"), p(prefix + ".b_in")));
  return linear(tp, h, p(prefix + ".w_out"), p(prefix + ".b_out"));
}

}  // namespace

void positional_encoding_into(const PositionalEncodingConfig& cfg, double depth_m, double u, double v,
                              const CameraModel& cam, double* out) {
  const double comps[3] = {normalize_depth(cfg, depth_m), 2.0 * u / (cam.width - 1) - 1.0,
                           2.0 * v / (cam.height - 1) - 1.0};
  int at = 0;
  out[at++] = comps[0];
  out[at++] = comps[1];
  out[at++] = comps[2];
  for (int c = 0; c < 3; ++c) {
    double f = kPi;
    for (int b = 0; b < cfg.bands; ++b) {
      double s, cv;
#if defined(__GNUC__)
      ::sincos(f * comps[c], &s, &cv);
#else
      s = std::sin(f * comps[c]);
      cv = std::cos(f * comps[c]);
#endif
      out[at++] = s;
      out[at++] = cv;
      f *= 2.0;
    }
  }
}

Tensor positional_encoding(const PositionalEncodingConfig& cfg, double depth_m, double u, double v,
                           const CameraModel& cam) {
  std::vector<double> e(static_cast<size_t>(cfg.dim()));
  positional_encoding_into(cfg, depth_m, u, v, cam, e.data());
  return Tensor::from({cfg.dim()}, std::move(e));
}

Tensor density_sv_batch(BoundParams& p, Tape* tp, const Tensor& feats, const Tensor& pes) {
  require(feats.rank() == 2 && feats.dim(1) == kFeatureChannels,
          "density_sv: features must be [P,64], got " + shape_str(feats.shape()));
  require(pes.rank() == 2 && pes.dim(1) == kPosEncodingDim && pes.dim(0) == feats.dim(0),
          "density_sv: encodings must be [P,39], got " + shape_str(pes.shape()));
  Tensor x = concat(tp, {feats, pes}, 1);
  Tensor z = res_mlp(p, tp, x, "sv");                    // [P,1]
  return softplus(tp, reshape(tp, z, {feats.dim(0)}));  // [P]
}

Tensor density_sv(BoundParams& p, Tape* tp, const Tensor& feat, const Tensor& pe) {
  Tensor s = density_sv_batch(p, tp, reshape(tp, feat, {1, kFeatureChannels}),
                              reshape(tp, pe, {1, kPosEncodingDim}));
  return reshape(tp, s, {});
}

Tensor additive_mask_from_bits(const std::vector<uint8_t>& bits, int p, int v) {
  require(static_cast<int64_t>(bits.size()) == static_cast<int64_t>(p) * v,
          "mask bits length does not match P*V");
  std::vector<double> m(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) m[i] = bits[i] ? 0.0 : kMasked;
  return Tensor::from({p, v}, std::move(m));
}

Tensor masked_softmax(Tape* tp, const Tensor& logits, const ViewMask& mask) {
  require(logits.rank() == 1, "masked_softmax: logits must be a vector");
  require(static_cast<size_t>(logits.dim(0)) == mask.bits.size(),
          "masked_softmax: logits/mask length mismatch");
  require(mask.any(), "masked_softmax: point is invisible to all density views");
  Tensor add_mask = additive_mask_from_bits(mask.bits, 1, logits.dim(0));
  Tensor w = softmax_mask(tp, reshape(tp, logits, {1, logits.dim(0)}), add_mask);
  return reshape(tp, w, {logits.dim(0)});
}

MultiViewDensity density_mv_batch(BoundParams& p, Tape* tp, const std::vector<Tensor>& feats,
                                  const std::vector<Tensor>& pes, const std::vector<uint8_t>& mask_bits) {
  const int v = static_cast<int>(feats.size());
  require(v >= 1 && feats.size() == pes.size(), "density_mv: need matching per-view features and encodings");
  const int pn = feats[0].dim(0);
  require(static_cast<int64_t>(mask_bits.size()) == static_cast<int64_t>(pn) * v,
          "density_mv: mask length must be P*V");

  // per-view tokens: confidence logit + 16 feature channels
  std::vector<Tensor> logit_cols, tok_slabs;
  for (int k = 0; k < v; ++k) {
    require(feats[static_cast<size_t>(k)].dim(0) == pn && pes[static_cast<size_t>(k)].dim(0) == pn,
            "density_mv: inconsistent point counts across views");
    Tensor x = concat(tp, {feats[static_cast<size_t>(k)], pes[static_cast<size_t>(k)]}, 1);  // [P,103]
    Tensor out = plain_mlp(p, tp, x, "mv.mlp1");                                             // [P,17]
    logit_cols.push_back(slice(tp, out, {0, 0}, {pn, 1}));                                   // [P,1]
    tok_slabs.push_back(reshape(tp, slice(tp, out, {0, 1}, {pn, 17}), {pn, 1, kViewFeatureDim}));
  }
  Tensor logits = concat(tp, logit_cols, 1);                    // [P,V]
  Tensor weights = softmax_mask(tp, logits, additive_mask_from_bits(mask_bits, pn, v));
  Tensor toks = concat(tp, tok_slabs, 1);                       // [P,V,16]
  Tensor fused = sum_axis(tp, mul(tp, reshape(tp, weights, {pn, v, 1}), toks), 1);  // [P,16]

  Tensor z = plain_mlp(p, tp, fused, "mv.mlp2");                // [P,1]
  Tensor sigma = softplus(tp, reshape(tp, z, {pn}));

  // rows with no valid view are forced to zero density
  std::vector<double> any(static_cast<size_t>(pn), 0.0);
  bool all_valid = true;
  for (int i = 0; i < pn; ++i) {
    uint8_t a = 0;
    for (int k = 0; k < v; ++k) a |= mask_bits[static_cast<size_t>(i) * v + static_cast<size_t>(k)];
    any[static_cast<size_t>(i)] = a ? 1.0 : 0.0;
    all_valid = all_valid && a;
  }
  if (!all_valid) sigma = mul(tp, sigma, Tensor::from({pn}, std::move(any)));
  return {sigma, weights};
}

MultiViewDensity density_mv(BoundParams& p, Tape* tp, const std::vector<Tensor>& feats,
                            const std::vector<Tensor>& pes, const ViewMask& mask) {
  const int v = static_cast<int>(feats.size());
  require(v >= 1 && mask.bits.size() == feats.size(), "density_mv: mask length must equal the view count");
  if (!mask.any()) return {Tensor::scalar(0.0), Tensor()};  // invisible everywhere: transparent
  std::vector<Tensor> f2, p2;
  for (int k = 0; k < v; ++k) {
    f2.push_back(reshape(tp, feats[static_cast<size_t>(k)], {1, kFeatureChannels}));
    p2.push_back(reshape(tp, pes[static_cast<size_t>(k)], {1, kPosEncodingDim}));
  }
  MultiViewDensity r = density_mv_batch(p, tp, f2, p2, mask.bits);
  return {reshape(tp, r.sigma, {}), reshape(tp, r.weights, {v})};
}

void init_head_params(ParamSet& ps, Rng& rng) {
  const double density_bias = -2.25;  // softplus(-2.25) ~ 0.1: gentle initial opacity

  ps.insert("sv.w_in", he_linear(rng, kHeadInputDim, 64));
  ps.insert("sv.b_in", Tensor::zeros({64}));
  ps.insert("sv.w_res", he_linear(rng, 64, 64));
  ps.insert("sv.b_res", Tensor::zeros({64}));
  ps.insert("sv.w_out", he_linear(rng, 64, 1));
  ps.insert("sv.b_out", Tensor::full({1}, density_bias));

  ps.insert("mv.mlp1.w_in", he_linear(rng, kHeadInputDim, 128));
  ps.insert("mv.mlp1.b_in", Tensor::zeros({128}));
  ps.insert("mv.mlp1.w_out", he_linear(rng, 128, 1 + kViewFeatureDim));
  ps.insert("mv.mlp1.b_out", Tensor::zeros({1 + kViewFeatureDim}));

  ps.insert("mv.mlp2.w_in", he_linear(rng, kViewFeatureDim, 16));
  ps.insert("mv.mlp2.b_in", Tensor::zeros({16}));
  ps.insert("mv.mlp2.w_out", he_linear(rng, 16, 1));
  ps.insert("mv.mlp2.b_out", Tensor::full({1}, density_bias));
}

}  // namespace df
