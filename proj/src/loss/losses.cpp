#include "loss/losses.hpp"

namespace df {

namespace {

constexpr double kEasDepthFloor = 1e-4;

// mean over the channel axis of [...,3,H,W]
Tensor channel_mean(Tape* tp, const Tensor& x) {
  return mean_axis(tp, x, x.rank() - 3);
}

}  // namespace

Tensor ssim_map(Tape* tp, const Tensor& a, const Tensor& b, const LossConfig& cfg) {
  require(a.shape() == b.shape(), "ssim_map: extents differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  require(a.rank() >= 3 && a.dim(a.rank() - 3) == 3, "ssim_map: expects [...,3,H,W]");

  Tensor mu_a = box3_reflect(tp, a);
  Tensor mu_b = box3_reflect(tp, b);
  Tensor mu_aa = mul(tp, mu_a, mu_a);
  Tensor mu_bb = mul(tp, mu_b, mu_b);
  Tensor mu_ab = mul(tp, mu_a, mu_b);
  Tensor var_a = sub(tp, box3_reflect(tp, mul(tp, a, a)), mu_aa);
  Tensor var_b = sub(tp, box3_reflect(tp, mul(tp, b, b)), mu_bb);
  Tensor cov = sub(tp, box3_reflect(tp, mul(tp, a, b)), mu_ab);

  Tensor num = mul(tp, add_const(tp, scale(tp, mu_ab, 2.0), cfg.ssim_c1),
                   add_const(tp, scale(tp, cov, 2.0), cfg.ssim_c2));
  Tensor den = mul(tp, add_const(tp, add(tp, mu_aa, mu_bb), cfg.ssim_c1),
                   add_const(tp, add(tp, var_a, var_b), cfg.ssim_c2));
  return channel_mean(tp, div(tp, num, den));
}

Tensor photometric_loss(Tape* tp, const PatchBatch& batch, const LossConfig& cfg) {
  require(!batch.recons.empty(), "photometric_loss: empty render set");
  const Shape& ts = batch.targets.shape();
  require(ts.size() == 4 && ts[1] == 3, "photometric_loss: targets must be [B,3,s,s]");
  const int bn = ts[0], h = ts[2], w = ts[3];

  std::vector<Tensor> costs;
  for (const Tensor& rec : batch.recons) {
    require(rec.shape() == ts, "photometric_loss: reconstruction shape " + shape_str(rec.shape()) +
                                   " does not match targets " + shape_str(ts));
    Tensor l1 = channel_mean(tp, abs_(tp, sub(tp, batch.targets, rec)));           // [B,s,s]
    Tensor dssim = scale(tp, add_const(tp, neg(tp, ssim_map(tp, batch.targets, rec, cfg)), 1.0), 0.5);
    Tensor cost = add(tp, scale(tp, l1, cfg.lambda_l1), scale(tp, dssim, cfg.lambda_ssim));
    costs.push_back(reshape(tp, cost, {bn, 1, h, w}));
  }
  Tensor stacked = concat(tp, costs, 1);            // [B,K,s,s]
  return mean_all(tp, min_axis(tp, stacked, 1));
}

Tensor edge_aware_smoothness(Tape* tp, const Tensor& depth, const Tensor& image, const LossConfig&) {
  require(depth.rank() >= 2, "edge_aware_smoothness: depth must be [...,H,W]");
  require(image.rank() == depth.rank() + 1 && image.dim(image.rank() - 3) == 3,
          "edge_aware_smoothness: image must be [...,3,H,W]");
  const int rk = depth.rank();
  const int h = depth.dim(rk - 2), w = depth.dim(rk - 1);
  require(image.dim(image.rank() - 2) == h && image.dim(image.rank() - 1) == w,
          "edge_aware_smoothness: extent mismatch");
  for (const double v : depth.vec())
    require(v > 0.0, "edge_aware_smoothness: depth must be positive");

  Tensor inv = div(tp, Tensor::full(depth.shape(), 1.0), depth);
  // per-patch mean normalization: collapse the two spatial axes
  Tensor m = mean_axis(tp, mean_axis(tp, inv, rk - 1), rk - 2);
  Shape ms = m.shape();
  ms.push_back(1);
  ms.push_back(1);
  Tensor dstar = div(tp, inv, reshape(tp, m, ms));

  auto fwd_diff = [&](const Tensor& x, int axis) {
    std::vector<int> b0(static_cast<size_t>(x.rank()), 0), e0;
    for (int d = 0; d < x.rank(); ++d) e0.push_back(x.dim(d));
    auto b1 = b0;
    auto e1 = e0;
    e0[static_cast<size_t>(axis)] -= 1;  // [0, n-1)
    b1[static_cast<size_t>(axis)] = 1;   // [1, n)
    return sub(tp, slice(tp, x, b1, e1), slice(tp, x, b0, e0));
  };

  Tensor loss = Tensor::scalar(0.0);
  if (w > 1) {
    Tensor dx = abs_(tp, fwd_diff(dstar, rk - 1));
    Tensor gx = channel_mean(tp, abs_(tp, fwd_diff(image, image.rank() - 1)));
    loss = add(tp, loss, mean_all(tp, mul(tp, dx, exp_(tp, neg(tp, gx)))));
  }
  if (h > 1) {
    Tensor dy = abs_(tp, fwd_diff(dstar, rk - 2));
    Tensor gy = channel_mean(tp, abs_(tp, fwd_diff(image, image.rank() - 2)));
    loss = add(tp, loss, mean_all(tp, mul(tp, dy, exp_(tp, neg(tp, gy)))));
  }
  return loss;
}

Tensor total_loss(Tape* tp, const PatchBatch& batch, const LossConfig& cfg) {
  Tensor ph = photometric_loss(tp, batch, cfg);
  if (cfg.lambda_eas == 0.0) return ph;
  Tensor d_safe = clamp_min(tp, batch.depth, kEasDepthFloor);
  Tensor eas = edge_aware_smoothness(tp, d_safe, batch.targets, cfg);
  return add(tp, ph, scale(tp, eas, cfg.lambda_eas));
}

Tensor kd_loss(Tape* tp, const Tensor& sigma_teacher, const Tensor& sigma_student) {
  require(sigma_teacher.shape() == sigma_student.shape(),
          "kd_loss: length mismatch: " + shape_str(sigma_teacher.shape()) + " vs " +
              shape_str(sigma_student.shape()));
  return mean_all(tp, abs_(tp, sub(tp, stop_gradient(sigma_teacher), sigma_student)));
}

}  // namespace df
