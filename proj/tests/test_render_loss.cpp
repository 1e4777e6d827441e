#include <cmath>

#include "doctest.h"
#include "loss/losses.hpp"
#include "oracles.hpp"
#include "render/renderer.hpp"
#include "test_util.hpp"

using namespace df;

namespace {

RaySamples unit_samples(int m) {
  RaySamples s;
  for (int i = 0; i < m; ++i) {
    s.depths.push_back(1.0 + i);
    s.spacings.push_back(1.0);
    s.points.push_back({0, 0, 1.0 + i});
  }
  return s;
}

std::vector<std::vector<ColorSample>> solid_colors(int m, std::array<double, 3> rgb) {
  std::vector<ColorSample> v(static_cast<size_t>(m));
  for (auto& c : v) {
    c.rgb = rgb;
    c.valid = true;
  }
  return {v};
}

ParamSet fresh_params(uint64_t seed) {
  ParamSet ps;
  Rng rng(seed);
  init_backbone_params(ps, rng);
  init_head_params(ps, rng);
  return ps;
}

}  // namespace

TEST_SUITE_BEGIN("renderer");

TEST_CASE("composite: empty space") {
  const int m = 8;
  auto r = composite(nullptr, Tensor::zeros({m}), unit_samples(m), solid_colors(m, {1, 0, 0}));
  for (double c : r.colors[0].vec()) CHECK(c == 0.0);
  CHECK(r.depth.item() == 0.0);
  CHECK(r.final_transmittance.item() == 1.0);
}

TEST_CASE("composite: opaque first sample wins") {
  const int m = 6;
  std::vector<double> sig(m, 0.0);
  sig[0] = 1e6;
  auto colors = solid_colors(m, {0.25, 0.5, 0.75});
  auto r = composite(nullptr, Tensor::from({m}, sig), unit_samples(m), colors);
  CHECK(r.colors[0].vec()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.colors[0].vec()[2] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.depth.item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.final_transmittance.item() == doctest::Approx(0.0));
}

TEST_CASE("composite: ln2 slab gives exact dyadic weights") {
  const int m = 12;
  auto r = composite(nullptr, Tensor::full({m}, std::log(2.0)), unit_samples(m), solid_colors(m, {1, 1, 1}));
  double expect = 0.5;
  for (int i = 0; i < m; ++i) {
    CHECK(r.weights.vec()[static_cast<size_t>(i)] == expect);
    expect *= 0.5;
  }
}

TEST_CASE("composite: telescoping sum on random rays") {
  Rng rng(17);
  for (int it = 0; it < 1000; ++it) {
    const int m = 4 + static_cast<int>(rng.uniform_int(28));
    std::vector<double> sig(static_cast<size_t>(m));
    for (auto& v : sig) v = rng.uniform(0.0, 5.0);
    auto r = composite(nullptr, Tensor::from({m}, sig), unit_samples(m), solid_colors(m, {1, 1, 1}));
    double wsum = 0;
    for (double w : r.weights.vec()) {
      CHECK(w >= 0.0);
      wsum += w;
    }
    CHECK(std::fabs(wsum - (1.0 - r.final_transmittance.item())) < 1e-12);
    CHECK(wsum <= 1.0 + 1e-9);
  }
}

TEST_CASE("composite: opacity is monotone in density") {
  Rng rng(19);
  const int m = 16;
  std::vector<double> sig(m);
  for (auto& v : sig) v = rng.uniform(0.0, 2.0);
  auto base = composite(nullptr, Tensor::from({m}, sig), unit_samples(m), solid_colors(m, {1, 1, 1}));
  double base_sum = 0;
  for (double w : base.weights.vec()) base_sum += w;
  for (int i = 0; i < m; ++i) {
    auto bumped = sig;
    bumped[static_cast<size_t>(i)] += 0.5;
    auto r = composite(nullptr, Tensor::from({m}, bumped), unit_samples(m), solid_colors(m, {1, 1, 1}));
    double s = 0;
    for (double w : r.weights.vec()) s += w;
    CHECK(s >= base_sum - 1e-12);
  }
}

TEST_CASE("composite: constant slab expected depth approaches the analytic value") {
  const double a = 2.0, b = 10.0, c = 0.7;
  const double L = b - a;
  const double analytic = a * (1 - std::exp(-c * L)) + (1.0 / c) * (1 - std::exp(-c * L) * (1 + c * L));
  const int m = 256;
  RaySamples s;
  for (int i = 0; i < m; ++i) {
    const double lo = a + L * i / m, hi = a + L * (i + 1) / m;
    s.depths.push_back(0.5 * (lo + hi));
    s.points.push_back({0, 0, s.depths.back()});
  }
  s.spacings.assign(m, L / m);
  auto r = composite(nullptr, Tensor::full({m}, c), s, solid_colors(m, {1, 1, 1}));
  CHECK(std::fabs(r.depth.item() - analytic) / analytic < 1e-3);
}

TEST_CASE("composite: rejects negative density and mismatched lengths") {
  CHECK_THROWS_AS(composite(nullptr, Tensor::from({2}, {1.0, -0.1}), unit_samples(2), solid_colors(2, {1, 1, 1})),
                  ContractViolation);
  CHECK_THROWS_AS(composite(nullptr, Tensor::zeros({3}), unit_samples(2), solid_colors(2, {1, 1, 1})),
                  ContractViolation);
}

TEST_CASE("composite: density gradients match finite differences") {
  Rng rng(23);
  const int m = 8;
  std::vector<double> sig(m);
  for (auto& v : sig) v = rng.uniform(0.1, 2.0);
  auto colors = solid_colors(m, {0.3, 0.6, 0.9});
  auto objective = [&](Tape* tp, const Tensor& s) {
    auto r = composite(tp, s, unit_samples(m), colors);
    return add(tp, sum_all(tp, r.colors[0]), mul(tp, r.depth, Tensor::scalar(0.25)));
  };
  Tape tape;
  Tensor s_leaf = tape.leaf(Tensor::from({m}, sig));
  tape.backward(objective(&tape, s_leaf));
  Tensor g = tape.grad(s_leaf);
  auto f = [&](const std::vector<double>& x) { return objective(nullptr, Tensor::from({m}, x)).item(); };
  auto fd = finite_diff_grad(f, sig, 1e-6);
  for (int i = 0; i < m; ++i) {
    const double aa = g.vec()[static_cast<size_t>(i)], bb = fd[static_cast<size_t>(i)];
    CHECK(std::fabs(aa - bb) / std::max({1.0, std::fabs(aa), std::fabs(bb)}) < 1e-5);
  }
}

TEST_CASE("sample_color: gray image, behind-camera, bilinear oracle") {
  CameraModel cam;
  cam.fx = cam.fy = 20;
  cam.cx = 15.5;
  cam.cy = 11.5;
  cam.width = 32;
  cam.height = 24;
  Tensor gray = Tensor::full({3, 24, 32}, 0.5);
  auto s = sample_color(gray, cam, {0.1, -0.2, 4.0});
  CHECK(s.valid);
  for (double c : s.rgb) CHECK(c == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_FALSE(sample_color(gray, cam, {0, 0, -2}).valid);

  Rng rng(29);
  Tensor img = test_util::random_tensor({3, 24, 32}, rng, 0.0, 1.0);
  for (int it = 0; it < 50; ++it) {
    Vec3 p{rng.uniform(-1, 1), rng.uniform(-0.7, 0.7), rng.uniform(2, 10)};
    auto cs = sample_color(img, cam, p);
    auto pr = project(cam, p);
    if (!pr.valid) continue;
    for (int ch = 0; ch < 3; ++ch)
      CHECK(std::fabs(cs.rgb[static_cast<size_t>(ch)] - oracles::bilinear_ref(img, ch, pr.u, pr.v)) < 1e-12);
  }
}

TEST_CASE("render_patch: zero density renders black with zero depth") {
  ParamSet ps = fresh_params(61);
  BoundParams bp(ps, nullptr);
  RenderContext ctx;
  ctx.density_oracle = [](const Vec3&) { return 0.0; };

  CameraModel cam;
  cam.fx = cam.fy = 30;
  cam.cx = 23.5;
  cam.cy = 15.5;
  cam.width = 48;
  cam.height = 32;
  Rng rng(62);
  std::vector<RenderView> views{{cam, test_util::random_tensor({3, 32, 48}, rng, 0.0, 1.0)},
                                {cam, test_util::random_tensor({3, 32, 48}, rng, 0.0, 1.0)}};
  SamplerConfig sc;
  sc.samples_per_ray = 8;
  RenderedPatch rp = render_patch(nullptr, ctx, {cam, 10, 7, 8}, views, sc, nullptr);
  REQUIRE(rp.colors.size() == 2);
  CHECK(rp.colors[0].shape() == Shape{3, 8, 8});
  CHECK(rp.depth.shape() == Shape{8, 8});
  for (double v : rp.colors[0].vec()) CHECK(v == 0.0);
  for (double v : rp.colors[1].vec()) CHECK(v == 0.0);
  for (double v : rp.depth.vec()) CHECK(v == 0.0);

  CHECK_THROWS_AS(render_patch(nullptr, ctx, {cam, 44, 0, 8}, views, sc, nullptr), ContractViolation);
}

TEST_CASE("render_patches: learned field batches match a per-patch render") {
  ParamSet ps = fresh_params(63);
  Rng rng(64);
  CameraModel cam;
  cam.fx = cam.fy = 30;
  cam.cx = 23.5;
  cam.cy = 15.5;
  cam.width = 48;
  cam.height = 32;
  CameraModel cam2 = cam;
  cam2.pose.t = {0.5, 0, 0};

  Tensor img0 = test_util::random_tensor({3, 32, 48}, rng, 0.0, 1.0);
  Tensor img1 = test_util::random_tensor({3, 32, 48}, rng, 0.0, 1.0);

  BoundParams bp(ps, nullptr);
  RenderContext ctx;
  ctx.params = &bp;
  ctx.density_cams = {cam, cam2};
  ctx.feats.push_back(encode(bp, nullptr, img0));
  ctx.feats.push_back(encode(bp, nullptr, img1));
  ctx.pe.z_near = 1.0;
  ctx.pe.z_far = 12.0;

  SamplerConfig sc;
  sc.samples_per_ray = 6;
  sc.z_near = 1.0;
  sc.z_far = 12.0;
  std::vector<RenderView> views{{cam2, img1}};

  auto both = render_patches(nullptr, ctx, {{cam, 2, 3, 4}, {cam, 20, 9, 4}}, views, sc, nullptr);
  auto lone = render_patch(nullptr, ctx, {cam, 20, 9, 4}, views, sc, nullptr);
  REQUIRE(both.size() == 2);
  for (size_t i = 0; i < lone.depth.vec().size(); ++i)
    CHECK(both[1].depth.vec()[i] == doctest::Approx(lone.depth.vec()[i]).epsilon(1e-14));
  for (size_t i = 0; i < lone.colors[0].vec().size(); ++i)
    CHECK(both[1].colors[0].vec()[i] == doctest::Approx(lone.colors[0].vec()[i]).epsilon(1e-14));
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("losses");

namespace {

PatchBatch make_batch(Rng& rng, int b, int k, int s, bool positive_depth = true) {
  PatchBatch pb;
  pb.targets = test_util::random_tensor({b, 3, s, s}, rng, 0.0, 1.0);
  for (int i = 0; i < k; ++i) pb.recons.push_back(test_util::random_tensor({b, 3, s, s}, rng, 0.0, 1.0));
  pb.depth = positive_depth ? test_util::random_tensor({b, s, s}, rng, 2.0, 20.0)
                            : test_util::random_tensor({b, s, s}, rng, -1.0, 1.0);
  return pb;
}

}  // namespace

TEST_CASE("ssim_map: self-similarity, symmetry, constant-patch formula") {
  Rng rng(71);
  LossConfig cfg;
  Tensor a = test_util::random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  Tensor self = ssim_map(nullptr, a, a, cfg);
  for (double v : self.vec()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  Tensor b = test_util::random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  Tensor ab = ssim_map(nullptr, a, b, cfg);
  Tensor ba = ssim_map(nullptr, b, a, cfg);
  for (size_t i = 0; i < ab.vec().size(); ++i) {
    CHECK(std::fabs(ab.vec()[i] - ba.vec()[i]) < 1e-12);
    CHECK(ab.vec()[i] >= -1.0 - 1e-12);
    CHECK(ab.vec()[i] <= 1.0 + 1e-12);
  }

  // A constant zero, B constant one: means 0 and 1, variances 0
  Tensor z = Tensor::zeros({3, 8, 8});
  Tensor o = Tensor::full({3, 8, 8}, 1.0);
  const double expect = (cfg.ssim_c1 * cfg.ssim_c2) / ((1.0 + cfg.ssim_c1) * cfg.ssim_c2);
  Tensor zo = ssim_map(nullptr, z, o, cfg);
  for (double v : zo.vec()) CHECK(v == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(ssim_map(nullptr, a, Tensor::zeros({3, 8, 9}), cfg), ContractViolation);
}

TEST_CASE("photometric_loss: exact reconstruction wins the min") {
  Rng rng(73);
  LossConfig cfg;
  PatchBatch pb = make_batch(rng, 2, 3, 8);
  pb.recons[1] = pb.targets;
  Tensor l = photometric_loss(nullptr, pb, cfg);
  CHECK(l.item() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("photometric_loss: constant-offset hand trace") {
  LossConfig cfg;
  PatchBatch pb;
  const double base = 0.4, off = 0.1;
  pb.targets = Tensor::full({1, 3, 8, 8}, base);
  pb.recons.push_back(Tensor::full({1, 3, 8, 8}, base + off));
  pb.depth = Tensor::full({1, 8, 8}, 5.0);
  // constant patches: every pixel has the same cost; trace one by hand
  const double mu_a = base, mu_b = base + off;
  const double ssim = (2 * mu_a * mu_b + cfg.ssim_c1) * cfg.ssim_c2 /
                      ((mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1) * cfg.ssim_c2);
  const double expect = cfg.lambda_l1 * off + cfg.lambda_ssim * 0.5 * (1.0 - ssim);
  CHECK(photometric_loss(nullptr, pb, cfg).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("photometric_loss: min-aggregation bounds and view monotonicity") {
  Rng rng(77);
  LossConfig cfg;
  PatchBatch pb = make_batch(rng, 2, 3, 8);
  const double full = photometric_loss(nullptr, pb, cfg).item();
  for (int k = 0; k < 3; ++k) {
    PatchBatch single = pb;
    single.recons = {pb.recons[static_cast<size_t>(k)]};
    CHECK(full <= photometric_loss(nullptr, single, cfg).item() + 1e-12);
  }
  PatchBatch fewer = pb;
  fewer.recons.pop_back();
  CHECK(full <= photometric_loss(nullptr, fewer, cfg).item() + 1e-12);

  PatchBatch empty = pb;
  empty.recons.clear();
  CHECK_THROWS_AS(photometric_loss(nullptr, empty, cfg), ContractViolation);
}

TEST_CASE("photometric_loss: permutation invariance over render views") {
  Rng rng(79);
  LossConfig cfg;
  PatchBatch pb = make_batch(rng, 1, 3, 8);
  PatchBatch perm = pb;
  perm.recons = {pb.recons[2], pb.recons[0], pb.recons[1]};
  CHECK(photometric_loss(nullptr, pb, cfg).item() ==
        doctest::Approx(photometric_loss(nullptr, perm, cfg).item()).epsilon(1e-14));
}

TEST_CASE("edge_aware_smoothness: constants, normalization, ramp") {
  LossConfig cfg;
  Tensor img = Tensor::full({3, 4, 4}, 0.5);
  Tensor flat = Tensor::full({4, 4}, 7.0);
  CHECK(edge_aware_smoothness(nullptr, flat, img, cfg).item() == doctest::Approx(0.0).epsilon(1e-14));

  // two-pixel ramp on a constant image: loss equals |d*_1 - d*_0|
  Tensor d2 = Tensor::from({1, 2}, {2.0, 4.0});
  Tensor img2 = Tensor::full({3, 1, 2}, 0.25);
  // disparities 0.5, 0.25; mean 0.375; d* = 4/3, 2/3
  CHECK(edge_aware_smoothness(nullptr, d2, img2, cfg).item() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(edge_aware_smoothness(nullptr, Tensor::from({1, 2}, {1.0, -0.5}), img2, cfg),
                  ContractViolation);
}

TEST_CASE("total_loss: lambda_eas = 0 reduces to photometric") {
  Rng rng(83);
  LossConfig cfg;
  cfg.lambda_eas = 0.0;
  PatchBatch pb = make_batch(rng, 2, 2, 8);
  CHECK(total_loss(nullptr, pb, cfg).item() == photometric_loss(nullptr, pb, cfg).item());

  LossConfig cfg2;
  CHECK(cfg2.lambda_eas == doctest::Approx(1e-3));
  CHECK(cfg2.lambda_l1 == doctest::Approx(0.15));
  CHECK(cfg2.lambda_ssim == doctest::Approx(0.85));
}

TEST_CASE("total_loss: zero exactly for perfect reconstructions with flat depth") {
  Rng rng(85);
  LossConfig cfg;
  PatchBatch pb;
  pb.targets = test_util::random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
  pb.recons = {pb.targets, pb.targets};
  pb.depth = Tensor::full({2, 8, 8}, 7.5);
  CHECK(total_loss(nullptr, pb, cfg).item() == doctest::Approx(0.0).epsilon(1e-15));

  // any nonzero disparity gradient makes it strictly positive
  std::vector<double> d = pb.depth.vec();
  d[5] = 9.0;
  pb.depth = Tensor::from({2, 8, 8}, d);
  CHECK(total_loss(nullptr, pb, cfg).item() > 0.0);
}

TEST_CASE("total_loss: gradients match finite differences on a random batch") {
  Rng rng(87);
  LossConfig cfg;
  PatchBatch pb = make_batch(rng, 1, 2, 8);

  Tape tape;
  Tensor r0 = tape.leaf(pb.recons[0]);
  Tensor d = tape.leaf(pb.depth);
  PatchBatch tracked = pb;
  tracked.recons[0] = r0;
  tracked.depth = d;
  tape.backward(total_loss(&tape, tracked, cfg));
  Tensor gr = tape.grad(r0);
  Tensor gd = tape.grad(d);

  Rng pick(88);
  for (int probe = 0; probe < 24; ++probe) {
    const size_t i = pick.uniform_int(static_cast<uint64_t>(pb.recons[0].numel()));
    auto f = [&](const std::vector<double>& x) {
      PatchBatch p2 = pb;
      p2.recons[0] = Tensor::from(pb.recons[0].shape(), x);
      return total_loss(nullptr, p2, cfg).item();
    };
    std::vector<double> x = pb.recons[0].vec();
    const double eps = 1e-6;
    x[i] += eps;
    const double fp = f(x);
    x[i] -= 2 * eps;
    const double fm = f(x);
    const double fd = (fp - fm) / (2 * eps);
    const double an = gr.vec()[i];
    CHECK(std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)}) < 1e-3);
  }
  for (int probe = 0; probe < 12; ++probe) {
    const size_t i = pick.uniform_int(static_cast<uint64_t>(pb.depth.numel()));
    auto f = [&](double x) {
      PatchBatch p2 = pb;
      std::vector<double> v = pb.depth.vec();
      v[i] = x;
      p2.depth = Tensor::from(pb.depth.shape(), v);
      return total_loss(nullptr, p2, cfg).item();
    };
    const double eps = 1e-6;
    const double fd = (f(pb.depth.vec()[i] + eps) - f(pb.depth.vec()[i] - eps)) / (2 * eps);
    const double an = gd.vec()[i];
    CHECK(std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)}) < 1e-3);
  }
}

TEST_CASE("kd_loss: values and teacher isolation") {
  CHECK(kd_loss(nullptr, Tensor::from({3}, {1, 2, 3}), Tensor::from({3}, {1, 2, 3})).item() == 0.0);
  CHECK(kd_loss(nullptr, Tensor::from({1}, {5.0}), Tensor::from({1}, {2.0})).item() == 3.0);
  CHECK_THROWS_AS(kd_loss(nullptr, Tensor::zeros({3}), Tensor::zeros({4})), ContractViolation);

  // teacher parameters receive exactly zero gradient
  ParamSet ps = fresh_params(91);
  Rng rng(92);
  Tape tape;
  BoundParams bp(ps, &tape);
  Tensor feat = test_util::random_tensor({4, 64}, rng);
  Tensor pe = test_util::random_tensor({4, 39}, rng);
  auto teacher = density_mv_batch(bp, &tape, {feat}, {pe}, {1, 1, 1, 1});
  Tensor student = density_sv_batch(bp, &tape, feat, pe);
  tape.backward(kd_loss(&tape, teacher.sigma, student));
  GradMap g = bp.trainable_grads();
  for (const auto& [path, grad] : g) {
    const bool is_teacher = path.rfind("mv.", 0) == 0;
    double mx = 0;
    for (double v : grad.vec()) mx = std::max(mx, std::fabs(v));
    if (is_teacher)
      CHECK(mx == 0.0);
    else if (path.rfind("sv.", 0) == 0)
      CHECK(mx > 0.0);
  }
}

TEST_SUITE_END();
