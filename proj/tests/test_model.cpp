#include <cmath>

#include "doctest.h"
#include "model/backbone.hpp"
#include "model/heads.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace df;

namespace {

ParamSet fresh_params(uint64_t seed) {
  ParamSet ps;
  Rng rng(seed);
  init_backbone_params(ps, rng);
  init_head_params(ps, rng);
  return ps;
}

CameraModel pe_camera() {
  CameraModel c;
  c.fx = c.fy = 40;
  c.cx = 47.5;
  c.cy = 31.5;
  c.width = 96;
  c.height = 64;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("backbone");

TEST_CASE("encode: output is pixel-aligned with 64 channels") {
  ParamSet ps = fresh_params(1);
  BoundParams bp(ps, nullptr);
  Rng rng(2);
  auto img = test_util::random_tensor({3, 16, 24}, rng, 0.0, 1.0);
  FeatureMap f = encode(bp, nullptr, img);
  CHECK(f.values.shape() == Shape{64, 16, 24});
  CHECK(f.channels() == kFeatureChannels);

  auto bad = test_util::random_tensor({3, 10, 24}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(encode(bp, nullptr, bad), ContractViolation);
}

TEST_CASE("encode: zero weights leave only the output bias field") {
  ParamSet ps = fresh_params(3);
  Rng rng(4);
  for (const auto& path : ps.paths()) {
    if (path.rfind("backbone.", 0) != 0) continue;
    if (path.ends_with(".w"))
      ps.set_value(path, Tensor::zeros(ps.get(path).shape()));
    else {
      auto t = test_util::random_tensor(ps.get(path).shape(), rng);
      ps.set_value(path, t);
    }
  }
  BoundParams bp(ps, nullptr);
  auto img = test_util::random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  FeatureMap f = encode(bp, nullptr, img);
  const Tensor& bias = ps.get("backbone.out.b");
  for (int c = 0; c < 64; ++c)
    for (int i = 0; i < 64; ++i)
      CHECK(f.values.vec()[static_cast<size_t>(c * 64 + i)] == doctest::Approx(bias.vec()[static_cast<size_t>(c)]).epsilon(1e-15));
}

TEST_CASE("encode: deterministic") {
  ParamSet ps = fresh_params(5);
  BoundParams bp(ps, nullptr);
  Rng rng(6);
  auto img = test_util::random_tensor({3, 8, 12}, rng, 0.0, 1.0);
  FeatureMap a = encode(bp, nullptr, img);
  FeatureMap b = encode(bp, nullptr, img);
  CHECK(a.values.vec() == b.values.vec());
}

TEST_CASE("sample_feature: grid values, midpoints, 4-tap oracle, linearity") {
  Rng rng(7);
  FeatureMap f{test_util::random_tensor({64, 6, 7}, rng)};

  Tensor exact = sample_feature(nullptr, f, 3.0, 2.0);
  for (int c = 0; c < 64; ++c)
    CHECK(exact.vec()[static_cast<size_t>(c)] == f.values.vec()[static_cast<size_t>((c * 6 + 2) * 7 + 3)]);

  Tensor mid = sample_feature(nullptr, f, 3.5, 2.0);
  for (int c = 0; c < 4; ++c) {
    const double a = f.values.vec()[static_cast<size_t>((c * 6 + 2) * 7 + 3)];
    const double b = f.values.vec()[static_cast<size_t>((c * 6 + 2) * 7 + 4)];
    CHECK(mid.vec()[static_cast<size_t>(c)] == doctest::Approx(0.5 * (a + b)).epsilon(1e-15));
  }

  for (int it = 0; it < 30; ++it) {
    const double u = rng.uniform(0, 6), v = rng.uniform(0, 5);
    Tensor s = sample_feature(nullptr, f, u, v);
    for (int c = 0; c < 64; c += 13)
      CHECK(std::fabs(s.vec()[static_cast<size_t>(c)] - oracles::bilinear_ref(f.values, c, u, v)) < 1e-12);
  }

  // linear in the feature map
  FeatureMap g{test_util::random_tensor({64, 6, 7}, rng)};
  const double a = 0.7, b = -1.3;
  Tensor combo =
      Tensor::from({64, 6, 7}, [&] {
        std::vector<double> v(64 * 6 * 7);
        for (size_t i = 0; i < v.size(); ++i) v[i] = a * f.values.vec()[i] + b * g.values.vec()[i];
        return v;
      }());
  const double u = 2.37, v = 4.11;
  Tensor sc = sample_feature(nullptr, FeatureMap{combo}, u, v);
  Tensor sf = sample_feature(nullptr, f, u, v);
  Tensor sg = sample_feature(nullptr, g, u, v);
  for (int c = 0; c < 64; ++c)
    CHECK(std::fabs(sc.vec()[static_cast<size_t>(c)] - (a * sf.vec()[static_cast<size_t>(c)] + b * sg.vec()[static_cast<size_t>(c)])) < 1e-12);

  CHECK_THROWS_AS(sample_feature(nullptr, f, -0.5, 0.0), ContractViolation);
}

TEST_CASE("encode: parameter gradients match finite differences on a 4x4 toy") {
  ParamSet ps = fresh_params(11);
  Rng rng(12);
  auto img = test_util::random_tensor({3, 4, 4}, rng, 0.0, 1.0);
  Tensor readout = test_util::random_tensor({64, 4, 4}, rng, 0.2, 1.0);

  Tape tape;
  BoundParams bp(ps, &tape);
  FeatureMap f = encode(bp, &tape, img);
  tape.backward(sum_all(&tape, mul(&tape, f.values, readout)));
  GradMap grads = bp.trainable_grads();

  for (const std::string path : {"backbone.enc2.w", "backbone.dec1.w", "backbone.out.b"}) {
    const Tensor& p0 = ps.get(path);
    Rng pick(path.size() * 7919 + 1);
    for (int probe = 0; probe < 6; ++probe) {
      const size_t i = pick.uniform_int(static_cast<uint64_t>(p0.numel()));
      auto f_of = [&](double x) {
        ParamSet ps2 = ps;
        std::vector<double> v = p0.vec();
        v[i] = x;
        ps2.set_value(path, Tensor::from(p0.shape(), v));
        BoundParams bp2(ps2, nullptr);
        FeatureMap fm = encode(bp2, nullptr, img);
        return sum_all(nullptr, mul(nullptr, fm.values, readout)).item();
      };
      const double eps = 1e-5;
      const double fd = (f_of(p0.vec()[i] + eps) - f_of(p0.vec()[i] - eps)) / (2 * eps);
      const double an = grads.at(path).vec()[i];
      CHECK(std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)}) < 1e-5);
    }
  }
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("heads");

TEST_CASE("positional encoding: zeros, length, direct formula") {
  PositionalEncodingConfig cfg;
  CHECK(cfg.dim() == 39);
  CameraModel cam = pe_camera();

  // raw components all zero: depth at z_far, pixel at image center
  Tensor e0 = positional_encoding(cfg, cfg.z_far, (cam.width - 1) / 2.0, (cam.height - 1) / 2.0, cam);
  REQUIRE(e0.numel() == 39);
  for (int i = 0; i < 3; ++i) CHECK(e0.vec()[static_cast<size_t>(i)] == doctest::Approx(0.0).epsilon(1e-15));
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 6; ++b) {
      CHECK(e0.vec()[static_cast<size_t>(3 + c * 12 + 2 * b)] == doctest::Approx(0.0));      // sin
      CHECK(e0.vec()[static_cast<size_t>(3 + c * 12 + 2 * b + 1)] == doctest::Approx(1.0));  // cos
    }

  Rng rng(21);
  for (int it = 0; it < 50; ++it) {
    const double d = rng.uniform(cfg.z_near, cfg.z_far);
    const double u = rng.uniform(0, cam.width - 1), v = rng.uniform(0, cam.height - 1);
    Tensor e = positional_encoding(cfg, d, u, v, cam);
    const double dn = (1.0 / d - 1.0 / cfg.z_far) / (1.0 / cfg.z_near - 1.0 / cfg.z_far);
    const double un = 2.0 * u / (cam.width - 1) - 1.0;
    const double vn = 2.0 * v / (cam.height - 1) - 1.0;
    const double comps[3] = {dn, un, vn};
    CHECK(e.vec()[0] == doctest::Approx(dn).epsilon(1e-12));
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < 6; ++b) {
        const double f = 3.141592653589793 * std::pow(2.0, b);
        CHECK(e.vec()[static_cast<size_t>(3 + c * 12 + 2 * b)] == doctest::Approx(std::sin(f * comps[c])).epsilon(1e-12));
        CHECK(e.vec()[static_cast<size_t>(3 + c * 12 + 2 * b + 1)] == doctest::Approx(std::cos(f * comps[c])).epsilon(1e-12));
      }
  }
}

TEST_CASE("density_sv: zero weights give constant softplus(bias); always nonnegative") {
  ParamSet ps = fresh_params(31);
  for (const auto& path : ps.paths())
    if (path.rfind("sv.", 0) == 0 && path.find(".w_") != std::string::npos)
      ps.set_value(path, Tensor::zeros(ps.get(path).shape()));
  BoundParams bp(ps, nullptr);
  Rng rng(32);
  const double expect = std::log1p(std::exp(ps.get("sv.b_out").vec()[0]));
  for (int it = 0; it < 10; ++it) {
    Tensor s = density_sv(bp, nullptr, test_util::random_tensor({64}, rng), test_util::random_tensor({39}, rng));
    CHECK(s.item() == doctest::Approx(expect).epsilon(1e-12));
  }

  ParamSet ps2 = fresh_params(33);
  BoundParams bp2(ps2, nullptr);
  for (int it = 0; it < 1000; ++it) {
    Tensor s = density_sv(bp2, nullptr, test_util::random_tensor({64}, rng, -3, 3),
                          test_util::random_tensor({39}, rng, -1, 1));
    CHECK(s.item() >= 0.0);
  }
}

TEST_CASE("density_sv: gradients match finite differences") {
  ParamSet ps = fresh_params(35);
  Rng rng(36);
  Tensor feat = test_util::random_tensor({1, 64}, rng);
  Tensor pe = test_util::random_tensor({1, 39}, rng);

  Tape tape;
  BoundParams bp(ps, &tape);
  Tensor f_leaf = tape.leaf(feat);
  Tensor sigma = density_sv_batch(bp, &tape, f_leaf, pe);
  tape.backward(reshape(&tape, sigma, {}));
  Tensor gf = tape.grad(f_leaf);

  auto f_of = [&](const std::vector<double>& x) {
    BoundParams b2(ps, nullptr);
    return density_sv_batch(b2, nullptr, Tensor::from({1, 64}, x), pe).vec()[0];
  };
  auto fd = finite_diff_grad(f_of, feat.vec(), 1e-5);
  for (int i = 0; i < 64; ++i) {
    const double a = gf.vec()[static_cast<size_t>(i)], b = fd[static_cast<size_t>(i)];
    CHECK(std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)}) < 1e-5);
  }
}

TEST_CASE("masked_softmax: closed forms") {
  ViewMask both{{1, 1}};
  Tensor w = masked_softmax(nullptr, Tensor::from({2}, {0, 0}), both);
  CHECK(w.vec()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w.vec()[1] == doctest::Approx(0.5).epsilon(1e-15));

  ViewMask first{{1, 0}};
  Tensor w2 = masked_softmax(nullptr, Tensor::from({2}, {-7.3, 123.0}), first);
  CHECK(w2.vec()[0] == 1.0);
  CHECK(w2.vec()[1] == 0.0);

  Tensor w3 = masked_softmax(nullptr, Tensor::from({2}, {1, 0}), both);
  const double e = std::exp(1.0);
  CHECK(w3.vec()[0] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(w3.vec()[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));

  ViewMask none{{0, 0}};
  CHECK_THROWS_AS(masked_softmax(nullptr, Tensor::from({2}, {1, 2}), none), ContractViolation);
}

TEST_CASE("masked_softmax: normalization, exact zeros, shift invariance") {
  Rng rng(41);
  for (int it = 0; it < 200; ++it) {
    const int v = 2 + static_cast<int>(rng.uniform_int(4));
    ViewMask m;
    bool any = false;
    for (int k = 0; k < v; ++k) {
      m.bits.push_back(rng.bernoulli(0.6) ? 1 : 0);
      any = any || m.bits.back();
    }
    if (!any) m.bits[static_cast<size_t>(rng.uniform_int(static_cast<uint64_t>(v)))] = 1;
    Tensor logits = test_util::random_tensor({v}, rng, -5, 5);
    Tensor w = masked_softmax(nullptr, logits, m);
    double sum = 0;
    for (int k = 0; k < v; ++k) {
      if (!m.bits[static_cast<size_t>(k)]) CHECK(w.vec()[static_cast<size_t>(k)] == 0.0);
      sum += w.vec()[static_cast<size_t>(k)];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);

    std::vector<double> shifted = logits.vec();
    for (auto& x : shifted) x += 3.7;
    Tensor w2 = masked_softmax(nullptr, Tensor::from({v}, shifted), m);
    for (int k = 0; k < v; ++k) CHECK(std::fabs(w2.vec()[static_cast<size_t>(k)] - w.vec()[static_cast<size_t>(k)]) < 1e-12);
  }
}

TEST_CASE("density_mv: degenerate single view equals the one-view pipeline") {
  ParamSet ps = fresh_params(51);
  BoundParams bp(ps, nullptr);
  Rng rng(52);
  std::vector<Tensor> feats = {test_util::random_tensor({64}, rng), test_util::random_tensor({64}, rng),
                               test_util::random_tensor({64}, rng)};
  std::vector<Tensor> pes = {test_util::random_tensor({39}, rng), test_util::random_tensor({39}, rng),
                             test_util::random_tensor({39}, rng)};
  auto full = density_mv(bp, nullptr, feats, pes, ViewMask{{0, 1, 0}});
  auto solo = density_mv(bp, nullptr, {feats[1]}, {pes[1]}, ViewMask{{1}});
  CHECK(full.sigma.item() == doctest::Approx(solo.sigma.item()).epsilon(1e-14));
  CHECK(full.weights.vec()[1] == 1.0);
  CHECK(full.weights.vec()[0] == 0.0);
}

TEST_CASE("density_mv: permutation invariance and duplicated views") {
  ParamSet ps = fresh_params(53);
  BoundParams bp(ps, nullptr);
  Rng rng(54);
  std::vector<Tensor> feats, pes;
  for (int k = 0; k < 3; ++k) {
    feats.push_back(test_util::random_tensor({64}, rng));
    pes.push_back(test_util::random_tensor({39}, rng));
  }
  ViewMask m{{1, 1, 1}};
  auto base = density_mv(bp, nullptr, feats, pes, m);
  auto perm = density_mv(bp, nullptr, {feats[2], feats[0], feats[1]}, {pes[2], pes[0], pes[1]}, m);
  CHECK(std::fabs(base.sigma.item() - perm.sigma.item()) < 1e-12);

  auto dup = density_mv(bp, nullptr, {feats[0], feats[0]}, {pes[0], pes[0]}, ViewMask{{1, 1}});
  auto one = density_mv(bp, nullptr, {feats[0]}, {pes[0]}, ViewMask{{1}});
  CHECK(std::fabs(dup.sigma.item() - one.sigma.item()) < 1e-12);
  CHECK(dup.weights.vec()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("density_mv: all-masked point is transparent") {
  ParamSet ps = fresh_params(55);
  BoundParams bp(ps, nullptr);
  Rng rng(56);
  auto r = density_mv(bp, nullptr, {test_util::random_tensor({64}, rng)}, {test_util::random_tensor({39}, rng)},
                      ViewMask{{0}});
  CHECK(r.sigma.item() == 0.0);
  CHECK_FALSE(r.weights.valid());
}

TEST_CASE("density_mv: straight-line reference match on random 3-view inputs") {
  ParamSet ps = fresh_params(57);
  BoundParams bp(ps, nullptr);
  Rng rng(58);
  for (int it = 0; it < 50; ++it) {
    std::vector<Tensor> feats, pes;
    std::vector<std::vector<double>> rf, rp;
    ViewMask m;
    bool any = false;
    for (int k = 0; k < 3; ++k) {
      feats.push_back(test_util::random_tensor({64}, rng));
      pes.push_back(test_util::random_tensor({39}, rng));
      rf.push_back(feats.back().vec());
      rp.push_back(pes.back().vec());
      m.bits.push_back(rng.bernoulli(0.7) ? 1 : 0);
      any = any || m.bits.back();
    }
    if (!any) m.bits[0] = 1;
    auto got = density_mv(bp, nullptr, feats, pes, m);
    std::vector<double> wref;
    const double ref = oracles::density_mv_ref(ps, rf, rp, m.bits, &wref);
    CHECK(std::fabs(got.sigma.item() - ref) < 1e-12);
    for (int k = 0; k < 3; ++k) CHECK(std::fabs(got.weights.vec()[static_cast<size_t>(k)] - wref[static_cast<size_t>(k)]) < 1e-12);
  }
}

TEST_CASE("density_mv: gradients match finite differences") {
  ParamSet ps = fresh_params(59);
  Rng rng(60);
  std::vector<Tensor> feats = {test_util::random_tensor({1, 64}, rng), test_util::random_tensor({1, 64}, rng)};
  std::vector<Tensor> pes = {test_util::random_tensor({1, 39}, rng), test_util::random_tensor({1, 39}, rng)};
  std::vector<uint8_t> mask{1, 1};

  Tape tape;
  BoundParams bp(ps, &tape);
  Tensor f0 = tape.leaf(feats[0]);
  auto out = density_mv_batch(bp, &tape, {f0, feats[1]}, pes, mask);
  tape.backward(reshape(&tape, out.sigma, {}));
  Tensor gf = tape.grad(f0);

  auto f_of = [&](const std::vector<double>& x) {
    BoundParams b2(ps, nullptr);
    return density_mv_batch(b2, nullptr, {Tensor::from({1, 64}, x), feats[1]}, pes, mask).sigma.vec()[0];
  };
  auto fd = finite_diff_grad(f_of, feats[0].vec(), 1e-5);
  for (int i = 0; i < 64; ++i) {
    const double a = gf.vec()[static_cast<size_t>(i)], b = fd[static_cast<size_t>(i)];
    CHECK(std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)}) < 1e-5);
  }
}

TEST_SUITE_END();
