#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "eval/occupancy.hpp"
#include "synth/dataset_io.hpp"
#include "test_util.hpp"
#include "train/trainer.hpp"

using namespace df;

namespace {

Config tiny_config() {
  Config cfg;
  cfg.image_width = 32;
  cfg.image_height = 24;
  cfg.focal_px = 20;
  cfg.n_cameras = 6;
  cfg.n_density_views = 2;
  cfg.n_primitives_min = 2;
  cfg.n_primitives_max = 3;
  cfg.gt_march_step = 0.05;
  cfg.samples_per_ray = 8;
  cfg.batch_size = 1;
  cfg.patches_per_item = 2;
  cfg.patch_size = 6;
  cfg.grid_nx = 12;
  cfg.grid_ny = 6;
  cfg.grid_nz = 12;
  cfg.eval_samples_per_ray = 8;
  return cfg;
}

Dataset tiny_dataset(const Config& cfg, int n_scenes, uint64_t seed0) {
  Dataset ds;
  for (int s = 0; s < n_scenes; ++s) {
    DatasetItem item;
    item.scene = generate_scene(seed0 + static_cast<uint64_t>(s), cfg.scene_config());
    item.frames = build_frameset(item.scene, cfg.rig_config(), seed0 * 977 + static_cast<uint64_t>(s));
    item.occupancy = occupancy_grid_from_scene(item.scene, cfg.grid_spec());
    item.visibility = visibility_grid_from_scene(
        item.scene, item.frames.frames[static_cast<size_t>(item.frames.density_views[0])].cam, cfg.grid_spec());
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("view_dropout: limits and empirical rate") {
  Rng rng(5);
  const std::vector<int> views{0, 2, 4};
  CHECK(view_dropout(views, 0.0, rng) == views);

  int kept_total = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    auto kept = view_dropout(views, 0.999999, rng);
    CHECK(kept.front() == 0);
    auto half = view_dropout(views, 0.5, rng);
    REQUIRE(!half.empty());
    CHECK(half.front() == 0);
    kept_total += static_cast<int>(half.size()) - 1;
  }
  const double drop_rate = 1.0 - static_cast<double>(kept_total) / (2.0 * draws);
  CHECK(drop_rate == doctest::Approx(0.5).epsilon(0.04));

  CHECK_THROWS_AS(view_dropout({}, 0.5, rng), ContractViolation);
  CHECK_THROWS_AS(view_dropout(views, 1.0, rng), ContractViolation);
}

TEST_CASE("train_step_mv: deterministic given state and seed") {
  Config cfg = tiny_config();
  Dataset ds = tiny_dataset(cfg, 2, 11);
  std::vector<const DatasetItem*> batch{&ds.items[0], &ds.items[1]};

  Checkpoint a = init_checkpoint(cfg, 3);
  Checkpoint b = init_checkpoint(cfg, 3);
  Rng ra(99), rb(99);
  StepResult sa = train_step_mv(a, batch, cfg, ra);
  StepResult sb = train_step_mv(b, batch, cfg, rb);
  CHECK(sa.loss == sb.loss);
  for (const auto& [path, e] : a.params) CHECK(e.value.vec() == b.params.get(path).vec());

  // a second step from identical states stays identical
  StepResult sa2 = train_step_mv(a, batch, cfg, ra);
  StepResult sb2 = train_step_mv(b, batch, cfg, rb);
  CHECK(sa2.loss == sb2.loss);
  CHECK(a.adam.t == 2);
}

TEST_CASE("train_step_mv: single-view head stays frozen during stage 1") {
  Config cfg = tiny_config();
  Dataset ds = tiny_dataset(cfg, 1, 13);
  Checkpoint ckpt = init_checkpoint(cfg, 5);
  const auto sv_before = ckpt.params.get("sv.w_in").vec();
  Rng rng(7);
  std::vector<const DatasetItem*> batch{&ds.items[0]};
  for (int i = 0; i < 3; ++i) train_step_mv(ckpt, batch, cfg, rng);
  CHECK(ckpt.params.get("sv.w_in").vec() == sv_before);
  CHECK(ckpt.step == 3);
}

TEST_CASE("train_step_mv: loss falls on a small run") {
  Config cfg = tiny_config();
  cfg.aug_flip = false;
  Dataset ds = tiny_dataset(cfg, 4, 17);
  Checkpoint ckpt = init_checkpoint(cfg, 1);
  Rng base(123);
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    Rng rng = base.fork(static_cast<uint64_t>(step));
    std::vector<const DatasetItem*> batch{&ds.items[rng.uniform_int(ds.items.size())]};
    losses.push_back(train_step_mv(ckpt, batch, cfg, rng).loss);
  }
  auto avg = [&](int from, int to) {
    double s = 0;
    for (int i = from; i < to; ++i) s += losses[static_cast<size_t>(i)];
    return s / (to - from);
  };
  const double early = avg(0, 10);
  const double late = avg(490, 500);
  INFO("early=", early, " late=", late);
  CHECK(late <= 0.5 * early);
}

TEST_CASE("train_step_kd: teacher bytes frozen, student moves, loss falls") {
  Config cfg = tiny_config();
  Dataset ds = tiny_dataset(cfg, 2, 29);
  std::vector<const DatasetItem*> batch{&ds.items[0], &ds.items[1]};

  Checkpoint ckpt = init_checkpoint(cfg, 9);
  Rng warm(31);
  for (int i = 0; i < 5; ++i) train_step_mv(ckpt, batch, cfg, warm);  // teacher with some structure
  begin_kd_stage(ckpt);
  CHECK(ckpt.stage == "kd");
  CHECK_FALSE(ckpt.params.trainable("backbone.enc1.w"));
  CHECK_FALSE(ckpt.params.trainable("mv.mlp1.w_in"));
  CHECK(ckpt.params.trainable("sv.w_in"));

  std::map<std::string, std::vector<double>> teacher_before;
  for (const auto& [path, e] : ckpt.params)
    if (path.rfind("sv.", 0) != 0) teacher_before[path] = e.value.vec();
  const auto student_before = ckpt.params.get("sv.w_in").vec();

  Rng rng(37);
  double first = 0, last = 0;
  for (int i = 0; i < 100; ++i) {
    StepResult r = train_step_kd(ckpt, batch, cfg, rng);
    if (i == 0) first = r.loss;
    last = r.loss;
  }
  for (const auto& [path, v] : teacher_before) CHECK(ckpt.params.get(path).vec() == v);
  CHECK(ckpt.params.get("sv.w_in").vec() != student_before);
  CHECK(last < first);

  // an mv-stage checkpoint is rejected by the kd step
  Checkpoint fresh = init_checkpoint(cfg, 2);
  Rng rng2(1);
  CHECK_THROWS_AS(train_step_kd(fresh, batch, cfg, rng2), ContractViolation);
}

TEST_CASE("checkpoint save/load round-trip") {
  Config cfg = tiny_config();
  Checkpoint ckpt = init_checkpoint(cfg, 21);
  Dataset ds = tiny_dataset(cfg, 1, 23);
  Rng rng(3);
  std::vector<const DatasetItem*> batch{&ds.items[0]};
  train_step_mv(ckpt, batch, cfg, rng);

  const std::string stem = test_util::tmp_dir() + "/ckpt_rt";
  save_checkpoint(ckpt, stem);
  Checkpoint back = load_checkpoint(stem);
  CHECK(back.stage == "mv");
  CHECK(back.step == ckpt.step);
  CHECK(back.adam.t == ckpt.adam.t);
  for (const auto& [path, e] : ckpt.params) {
    CHECK(back.params.get(path).vec() == e.value.vec());
    CHECK(back.params.trainable(path) == ckpt.params.trainable(path));
  }
  for (const auto& [path, m] : ckpt.adam.m) CHECK(back.adam.m.at(path) == m);
}

TEST_CASE("run_training: deterministic reruns, loss log, lr schedule") {
  Config cfg = tiny_config();
  cfg.steps_mv = 10;
  cfg.n_train_scenes = 2;
  Dataset ds = tiny_dataset(cfg, 2, 41);
  const std::string droot = test_util::tmp_dir() + "/run_ds";
  std::filesystem::remove_all(droot);
  write_dataset(droot + "/train", ds);

  const std::string out1 = test_util::tmp_dir() + "/run_out1";
  const std::string out2 = test_util::tmp_dir() + "/run_out2";
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
  run_training(droot, cfg, "mv", 77, out1);
  run_training(droot, cfg, "mv", 77, out2);

  CHECK(file_bytes(out1 + "/ckpt_mv.dfld") == file_bytes(out2 + "/ckpt_mv.dfld"));
  CHECK(file_bytes(out1 + "/ckpt_mv.opt.dfld") == file_bytes(out2 + "/ckpt_mv.opt.dfld"));
  CHECK(file_bytes(out1 + "/loss_mv.csv") == file_bytes(out2 + "/loss_mv.csv"));

  std::ifstream log(out1 + "/loss_mv.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "step,loss,lr");
  int rows = 0;
  int late_rows = 0;
  while (std::getline(log, line)) {
    ++rows;
    if (line.substr(line.rfind(',') + 1) == "1e-05") ++late_rows;
  }
  CHECK(rows == 10);
  CHECK(late_rows == 2);  // final 20% of steps at the late rate
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("eval");

TEST_CASE("occupancy_metrics: perfect prediction and tiny confusion example") {
  BitGrid pred, gt, vis;
  pred.nx = gt.nx = vis.nx = 4;
  pred.ny = gt.ny = vis.ny = 1;
  pred.nz = gt.nz = vis.nz = 1;
  gt.bits = {1, 0, 1, 0};
  pred.bits = gt.bits;
  vis.bits = {1, 1, 0, 0};
  MetricsReport r = occupancy_metrics(pred, gt, vis);
  CHECK(r.o_acc == 1.0);
  CHECK(r.o_prec == 1.0);
  CHECK(r.o_rec == 1.0);
  CHECK(r.ie_acc == 1.0);
  CHECK(r.ie_prec == 1.0);
  CHECK(r.ie_rec == 1.0);

  // one of each outcome in the O split
  pred.bits = {1, 1, 0, 0};
  gt.bits = {1, 0, 1, 0};
  vis.bits = {1, 1, 1, 1};
  MetricsReport r2 = occupancy_metrics(pred, gt, vis);
  CHECK(r2.o_acc == 0.5);
  CHECK(r2.o_prec == 0.5);
  CHECK(r2.o_rec == 0.5);

  BitGrid wrong = pred;
  wrong.nx = 2;
  wrong.bits = {1, 0};
  CHECK_THROWS_AS(occupancy_metrics(wrong, gt, vis), ContractViolation);
}

TEST_CASE("occupancy_metrics: brute-force confusion oracle on random grids") {
  Rng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 16 + static_cast<int>(rng.uniform_int(33));  // up to 48
    BitGrid pred, gt, vis;
    pred.nx = gt.nx = vis.nx = n;
    pred.ny = gt.ny = vis.ny = n;
    pred.nz = gt.nz = vis.nz = n;
    const size_t total = static_cast<size_t>(n) * n * n;
    pred.bits.resize(total);
    gt.bits.resize(total);
    vis.bits.resize(total);
    for (size_t i = 0; i < total; ++i) {
      pred.bits[i] = rng.bernoulli(0.3);
      gt.bits[i] = rng.bernoulli(0.25);
      vis.bits[i] = rng.bernoulli(0.6);
    }
    MetricsReport r = occupancy_metrics(pred, gt, vis);

    int64_t tp = 0, fp = 0, fn = 0, tn = 0, ietp = 0, iefp = 0, iefn = 0, ietn = 0;
    for (int iz = 0; iz < n; ++iz)
      for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
          const size_t i = static_cast<size_t>(iz) * n * n + static_cast<size_t>(iy) * n + static_cast<size_t>(ix);
          const bool p = pred.bits[i], g = gt.bits[i];
          tp += p && g;
          fp += p && !g;
          fn += !p && g;
          tn += !p && !g;
          if (!vis.bits[i]) {
            ietp += !p && !g;
            iefp += !p && g;
            iefn += p && !g;
            ietn += p && g;
          }
        }
    CHECK(r.o_counts.tp == tp);
    CHECK(r.o_counts.fp == fp);
    CHECK(r.o_counts.fn == fn);
    CHECK(r.o_counts.tn == tn);
    CHECK(r.ie_counts.tp == ietp);
    CHECK(r.ie_counts.fp == iefp);
    CHECK(r.ie_counts.fn == iefn);
    CHECK(r.ie_counts.tn == ietn);
    CHECK(r.o_acc == doctest::Approx(static_cast<double>(tp + tn) / (tp + fp + fn + tn)).epsilon(1e-15));
  }
}

TEST_CASE("occupancy_metrics: IE counts only touch invisible cells") {
  Rng rng(53);
  BitGrid pred, gt, vis;
  pred.nx = gt.nx = vis.nx = 8;
  pred.ny = gt.ny = vis.ny = 8;
  pred.nz = gt.nz = vis.nz = 8;
  pred.bits.resize(512);
  gt.bits.resize(512);
  vis.bits.resize(512);
  int64_t invisible = 0;
  for (size_t i = 0; i < 512; ++i) {
    pred.bits[i] = rng.bernoulli(0.5);
    gt.bits[i] = rng.bernoulli(0.5);
    vis.bits[i] = rng.bernoulli(0.5);
    invisible += vis.bits[i] ? 0 : 1;
  }
  MetricsReport r = occupancy_metrics(pred, gt, vis);
  CHECK(r.ie_counts.total() == invisible);
}

TEST_CASE("depth_metrics: identities, uniform scaling, scalar-loop oracle") {
  Rng rng(57);
  Tensor gt = test_util::random_tensor({6, 8}, rng, 2.0, 20.0);
  Tensor mask = Tensor::full({6, 8}, 1.0);
  DepthMetrics perfect = depth_metrics(gt, gt, mask);
  CHECK(perfect.abs_rel == 0.0);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.delta125 == 1.0);

  std::vector<double> scaled = gt.vec();
  for (auto& v : scaled) v *= 1.3;
  DepthMetrics off = depth_metrics(Tensor::from({6, 8}, scaled), gt, mask);
  CHECK(off.abs_rel == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(off.delta125 == 0.0);

  Tensor pred = test_util::random_tensor({6, 8}, rng, 2.0, 20.0);
  std::vector<double> mbits(48);
  for (auto& v : mbits) v = rng.bernoulli(0.7) ? 1.0 : 0.0;
  Tensor pmask = Tensor::from({6, 8}, mbits);
  DepthMetrics got = depth_metrics(pred, gt, pmask);
  double ar = 0, sq = 0, hit = 0;
  int64_t n = 0;
  for (int i = 0; i < 48; ++i) {
    if (mbits[static_cast<size_t>(i)] == 0.0) continue;
    const double d = pred.vec()[static_cast<size_t>(i)], g = gt.vec()[static_cast<size_t>(i)];
    ++n;
    ar += std::fabs(d - g) / g;
    sq += (d - g) * (d - g);
    hit += std::max(d / g, g / d) < 1.25 ? 1 : 0;
  }
  CHECK(std::fabs(got.abs_rel - ar / n) < 1e-12);
  CHECK(std::fabs(got.rmse - std::sqrt(sq / n)) < 1e-12);
  CHECK(std::fabs(got.delta125 - hit / n) < 1e-12);

  // scale both maps: abs_rel and delta unchanged, rmse scales
  std::vector<double> p2 = pred.vec(), g2 = gt.vec();
  for (auto& v : p2) v *= 3.0;
  for (auto& v : g2) v *= 3.0;
  DepthMetrics sc = depth_metrics(Tensor::from({6, 8}, p2), Tensor::from({6, 8}, g2), pmask);
  CHECK(sc.abs_rel == doctest::Approx(got.abs_rel).epsilon(1e-12));
  CHECK(sc.delta125 == got.delta125);
  CHECK(sc.rmse == doctest::Approx(3.0 * got.rmse).epsilon(1e-12));

  CHECK_THROWS_AS(depth_metrics(pred, gt, Tensor::zeros({6, 8})), ContractViolation);
}

TEST_CASE("predict_occupancy_grid: plugged-in ground truth reproduces the label grid exactly") {
  Config cfg = tiny_config();
  SceneGT scene = generate_scene(61, cfg.scene_config());

  RenderContext ctx;
  ctx.density_oracle = [&](const Vec3& p) { return gt_density(scene, p); };
  OccupancyPrediction pred = predict_occupancy_grid(ctx, cfg.grid_spec(), cfg.resolved_tau_occ());
  BitGrid gt = occupancy_grid_from_scene(scene, cfg.grid_spec());
  CHECK(pred.bits.bits == gt.bits);
}

TEST_CASE("predict_occupancy_grid: low-bias untrained model predicts empty") {
  Config cfg = tiny_config();
  Dataset ds = tiny_dataset(cfg, 1, 67);
  Checkpoint ckpt = init_checkpoint(cfg, 71);
  // force tiny densities out of both heads
  for (const std::string path : {"sv.b_out", "mv.mlp2.b_out"})
    ckpt.params.set_value(path, Tensor::full({1}, -12.0));
  for (const std::string path : {"sv.w_out", "mv.mlp2.w_out"})
    ckpt.params.set_value(path, Tensor::zeros(ckpt.params.get(path).shape()));
  for (const std::string mode : {"sv", "mv-1view", "mv-nview"}) {
    OccupancyPrediction pred = predict_occupancy_grid(ckpt, ds.items[0], cfg, mode);
    for (uint8_t b : pred.bits.bits) CHECK(b == 0);
  }
  CHECK_THROWS_AS(parse_eval_mode("mv-view"), ContractViolation);
  CHECK_THROWS_AS(parse_eval_mode("banana"), ContractViolation);
  CHECK(parse_eval_mode("mv-2view").n_views == 2);
  CHECK(parse_eval_mode("kd").head == DensityHead::SingleView);
}

TEST_CASE("render_profile: extremes and footprint match") {
  GridSpec spec;
  spec.nx = 8;
  spec.ny = 4;
  spec.nz = 8;
  const size_t total = 8 * 4 * 8;

  const std::string white_path = test_util::tmp_dir() + "/prof_white.ppm";
  render_profile(std::vector<double>(total, 0.0), spec, white_path);
  Tensor white = read_ppm(white_path);
  for (double v : white.vec()) CHECK(v == 1.0);

  const std::string black_path = test_util::tmp_dir() + "/prof_black.ppm";
  render_profile(std::vector<double>(total, 50.0), spec, black_path);
  Tensor black = read_ppm(black_path);
  for (double v : black.vec()) CHECK(v <= 1.0 / 255.0);

  // scene footprint: dark exactly where a column holds occupied cells
  Config cfg = tiny_config();
  SceneGT scene = generate_scene(73, cfg.scene_config());
  GridSpec gs = cfg.grid_spec();
  BitGrid occ = occupancy_grid_from_scene(scene, gs);
  std::vector<double> sigma(occ.bits.size());
  for (size_t i = 0; i < occ.bits.size(); ++i) sigma[i] = occ.bits[i] ? 50.0 : 0.0;
  const std::string fp_path = test_util::tmp_dir() + "/prof_scene.ppm";
  render_profile(sigma, gs, fp_path);
  Tensor prof = read_ppm(fp_path);
  for (int iz = 0; iz < gs.nz; ++iz)
    for (int ix = 0; ix < gs.nx; ++ix) {
      bool col_occupied = false;
      for (int iy = 0; iy < gs.ny; ++iy) col_occupied = col_occupied || occ.bits[static_cast<size_t>(occ.index(ix, iy, iz))];
      const double v = prof.at({0, gs.nz - 1 - iz, ix});
      if (col_occupied)
        CHECK(v < 0.5);
      else
        CHECK(v == 1.0);
    }
}

TEST_CASE("render_profile: darkening monotone in density") {
  GridSpec spec;
  spec.nx = 4;
  spec.ny = 2;
  spec.nz = 4;
  Rng rng(79);
  std::vector<double> sigma(32);
  for (auto& v : sigma) v = rng.uniform(0.0, 10.0);
  const std::string p1 = test_util::tmp_dir() + "/prof_m1.ppm";
  const std::string p2 = test_util::tmp_dir() + "/prof_m2.ppm";
  render_profile(sigma, spec, p1);
  std::vector<double> more = sigma;
  more[9] += 5.0;
  render_profile(more, spec, p2);
  Tensor a = read_ppm(p1), b = read_ppm(p2);
  for (size_t i = 0; i < a.vec().size(); ++i) CHECK(b.vec()[i] <= a.vec()[i] + 1e-12);
}

TEST_CASE("write_report: schema, decimals, deterministic bytes") {
  MetricsReport r;
  r.mode = "sv";
  r.o_acc = 0.9123456789;
  r.o_prec = 0.5;
  r.o_rec = 0.25;
  r.ie_acc = 0.75;
  r.ie_prec = std::nan("");
  r.ie_rec = 1.0;
  const std::string path = test_util::tmp_dir() + "/report.csv";
  write_report({r}, path);
  std::ifstream is(path);
  std::string header, row, extra;
  std::getline(is, header);
  std::getline(is, row);
  CHECK_FALSE(std::getline(is, extra));
  CHECK(header == "mode,O_acc,O_prec,O_rec,IE_acc,IE_prec,IE_rec,AbsRel,RMSE,delta125");
  CHECK(row == "sv,0.912346,0.500000,0.250000,0.750000,nan,1.000000,nan,nan,nan");

  const std::string path2 = test_util::tmp_dir() + "/report2.csv";
  write_report({r}, path2);
  CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("gt_depth_map and evaluate_depth against the oracle density") {
  Config cfg = tiny_config();
  Dataset ds = tiny_dataset(cfg, 1, 83);
  const DatasetItem& item = ds.items[0];
  const CameraModel& cam = item.frames.frames[static_cast<size_t>(item.frames.density_views[0])].cam;

  Tensor gt, mask;
  gt_depth_map(item.scene, cam, cfg.z_near, cfg.z_far, gt, mask);
  CHECK(gt.shape() == Shape{cam.height, cam.width});
  double valid = 0;
  for (double v : mask.vec()) valid += v;
  CHECK(valid > 0);
  for (int64_t i = 0; i < gt.numel(); ++i)
    if (mask.vec()[static_cast<size_t>(i)] != 0.0) {
      CHECK(gt.vec()[static_cast<size_t>(i)] >= cfg.z_near);
      CHECK(gt.vec()[static_cast<size_t>(i)] <= cfg.z_far);
    }
}

TEST_SUITE_END();
