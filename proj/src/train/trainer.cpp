#include "train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/checkpoint.hpp"
#include "loss/losses.hpp"

namespace df {

namespace {

double lr_for_step(const Config& cfg, const std::string& stage, int64_t step, int64_t total_steps) {
  if (stage == "kd") return cfg.lr_kd;
  const int64_t cutoff = static_cast<int64_t>(std::llround((1.0 - cfg.late_fraction) * static_cast<double>(total_steps)));
  return step < cutoff ? cfg.lr : cfg.lr_late;
}

// Per-item training inputs after augmentation: flipping mirrors the whole
// item (all images and cameras); color jitter touches only encoder input.
struct ItemView {
  std::vector<int> density_views;
  std::vector<CameraModel> density_cams;
  std::vector<Tensor> encoder_images;
  std::vector<CameraModel> loss_cams;
  std::vector<Tensor> loss_images;
  std::vector<RenderView> render_views;
};

ItemView prepare_item(const DatasetItem& item, const Config& cfg, bool training, Rng& rng) {
  item.frames.validate_roles();
  ItemView v;
  const bool flip = training && cfg.aug_flip && rng.bernoulli(0.5);

  v.density_views = training ? view_dropout(item.frames.density_views, cfg.view_dropout_rate, rng)
                             : item.frames.density_views;
  for (int idx : v.density_views) {
    const Frame& f = item.frames.frames[static_cast<size_t>(idx)];
    CameraModel cam = flip ? f.cam.flipped_horizontal() : f.cam;
    Tensor img = flip ? flip_image_horizontal(f.image) : f.image;
    if (training && cfg.aug_color) img = color_jitter(img, rng);
    v.density_cams.push_back(cam);
    v.encoder_images.push_back(std::move(img));
  }
  for (int idx : item.frames.loss_views) {
    const Frame& f = item.frames.frames[static_cast<size_t>(idx)];
    v.loss_cams.push_back(flip ? f.cam.flipped_horizontal() : f.cam);
    v.loss_images.push_back(flip ? flip_image_horizontal(f.image) : f.image);
  }
  for (int idx : item.frames.render_views) {
    const Frame& f = item.frames.frames[static_cast<size_t>(idx)];
    v.render_views.push_back({flip ? f.cam.flipped_horizontal() : f.cam,
                              flip ? flip_image_horizontal(f.image) : f.image});
  }
  return v;
}

RenderContext context_from_item(BoundParams& bp, Tape* tape, const ItemView& v, const Config& cfg,
                                DensityHead head) {
  RenderContext ctx;
  ctx.params = &bp;
  ctx.head = head;
  ctx.pe = cfg.pe_config();
  ctx.density_cams = v.density_cams;
  for (const Tensor& img : v.encoder_images) ctx.feats.push_back(encode(bp, tape, img));
  return ctx;
}

// KD point set: the renderer's stratified samples on rays cast from
// randomly chosen loss-view patches.
std::vector<Vec3> kd_points(const ItemView& v, const Config& cfg, Rng& rng) {
  std::vector<Vec3> pts;
  SamplerConfig sampler = cfg.sampler_config(true);
  for (int pi = 0; pi < cfg.patches_per_item; ++pi) {
    const size_t li = rng.uniform_int(v.loss_cams.size());
    const CameraModel& cam = v.loss_cams[li];
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cam.width - cfg.patch_size + 1)));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cam.height - cfg.patch_size + 1)));
    for (int py = 0; py < cfg.patch_size; ++py)
      for (int px = 0; px < cfg.patch_size; ++px) {
        Ray r = ray_through_pixel(cam, x0 + px, y0 + py);
        RaySamples s = sample_ray_points(r, sampler, &rng);
        pts.insert(pts.end(), s.points.begin(), s.points.end());
      }
  }
  return pts;
}

void append_loss_row(std::ofstream& os, int64_t step, double loss, double lr) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld,%.12g,%.12g\n", static_cast<long long>(step), loss, lr);
  os << buf;
}

}  // namespace

Tensor crop_image(const Tensor& image, int x0, int y0, int size) {
  return slice(nullptr, image, {0, y0, x0}, {3, y0 + size, x0 + size});
}

Tensor flip_image_horizontal(const Tensor& image) {
  require(image.rank() == 3, "flip_image_horizontal: expects [C,H,W]");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> v(static_cast<size_t>(image.numel()));
  const double* d = image.data();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      const double* src = d + (static_cast<int64_t>(ci) * h + y) * w;
      double* dst = v.data() + (static_cast<int64_t>(ci) * h + y) * w;
      for (int x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  return Tensor::from(image.shape(), std::move(v));
}

Tensor color_jitter(const Tensor& image, Rng& rng) {
  const double contrast = rng.uniform(0.9, 1.1);
  const double brightness = rng.uniform(-0.1, 0.1);
  std::vector<double> v(static_cast<size_t>(image.numel()));
  const double* d = image.data();
  for (int64_t i = 0; i < image.numel(); ++i) {
    const double x = (d[i] - 0.5) * contrast + 0.5 + brightness;
    v[static_cast<size_t>(i)] = std::min(std::max(x, 0.0), 1.0);
  }
  return Tensor::from(image.shape(), std::move(v));
}

std::vector<int> view_dropout(const std::vector<int>& density_views, double rate, Rng& rng) {
  require(!density_views.empty(), "view_dropout: empty view set");
  require(rate >= 0.0 && rate < 1.0, "view_dropout: rate must lie in [0,1)");
  std::vector<int> kept{density_views.front()};
  for (size_t i = 1; i < density_views.size(); ++i)
    if (!rng.bernoulli(rate)) kept.push_back(density_views[i]);
  return kept;
}

Checkpoint init_checkpoint(const Config& cfg, uint64_t seed) {
  Checkpoint ckpt;
  Rng rng(seed ^ 0x1217E5EEDull);
  init_backbone_params(ckpt.params, rng);
  init_head_params(ckpt.params, rng);
  ckpt.params.set_trainable_prefix("sv.", false);  // single-view head waits for distillation
  ckpt.stage = "mv";
  ckpt.adam.lr = cfg.lr;
  ckpt.config_snapshot = cfg.to_kv();
  return ckpt;
}

void begin_kd_stage(Checkpoint& ckpt) {
  require(ckpt.stage == "mv", "begin_kd_stage: expected an mv-stage checkpoint, got '" + ckpt.stage + "'");
  ckpt.params.set_trainable_prefix("backbone.", false);
  ckpt.params.set_trainable_prefix("mv.", false);
  ckpt.params.set_trainable_prefix("sv.", true);
  ckpt.adam = AdamState{};
  ckpt.stage = "kd";
  ckpt.step = 0;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& stem) {
  write_params(ckpt.params, stem + ".dfld");
  ParamSet opt;
  opt.insert("t", Tensor::scalar(static_cast<double>(ckpt.adam.t)));
  for (const auto& [path, m] : ckpt.adam.m)
    opt.insert("m." + path, Tensor::from({static_cast<int>(m.size())}, m));
  for (const auto& [path, v] : ckpt.adam.v)
    opt.insert("v." + path, Tensor::from({static_cast<int>(v.size())}, v));
  write_params(opt, stem + ".opt.dfld");
  KvPairs kv;
  kv.emplace_back("stage", ckpt.stage);
  kv.emplace_back("step", std::to_string(ckpt.step));
  for (const auto& [k, v] : ckpt.config_snapshot) kv.emplace_back(k, v);
  write_kv(stem + ".cfg", kv);
}

Checkpoint load_checkpoint(const std::string& stem) {
  Checkpoint ckpt;
  ckpt.params = read_params(stem + ".dfld");
  ParamSet opt = read_params(stem + ".opt.dfld");
  for (const auto& [path, e] : opt) {
    if (path == "t")
      ckpt.adam.t = static_cast<int64_t>(e.value.item());
    else if (path.rfind("m.", 0) == 0)
      ckpt.adam.m[path.substr(2)] = e.value.vec();
    else if (path.rfind("v.", 0) == 0)
      ckpt.adam.v[path.substr(2)] = e.value.vec();
    else
      throw IoError(stem + ".opt.dfld: unexpected entry '" + path + "'");
  }
  KvPairs kv = read_kv(stem + ".cfg");
  auto m = kv_map(kv);
  auto stage_it = m.find("stage");
  if (stage_it == m.end()) throw IoError(stem + ".cfg: missing stage");
  ckpt.stage = stage_it->second;
  ckpt.step = std::stoll(m.at("step"));
  for (const auto& [k, v] : kv)
    if (k != "stage" && k != "step") ckpt.config_snapshot.emplace_back(k, v);
  return ckpt;
}

StepResult train_step_mv(Checkpoint& ckpt, const std::vector<const DatasetItem*>& batch, const Config& cfg,
                         Rng& rng) {
  require(ckpt.stage == "mv", "train_step_mv: checkpoint stage is '" + ckpt.stage + "'");
  require(!batch.empty(), "train_step_mv: empty batch");

  Tape tape;
  BoundParams bp(ckpt.params, &tape);
  SamplerConfig sampler = cfg.sampler_config(true);
  LossConfig loss_cfg = cfg.loss_config();

  Tensor loss = Tensor::scalar(0.0);
  for (const DatasetItem* item : batch) {
    ItemView view = prepare_item(*item, cfg, true, rng);
    RenderContext ctx = context_from_item(bp, &tape, view, cfg, DensityHead::MultiView);

    std::vector<PatchRequest> reqs;
    std::vector<Tensor> targets;
    for (int pi = 0; pi < cfg.patches_per_item; ++pi) {
      const size_t li = rng.uniform_int(view.loss_cams.size());
      const CameraModel& cam = view.loss_cams[li];
      PatchRequest req;
      req.cam = cam;
      req.size = cfg.patch_size;
      req.x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cam.width - cfg.patch_size + 1)));
      req.y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cam.height - cfg.patch_size + 1)));
      reqs.push_back(req);
      targets.push_back(reshape(nullptr, crop_image(view.loss_images[li], req.x0, req.y0, req.size),
                                {1, 3, req.size, req.size}));
    }
    std::vector<RenderedPatch> rendered = render_patches(&tape, ctx, reqs, view.render_views, sampler, &rng);

    PatchBatch pb;
    pb.targets = concat(nullptr, targets, 0);
    const int s = cfg.patch_size;
    for (size_t k = 0; k < view.render_views.size(); ++k) {
      std::vector<Tensor> per_patch;
      for (auto& rp : rendered) per_patch.push_back(reshape(&tape, rp.colors[k], {1, 3, s, s}));
      pb.recons.push_back(concat(&tape, per_patch, 0));
    }
    std::vector<Tensor> depths;
    for (auto& rp : rendered) depths.push_back(reshape(&tape, rp.depth, {1, s, s}));
    pb.depth = concat(&tape, depths, 0);

    loss = add(&tape, loss, total_loss(&tape, pb, loss_cfg));
  }
  loss = scale(&tape, loss, 1.0 / static_cast<double>(batch.size()));

  tape.backward(loss);
  GradMap grads = bp.trainable_grads();
  ckpt.adam.lr = lr_for_step(cfg, ckpt.stage, ckpt.step, cfg.steps_mv);
  adam_step(ckpt.params, grads, ckpt.adam);
  ckpt.step += 1;
  return {loss.item(), ckpt.adam.lr};
}

StepResult train_step_kd(Checkpoint& ckpt, const std::vector<const DatasetItem*>& batch, const Config& cfg,
                         Rng& rng) {
  require(ckpt.stage == "kd", "train_step_kd: checkpoint stage is '" + ckpt.stage + "'");
  require(!batch.empty(), "train_step_kd: empty batch");
  for (const auto& [path, e] : ckpt.params)
    if (path.rfind("backbone.", 0) == 0 || path.rfind("mv.", 0) == 0)
      require(!e.trainable, "train_step_kd: teacher parameter '" + path + "' must be frozen");

  Tape tape;
  BoundParams bp(ckpt.params, &tape);
  Tensor loss = Tensor::scalar(0.0);
  for (const DatasetItem* item : batch) {
    ItemView view = prepare_item(*item, cfg, false, rng);  // teacher sees all views, no augmentation
    std::vector<Vec3> pts = kd_points(view, cfg, rng);

    RenderContext teacher = context_from_item(bp, &tape, view, cfg, DensityHead::MultiView);
    Tensor sigma_teacher = eval_density_points(&tape, teacher, pts);

    RenderContext student = teacher;
    student.head = DensityHead::SingleView;
    Tensor sigma_student = eval_density_points(&tape, student, pts);

    loss = add(&tape, loss, kd_loss(&tape, sigma_teacher, sigma_student));
  }
  loss = scale(&tape, loss, 1.0 / static_cast<double>(batch.size()));

  tape.backward(loss);
  GradMap grads = bp.trainable_grads();
  ckpt.adam.lr = lr_for_step(cfg, ckpt.stage, ckpt.step, cfg.steps_kd);
  adam_step(ckpt.params, grads, ckpt.adam);
  ckpt.step += 1;
  return {loss.item(), ckpt.adam.lr};
}

double kd_loss_on_items(const Checkpoint& ckpt, const std::vector<const DatasetItem*>& items,
                        const Config& cfg, uint64_t seed) {
  require(!items.empty(), "kd_loss_on_items: empty item list");
  double total = 0.0;
  for (size_t i = 0; i < items.size(); ++i) {
    Rng rng(seed ^ (0xE11Aull + i * 0x9E3779B9ull));
    BoundParams bp(ckpt.params, nullptr);
    ItemView view = prepare_item(*items[i], cfg, false, rng);
    std::vector<Vec3> pts = kd_points(view, cfg, rng);
    RenderContext teacher = context_from_item(bp, nullptr, view, cfg, DensityHead::MultiView);
    Tensor st = eval_density_points(nullptr, teacher, pts);
    RenderContext student = teacher;
    student.head = DensityHead::SingleView;
    Tensor ss = eval_density_points(nullptr, student, pts);
    total += kd_loss(nullptr, st, ss).item();
  }
  return total / static_cast<double>(items.size());
}

RenderContext make_eval_context(BoundParams& bp, const DatasetItem& item,
                                const Config& cfg, DensityHead head, int n_views) {
  item.frames.validate_roles();
  RenderContext ctx;
  ctx.params = &bp;
  ctx.head = head;
  ctx.pe = cfg.pe_config();
  int count = static_cast<int>(item.frames.density_views.size());
  if (n_views > 0) count = std::min(count, n_views);
  if (head == DensityHead::SingleView) count = 1;
  for (int k = 0; k < count; ++k) {
    const Frame& f = item.frames.frames[static_cast<size_t>(item.frames.density_views[static_cast<size_t>(k)])];
    ctx.density_cams.push_back(f.cam);
    ctx.feats.push_back(encode(bp, bp.tape(), f.image));
  }
  return ctx;
}

void run_training(const std::string& dataset_dir, const Config& cfg, const std::string& stage,
                  uint64_t seed, const std::string& out_dir) {
  require(stage == "mv" || stage == "kd", "run_training: stage must be mv or kd");
  Dataset ds = read_dataset(dataset_dir + "/train");
  require(!ds.items.empty(), "run_training: empty dataset");

  std::filesystem::create_directories(out_dir);
  Checkpoint ckpt;
  int64_t steps = 0;
  if (stage == "mv") {
    ckpt = init_checkpoint(cfg, seed);
    steps = cfg.steps_mv;
  } else {
    require(!cfg.init_checkpoint.empty(), "run_training: kd stage needs init_checkpoint");
    ckpt = load_checkpoint(cfg.init_checkpoint);
    begin_kd_stage(ckpt);
    ckpt.config_snapshot = cfg.to_kv();
    steps = cfg.steps_kd;
  }

  std::ofstream log(out_dir + "/loss_" + stage + ".csv", std::ios::trunc);
  if (!log) throw IoError("cannot open loss log in '" + out_dir + "'");
  log << "step,loss,lr\n";

  const int64_t ckpt_every = std::max<int64_t>(1, steps / 10);
  Rng base(seed ^ 0x7147EEDull);
  for (int64_t step = 0; step < steps; ++step) {
    Rng rng = base.fork(static_cast<uint64_t>(step) + (stage == "kd" ? 1ull << 40 : 0));
    std::vector<const DatasetItem*> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(&ds.items[rng.uniform_int(ds.items.size())]);
    StepResult r = stage == "mv" ? train_step_mv(ckpt, batch, cfg, rng) : train_step_kd(ckpt, batch, cfg, rng);
    append_loss_row(log, ckpt.step, r.loss, r.lr);
    if (ckpt.step % ckpt_every == 0 || ckpt.step == steps) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "/ckpt_%s_%06lld", stage.c_str(), static_cast<long long>(ckpt.step));
      save_checkpoint(ckpt, out_dir + buf);
    }
  }
  save_checkpoint(ckpt, out_dir + "/ckpt_" + stage);
  log.close();
}

}  // namespace df
