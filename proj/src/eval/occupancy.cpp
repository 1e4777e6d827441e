#include "eval/occupancy.hpp"

#include <cmath>

#include "synth/dataset_io.hpp"

namespace df {

namespace {

constexpr int kChunk = 16384;

}  // namespace

EvalMode parse_eval_mode(const std::string& mode) {
  if (mode == "sv" || mode == "kd") return {DensityHead::SingleView, 1};
  if (mode == "mv-nview") return {DensityHead::MultiView, 0};
  if (mode.rfind("mv-", 0) == 0 && mode.size() > 7 && mode.substr(mode.size() - 4) == "view") {
    const std::string num = mode.substr(3, mode.size() - 7);
    int k = 0;
    for (char c : num) {
      require(c >= '0' && c <= '9', "unknown eval mode '" + mode + "'");
      k = k * 10 + (c - '0');
    }
    require(k >= 1, "eval mode '" + mode + "' needs at least one view");
    return {DensityHead::MultiView, k};
  }
  fail_contract("unknown eval mode '" + mode + "' (expected sv, kd, mv-<k>view, or mv-nview)");
}

OccupancyPrediction predict_occupancy_grid(const RenderContext& ctx, const GridSpec& spec, double tau) {
  OccupancyPrediction out;
  out.bits.nx = spec.nx;
  out.bits.ny = spec.ny;
  out.bits.nz = spec.nz;
  out.bits.bounds = spec.bounds;
  out.bits.bits.assign(static_cast<size_t>(out.bits.size()), 0);
  out.sigma.assign(static_cast<size_t>(out.bits.size()), 0.0);

  std::vector<Vec3> centers;
  centers.reserve(static_cast<size_t>(out.bits.size()));
  for (int iz = 0; iz < spec.nz; ++iz)
    for (int iy = 0; iy < spec.ny; ++iy)
      for (int ix = 0; ix < spec.nx; ++ix) centers.push_back(out.bits.cell_center(ix, iy, iz));

  for (size_t at = 0; at < centers.size(); at += kChunk) {
    const size_t n = std::min(static_cast<size_t>(kChunk), centers.size() - at);
    std::vector<Vec3> chunk(centers.begin() + static_cast<int64_t>(at), centers.begin() + static_cast<int64_t>(at + n));
    Tensor sigma = eval_density_points(nullptr, ctx, chunk);
    for (size_t i = 0; i < n; ++i) {
      const double s = sigma.vec()[i];
      out.sigma[at + i] = s;
      out.bits.bits[at + i] = s >= tau ? 1 : 0;
    }
  }
  return out;
}

OccupancyPrediction predict_occupancy_grid(const Checkpoint& ckpt, const DatasetItem& item,
                                           const Config& cfg, const std::string& mode) {
  const EvalMode em = parse_eval_mode(mode);
  BoundParams bp(ckpt.params, nullptr);
  RenderContext ctx = make_eval_context(bp, item, cfg, em.head, em.n_views);
  return predict_occupancy_grid(ctx, cfg.grid_spec(), cfg.resolved_tau_occ());
}

MetricsReport evaluate_occupancy(const Checkpoint& ckpt, const Dataset& test, const Config& cfg,
                                 const std::string& mode, std::vector<MetricsReport>* per_scene) {
  require(!test.items.empty(), "evaluate_occupancy: empty test set");
  MetricsReport pooled;
  pooled.mode = mode;
  for (const auto& item : test.items) {
    OccupancyPrediction pred = predict_occupancy_grid(ckpt, item, cfg, mode);
    MetricsReport r = occupancy_metrics(pred.bits, item.occupancy, item.visibility);
    r.mode = mode;
    if (per_scene) per_scene->push_back(r);
    pooled.o_counts.tp += r.o_counts.tp;
    pooled.o_counts.fp += r.o_counts.fp;
    pooled.o_counts.fn += r.o_counts.fn;
    pooled.o_counts.tn += r.o_counts.tn;
    pooled.ie_counts.tp += r.ie_counts.tp;
    pooled.ie_counts.fp += r.ie_counts.fp;
    pooled.ie_counts.fn += r.ie_counts.fn;
    pooled.ie_counts.tn += r.ie_counts.tn;
  }
  fill_occupancy_metrics(pooled);
  return pooled;
}

Tensor render_depth_map(const Checkpoint& ckpt, const DatasetItem& item, const Config& cfg,
                        const std::string& mode) {
  const EvalMode em = parse_eval_mode(mode);
  BoundParams bp(ckpt.params, nullptr);
  RenderContext ctx = make_eval_context(bp, item, cfg, em.head, em.n_views);
  const CameraModel& cam = item.frames.frames[static_cast<size_t>(item.frames.density_views[0])].cam;

  SamplerConfig sampler = cfg.sampler_config(false);
  sampler.samples_per_ray = cfg.eval_samples_per_ray;
  const int m = sampler.samples_per_ray;

  std::vector<double> depth_map(static_cast<size_t>(cam.width) * cam.height, 0.0);
  const int rays_per_chunk = std::max(1, kChunk / m);
  std::vector<std::pair<int, int>> pixels;
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) pixels.emplace_back(px, py);

  for (size_t at = 0; at < pixels.size(); at += static_cast<size_t>(rays_per_chunk)) {
    const size_t n = std::min(static_cast<size_t>(rays_per_chunk), pixels.size() - at);
    std::vector<Vec3> pts(n * static_cast<size_t>(m));
    std::vector<double> deltas(pts.size()), dists(pts.size());
    for (size_t r = 0; r < n; ++r) {
      Ray ray = ray_through_pixel(cam, pixels[at + r].first, pixels[at + r].second);
      RaySamples s = sample_ray_points(ray, sampler, nullptr);
      for (int i = 0; i < m; ++i) {
        pts[r * static_cast<size_t>(m) + static_cast<size_t>(i)] = s.points[static_cast<size_t>(i)];
        deltas[r * static_cast<size_t>(m) + static_cast<size_t>(i)] = s.spacings[static_cast<size_t>(i)];
        dists[r * static_cast<size_t>(m) + static_cast<size_t>(i)] = s.depths[static_cast<size_t>(i)];
      }
    }
    Tensor sigma = reshape(nullptr, eval_density_points(nullptr, ctx, pts), {static_cast<int>(n), m});
    CompositeBatch cb = composite_batch(nullptr, sigma, Tensor::from({static_cast<int>(n), m}, std::move(deltas)),
                                        Tensor::from({static_cast<int>(n), m}, std::move(dists)), {});
    for (size_t r = 0; r < n; ++r) {
      const auto [px, py] = pixels[at + r];
      depth_map[static_cast<size_t>(py) * cam.width + static_cast<size_t>(px)] = cb.depth.vec()[r];
    }
  }
  return Tensor::from({cam.height, cam.width}, std::move(depth_map));
}

void gt_depth_map(const SceneGT& scene, const CameraModel& cam, double z_near, double z_far,
                  Tensor& depth, Tensor& mask) {
  std::vector<double> d(static_cast<size_t>(cam.width) * cam.height, 0.0);
  std::vector<double> m(d.size(), 0.0);
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) {
      Ray ray = ray_through_pixel(cam, px, py);
      const double t = first_hit(scene, ray, z_far);
      if (std::isfinite(t) && t >= z_near && t <= z_far) {
        d[static_cast<size_t>(py) * cam.width + static_cast<size_t>(px)] = t;
        m[static_cast<size_t>(py) * cam.width + static_cast<size_t>(px)] = 1.0;
      }
    }
  depth = Tensor::from({cam.height, cam.width}, std::move(d));
  mask = Tensor::from({cam.height, cam.width}, std::move(m));
}

MetricsReport evaluate_depth(const Checkpoint& ckpt, const Dataset& test, const Config& cfg,
                             const std::string& mode) {
  require(!test.items.empty(), "evaluate_depth: empty test set");
  int64_t n = 0;
  double abs_rel = 0, sq = 0, hits = 0;
  for (const auto& item : test.items) {
    const CameraModel& cam = item.frames.frames[static_cast<size_t>(item.frames.density_views[0])].cam;
    Tensor depth = render_depth_map(ckpt, item, cfg, mode);
    Tensor gt, mask;
    gt_depth_map(item.scene, cam, cfg.z_near, cfg.z_far, gt, mask);
    for (int64_t i = 0; i < depth.numel(); ++i) {
      if (mask.vec()[static_cast<size_t>(i)] == 0.0) continue;
      const double d = depth.vec()[static_cast<size_t>(i)], g = gt.vec()[static_cast<size_t>(i)];
      ++n;
      abs_rel += std::fabs(d - g) / g;
      sq += (d - g) * (d - g);
      const double r = d > 0 ? std::max(d / g, g / d) : std::numeric_limits<double>::infinity();
      hits += r < 1.25 ? 1.0 : 0.0;
    }
  }
  require(n > 0, "evaluate_depth: no valid ground-truth pixels");
  MetricsReport rep;
  rep.mode = mode;
  rep.abs_rel = abs_rel / static_cast<double>(n);
  rep.rmse = std::sqrt(sq / static_cast<double>(n));
  rep.delta125 = hits / static_cast<double>(n);
  return rep;
}

void render_profile(const std::vector<double>& sigma, const GridSpec& spec, const std::string& path) {
  require(static_cast<int64_t>(sigma.size()) == static_cast<int64_t>(spec.nx) * spec.ny * spec.nz,
          "render_profile: sigma size does not match the grid");
  const double dy = (spec.bounds[4] - spec.bounds[1]) / spec.ny;
  std::vector<double> img(static_cast<size_t>(3) * spec.nz * spec.nx);
  for (int iz = 0; iz < spec.nz; ++iz)
    for (int ix = 0; ix < spec.nx; ++ix) {
      double od = 0.0;
      for (int iy = 0; iy < spec.ny; ++iy)
        od += sigma[static_cast<size_t>(iz) * spec.ny * spec.nx + static_cast<size_t>(iy) * spec.nx +
                    static_cast<size_t>(ix)] * dy;
      const double shade = std::exp(-od);  // occupied dark
      const int row = spec.nz - 1 - iz;    // far z at the top
      for (int c = 0; c < 3; ++c)
        img[(static_cast<size_t>(c) * spec.nz + static_cast<size_t>(row)) * spec.nx + static_cast<size_t>(ix)] = shade;
    }
  write_ppm(path, Tensor::from({3, spec.nz, spec.nx}, std::move(img)));
}

}  // namespace df
