#include "render/renderer.hpp"

#include <cmath>

namespace df {

namespace {

double bilinear_channel(const double* plane, int h, int w, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * plane[static_cast<int64_t>(y0) * w + x0] +
         fx * (1 - fy) * plane[static_cast<int64_t>(y0) * w + x1] +
         (1 - fx) * fy * plane[static_cast<int64_t>(y1) * w + x0] +
         fx * fy * plane[static_cast<int64_t>(y1) * w + x1];
}

}  // namespace

ColorSample sample_color(const Tensor& image, const CameraModel& cam, const Vec3& point) {
  require(image.rank() == 3 && image.dim(0) == 3, "sample_color: image must be [3,H,W]");
  ColorSample s;
  const Projection pr = project(cam, point);
  if (!pr.valid) return s;
  const int h = image.dim(1), w = image.dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int c = 0; c < 3; ++c) s.rgb[static_cast<size_t>(c)] = bilinear_channel(image.data() + c * plane, h, w, pr.u, pr.v);
  s.valid = true;
  return s;
}

CompositeBatch composite_batch(Tape* tp, const Tensor& sigma, const Tensor& deltas, const Tensor& depths,
                               const std::vector<Tensor>& view_colors) {
  require(sigma.rank() == 2, "composite: sigma must be [R,M]");
  require(deltas.shape() == sigma.shape() && depths.shape() == sigma.shape(),
          "composite: sample arrays must match sigma " + shape_str(sigma.shape()));
  const int r = sigma.dim(0), m = sigma.dim(1);
  for (const double v : sigma.vec())
    require(v >= 0.0, "composite: negative density");
  for (const auto& c : view_colors)
    require(c.shape() == Shape{r, m, 3}, "composite: colors must be [R,M,3]");

  Tensor trans_step = exp_(tp, neg(tp, mul(tp, sigma, deltas)));   // exp(-sigma*delta) = 1-alpha
  Tensor trans = cumprod_exclusive(tp, trans_step);                // T_i
  Tensor alpha = sub(tp, Tensor::full({r, m}, 1.0), trans_step);
  Tensor weights = mul(tp, trans, alpha);                          // [R,M]

  CompositeBatch out;
  out.weights = weights;
  Tensor w3 = reshape(tp, weights, {r, m, 1});
  for (const auto& c : view_colors) out.colors.push_back(sum_axis(tp, mul(tp, w3, c), 1));
  out.depth = sum_axis(tp, mul(tp, weights, depths), 1);
  Tensor t_last = slice(tp, trans, {0, m - 1}, {r, m});
  Tensor s_last = slice(tp, trans_step, {0, m - 1}, {r, m});
  out.final_transmittance = reshape(tp, mul(tp, t_last, s_last), {r});
  return out;
}

CompositeResult composite(Tape* tp, const Tensor& sigma, const RaySamples& samples,
                          const std::vector<std::vector<ColorSample>>& colors_per_view) {
  require(sigma.rank() == 1, "composite: sigma must be a vector");
  const int m = sigma.dim(0);
  require(static_cast<int>(samples.depths.size()) == m && static_cast<int>(samples.spacings.size()) == m,
          "composite: sample count mismatch");
  std::vector<Tensor> colors;
  for (const auto& view : colors_per_view) {
    require(static_cast<int>(view.size()) == m, "composite: color sample count mismatch");
    std::vector<double> c(static_cast<size_t>(m) * 3, 0.0);
    for (int i = 0; i < m; ++i)
      if (view[static_cast<size_t>(i)].valid)
        for (int ch = 0; ch < 3; ++ch) c[static_cast<size_t>(i * 3 + ch)] = view[static_cast<size_t>(i)].rgb[static_cast<size_t>(ch)];
    colors.push_back(Tensor::from({1, m, 3}, std::move(c)));
  }
  CompositeBatch b = composite_batch(tp, reshape(tp, sigma, {1, m}), Tensor::from({1, m}, samples.spacings),
                                     Tensor::from({1, m}, samples.depths), colors);
  CompositeResult out;
  for (auto& c : b.colors) out.colors.push_back(reshape(tp, c, {3}));
  out.depth = reshape(tp, b.depth, {});
  out.weights = reshape(tp, b.weights, {m});
  out.final_transmittance = reshape(tp, b.final_transmittance, {});
  return out;
}

Tensor eval_density_points(Tape* tp, const RenderContext& ctx, const std::vector<Vec3>& points) {
  const int p = static_cast<int>(points.size());
  require(p > 0, "eval_density_points: empty point list");

  if (ctx.density_oracle) {
    std::vector<double> v(static_cast<size_t>(p));
    for (int i = 0; i < p; ++i) v[static_cast<size_t>(i)] = ctx.density_oracle(points[static_cast<size_t>(i)]);
    return Tensor::from({p}, std::move(v));
  }

  require(ctx.params != nullptr && !ctx.feats.empty(), "eval_density_points: missing model context");
  require(ctx.feats.size() == ctx.density_cams.size(), "eval_density_points: feature/camera count mismatch");
  const int nv = ctx.head == DensityHead::SingleView ? 1 : static_cast<int>(ctx.feats.size());

  std::vector<Tensor> feats, pes;
  std::vector<uint8_t> mask(static_cast<size_t>(p) * static_cast<size_t>(nv), 0);
  for (int v = 0; v < nv; ++v) {
    const CameraModel& cam = ctx.density_cams[static_cast<size_t>(v)];
    std::vector<double> pixels(static_cast<size_t>(p) * 2);
    std::vector<double> pe(static_cast<size_t>(p) * kPosEncodingDim);
    for (int i = 0; i < p; ++i) {
      const Projection pr = project(cam, points[static_cast<size_t>(i)]);
      double u = cam.cx, vv = cam.cy, d = ctx.pe.z_near;  // placeholders for invalid projections
      if (pr.valid) {
        u = pr.u;
        vv = pr.v;
        d = pr.depth;
        mask[static_cast<size_t>(i) * static_cast<size_t>(nv) + static_cast<size_t>(v)] = 1;
      }
      pixels[static_cast<size_t>(2 * i)] = std::min(std::max(u, 0.0), static_cast<double>(cam.width - 1));
      pixels[static_cast<size_t>(2 * i + 1)] = std::min(std::max(vv, 0.0), static_cast<double>(cam.height - 1));
      positional_encoding_into(ctx.pe, d, pixels[static_cast<size_t>(2 * i)], pixels[static_cast<size_t>(2 * i + 1)], cam,
                               pe.data() + static_cast<size_t>(i) * kPosEncodingDim);
    }
    feats.push_back(bilinear_sample(tp, ctx.feats[static_cast<size_t>(v)].values, pixels));
    pes.push_back(Tensor::from({p, kPosEncodingDim}, std::move(pe)));
  }

  if (ctx.head == DensityHead::SingleView) {
    Tensor sigma = density_sv_batch(*ctx.params, tp, feats[0], pes[0]);
    std::vector<double> valid(static_cast<size_t>(p));
    bool all = true;
    for (int i = 0; i < p; ++i) {
      valid[static_cast<size_t>(i)] = mask[static_cast<size_t>(i)] ? 1.0 : 0.0;
      all = all && mask[static_cast<size_t>(i)];
    }
    if (!all) sigma = mul(tp, sigma, Tensor::from({p}, std::move(valid)));
    return sigma;
  }
  return density_mv_batch(*ctx.params, tp, feats, pes, mask).sigma;
}

std::vector<RenderedPatch> render_patches(Tape* tp, const RenderContext& ctx,
                                          const std::vector<PatchRequest>& patches,
                                          const std::vector<RenderView>& render_views,
                                          const SamplerConfig& sampler, Rng* rng) {
  require(!patches.empty(), "render_patches: no patches requested");
  require(!render_views.empty(), "render_patches: need at least one render view");
  const int m = sampler.samples_per_ray;

  int r_total = 0;
  for (const auto& pr : patches) {
    require(pr.size >= 1 && pr.x0 >= 0 && pr.y0 >= 0 && pr.x0 + pr.size <= pr.cam.width &&
                pr.y0 + pr.size <= pr.cam.height,
            "render_patches: patch outside the loss image");
    r_total += pr.size * pr.size;
  }

  std::vector<Vec3> points(static_cast<size_t>(r_total) * static_cast<size_t>(m));
  std::vector<double> deltas(points.size()), dists(points.size());
  int ray = 0;
  for (const auto& pr : patches) {
    for (int py = 0; py < pr.size; ++py)
      for (int px = 0; px < pr.size; ++px, ++ray) {
        Ray rr = ray_through_pixel(pr.cam, pr.x0 + px, pr.y0 + py);
        RaySamples s = sample_ray_points(rr, sampler, rng);
        for (int i = 0; i < m; ++i) {
          const size_t at = static_cast<size_t>(ray) * static_cast<size_t>(m) + static_cast<size_t>(i);
          points[at] = s.points[static_cast<size_t>(i)];
          deltas[at] = s.spacings[static_cast<size_t>(i)];
          dists[at] = s.depths[static_cast<size_t>(i)];
        }
      }
  }

  Tensor sigma = reshape(tp, eval_density_points(tp, ctx, points), {r_total, m});

  std::vector<Tensor> colors;
  for (const auto& view : render_views) {
    std::vector<double> c(points.size() * 3, 0.0);
    for (size_t i = 0; i < points.size(); ++i) {
      ColorSample cs = sample_color(view.image, view.cam, points[i]);
      if (cs.valid)
        for (int ch = 0; ch < 3; ++ch) c[i * 3 + static_cast<size_t>(ch)] = cs.rgb[static_cast<size_t>(ch)];
    }
    colors.push_back(Tensor::from({r_total, m, 3}, std::move(c)));
  }

  CompositeBatch cb = composite_batch(tp, sigma, Tensor::from({r_total, m}, std::move(deltas)),
                                      Tensor::from({r_total, m}, std::move(dists)), colors);
  Tensor wsum = sum_axis(tp, cb.weights, 1);  // [R]

  std::vector<RenderedPatch> out;
  int row = 0;
  for (const auto& pr : patches) {
    const int s = pr.size, n = s * s;
    RenderedPatch rp;
    for (const auto& c : cb.colors) {
      Tensor block = slice(tp, c, {row, 0}, {row + n, 3});          // [n,3]
      rp.colors.push_back(reshape(tp, permute(tp, block, {1, 0}), {3, s, s}));
    }
    rp.depth = reshape(tp, slice(tp, cb.depth, {row}, {row + n}), {s, s});
    rp.weight_sum = reshape(tp, slice(tp, wsum, {row}, {row + n}), {s, s});
    out.push_back(std::move(rp));
    row += n;
  }
  return out;
}

RenderedPatch render_patch(Tape* tp, const RenderContext& ctx, const PatchRequest& patch,
                           const std::vector<RenderView>& render_views, const SamplerConfig& sampler,
                           Rng* rng) {
  return render_patches(tp, ctx, {patch}, render_views, sampler, rng)[0];
}

}  // namespace df
