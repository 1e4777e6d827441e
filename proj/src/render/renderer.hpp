#pragma once

#include <array>
#include <functional>
#include <vector>

#include "model/backbone.hpp"
#include "model/heads.hpp"

namespace df {

// Bilinear color lookup at the projection of a world point; valid mirrors
// the projection flag.
struct ColorSample {
  std::array<double, 3> rgb{0, 0, 0};
  bool valid = false;
};
ColorSample sample_color(const Tensor& image /*[3,H,W]*/, const CameraModel& cam, const Vec3& point);

// ---- alpha compositing ----
// weights w_i = T_i * alpha_i with T the exclusive product of (1-alpha);
// invalid color samples contribute zero to their view's reconstruction.
struct CompositeBatch {
  std::vector<Tensor> colors;     // per render view [R,3]
  Tensor depth;                   // [R] expected termination distance
  Tensor weights;                 // [R,M] contribution per sample
  Tensor final_transmittance;     // [R]
};
// sigma [R,M] (>=0), deltas/depths [R,M] constants, per-view colors
// [R,M,3] with zeros already written at invalid samples.
CompositeBatch composite_batch(Tape* tp, const Tensor& sigma, const Tensor& deltas, const Tensor& depths,
                               const std::vector<Tensor>& view_colors);

struct CompositeResult {
  std::vector<Tensor> colors;  // per render view [3]
  Tensor depth;                // scalar
  Tensor weights;              // [M]
  Tensor final_transmittance;  // scalar
};
CompositeResult composite(Tape* tp, const Tensor& sigma /*[M]*/, const RaySamples& samples,
                          const std::vector<std::vector<ColorSample>>& colors_per_view /*K x M*/);

// ---- ray rendering against a density field ----
enum class DensityHead { MultiView, SingleView };

struct RenderContext {
  std::vector<FeatureMap> feats;           // one per density view
  std::vector<CameraModel> density_cams;   // aligned with feats; [0] is the reference
  BoundParams* params = nullptr;
  DensityHead head = DensityHead::MultiView;
  PositionalEncodingConfig pe;
  // When set, replaces the learned heads entirely (oracle substitution).
  std::function<double(const Vec3&)> density_oracle;
};

// Density for a flat list of world points -> [P]. Points outside every
// density frustum evaluate to zero.
Tensor eval_density_points(Tape* tp, const RenderContext& ctx, const std::vector<Vec3>& points);

struct RenderView {
  CameraModel cam;
  Tensor image;  // [3,H,W]
};

struct PatchRequest {
  CameraModel cam;  // loss view the rays originate from
  int x0 = 0, y0 = 0, size = 8;
};

struct RenderedPatch {
  std::vector<Tensor> colors;  // per render view [3,s,s]
  Tensor depth;                // [s,s]
  Tensor weight_sum;           // [s,s] accumulated opacity
};

// Casts rays for all patches, evaluates the density field once for the
// whole batch, samples colors from every render view, and composites.
std::vector<RenderedPatch> render_patches(Tape* tp, const RenderContext& ctx,
                                          const std::vector<PatchRequest>& patches,
                                          const std::vector<RenderView>& render_views,
                                          const SamplerConfig& sampler, Rng* rng);

RenderedPatch render_patch(Tape* tp, const RenderContext& ctx, const PatchRequest& patch,
                           const std::vector<RenderView>& render_views, const SamplerConfig& sampler,
                           Rng* rng);

}  // namespace df
