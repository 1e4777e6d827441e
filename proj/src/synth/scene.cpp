#include "synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace df {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.6931471805599453;

const std::array<std::array<double, 3>, 8> kPalette = {{{0.90, 0.15, 0.10},
                                                        {0.12, 0.35, 0.85},
                                                        {0.95, 0.80, 0.10},
                                                        {0.15, 0.70, 0.25},
                                                        {0.80, 0.20, 0.75},
                                                        {0.10, 0.75, 0.80},
                                                        {0.95, 0.50, 0.10},
                                                        {0.85, 0.85, 0.85}}};

struct Interval {
  double t0, t1;
  bool empty() const { return !(t0 < t1); }
};

Interval ray_box(const Ray& r, const Vec3& lo, const Vec3& hi) {
  double t0 = -kInf, t1 = kInf;
  const double o[3] = {r.origin.x, r.origin.y, r.origin.z};
  const double d[3] = {r.dir.x, r.dir.y, r.dir.z};
  const double lo3[3] = {lo.x, lo.y, lo.z};
  const double hi3[3] = {hi.x, hi.y, hi.z};
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo3[a] || o[a] > hi3[a]) return {1, 0};
      continue;
    }
    double ta = (lo3[a] - o[a]) / d[a];
    double tb = (hi3[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return {t0, t1};
}

Interval ray_sphere(const Ray& r, const Vec3& c, double rad) {
  const Vec3 oc = r.origin - c;
  const double b = oc.dot(r.dir);
  const double disc = b * b - (oc.dot(oc) - rad * rad);
  if (disc <= 0.0) return {1, 0};
  const double s = std::sqrt(disc);
  return {-b - s, -b + s};
}

}  // namespace

bool Primitive::contains(const Vec3& p) const {
  if (kind == Kind::Box) {
    return std::fabs(p.x - center.x) <= half_extents.x && std::fabs(p.y - center.y) <= half_extents.y &&
           std::fabs(p.z - center.z) <= half_extents.z;
  }
  return (p - center).norm() <= radius;
}

void Primitive::aabb(Vec3& lo, Vec3& hi) const {
  const Vec3 h = kind == Kind::Box ? half_extents : Vec3{radius, radius, radius};
  lo = center - h;
  hi = center + h;
}

SceneGT generate_scene(uint64_t seed, const SceneGenConfig& cfg) {
  require(cfg.n_primitives_min >= 1, "generate_scene: need at least one primitive");
  require(cfg.n_primitives_max >= cfg.n_primitives_min, "generate_scene: empty primitive count range");
  Rng rng(seed ^ 0x5C3AE5EEDull);
  SceneGT scene;
  scene.seed = seed;
  scene.ground.sigma_solid = cfg.sigma_solid;

  // backdrop: a row of colored wall segments at the far end
  if (cfg.n_backdrop_segments > 0) {
    const double span = scene.bounds_max.x - scene.bounds_min.x;
    const double w = span / cfg.n_backdrop_segments;
    size_t last_color = kPalette.size();
    for (int i = 0; i < cfg.n_backdrop_segments; ++i) {
      Primitive p;
      p.kind = Primitive::Kind::Box;
      p.sigma_solid = cfg.sigma_solid;
      size_t color = rng.uniform_int(kPalette.size());
      if (color == last_color) color = (color + 1) % kPalette.size();  // adjacent segments differ
      last_color = color;
      p.albedo = kPalette[color];
      p.half_extents = {w / 2.0, cfg.backdrop_height / 2.0, 0.4};
      p.center = {scene.bounds_min.x + w * (i + 0.5), scene.ground.height - p.half_extents.y, cfg.backdrop_z};
      scene.primitives.push_back(p);
    }
  }

  const int count = static_cast<int>(scene.primitives.size()) + cfg.n_primitives_min +
                    static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.n_primitives_max - cfg.n_primitives_min + 1)));
  const size_t first_placed = scene.primitives.size();
  int rejections = 0;
  while (static_cast<int>(scene.primitives.size()) < count) {
    Primitive p;
    p.sigma_solid = cfg.sigma_solid;
    p.albedo = kPalette[rng.uniform_int(kPalette.size())];
    const bool box = rng.bernoulli(0.65);
    p.kind = box ? Primitive::Kind::Box : Primitive::Kind::Sphere;
    double ex, ez;
    if (box) {
      p.half_extents = {rng.uniform(cfg.box_half_min, cfg.box_half_max),
                        rng.uniform(cfg.box_half_min, cfg.box_half_max),
                        rng.uniform(cfg.box_half_min, cfg.box_half_max)};
      ex = p.half_extents.x;
      ez = p.half_extents.z;
    } else {
      p.radius = rng.uniform(cfg.sphere_r_min, cfg.sphere_r_max);
      ex = ez = p.radius;
    }
    const double x = rng.uniform(cfg.place_x_min + ex, cfg.place_x_max - ex);
    const double z = rng.uniform(cfg.place_z_min + ez, cfg.place_z_max - ez);
    if (box)
      p.center = {x, scene.ground.height - p.half_extents.y, z};
    else
      p.center = {x, scene.ground.height - p.radius, z};
    // overlap check on axis-aligned bounds, against other placed objects
    bool ok = true;
    Vec3 lo, hi;
    p.aabb(lo, hi);
    const double vol = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
    for (size_t qi = first_placed; qi < scene.primitives.size(); ++qi) {
      const auto& q = scene.primitives[qi];
      Vec3 qlo, qhi;
      q.aabb(qlo, qhi);
      const double ox = std::max(0.0, std::min(hi.x, qhi.x) - std::max(lo.x, qlo.x));
      const double oy = std::max(0.0, std::min(hi.y, qhi.y) - std::max(lo.y, qlo.y));
      const double oz = std::max(0.0, std::min(hi.z, qhi.z) - std::max(lo.z, qlo.z));
      const double qvol = (qhi.x - qlo.x) * (qhi.y - qlo.y) * (qhi.z - qlo.z);
      if (ox * oy * oz > cfg.max_overlap_fraction * std::min(vol, qvol)) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (++rejections > 1000) fail_contract("generate_scene: placement failed after 1000 rejections");
      continue;
    }
    scene.primitives.push_back(p);
  }

  // thin colored floor tiles; allowed to lie underneath the objects above
  for (int i = 0; i < cfg.n_floor_tiles; ++i) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    p.sigma_solid = cfg.sigma_solid;
    p.albedo = kPalette[rng.uniform_int(kPalette.size())];
    p.half_extents = {rng.uniform(cfg.tile_half_min, cfg.tile_half_max), cfg.tile_thickness / 2.0,
                      rng.uniform(cfg.tile_half_min, cfg.tile_half_max)};
    const double x = rng.uniform(cfg.place_x_min + p.half_extents.x, cfg.place_x_max - p.half_extents.x);
    const double z = rng.uniform(cfg.place_z_min + p.half_extents.z, cfg.place_z_max - p.half_extents.z);
    p.center = {x, scene.ground.height - p.half_extents.y, z};
    scene.primitives.push_back(p);
  }
  return scene;
}

double gt_density(const SceneGT& scene, const Vec3& point) {
  double sigma = 0.0;
  if (point.y > scene.ground.height) sigma = scene.ground.sigma_solid;
  for (const auto& p : scene.primitives)
    if (p.contains(point)) sigma = std::max(sigma, p.sigma_solid);
  return sigma;
}

std::array<double, 3> gt_albedo(const SceneGT& scene, const Vec3& point) {
  for (const auto& p : scene.primitives)
    if (p.contains(point)) return p.albedo;
  if (point.y > scene.ground.height) return scene.ground.albedo;
  return {0, 0, 0};
}

std::vector<SolidSpan> solid_spans(const SceneGT& scene, const Ray& ray, double t_max) {
  struct Event {
    double t;
    int delta;  // +1 enter, -1 exit
    double sigma;
  };
  std::vector<Event> events;
  auto push = [&](Interval iv, double sigma) {
    const double a = std::max(iv.t0, 0.0), b = std::min(iv.t1, t_max);
    if (a < b) {
      events.push_back({a, +1, sigma});
      events.push_back({b, -1, sigma});
    }
  };
  for (const auto& p : scene.primitives) {
    Vec3 lo, hi;
    p.aabb(lo, hi);
    push(p.kind == Primitive::Kind::Box ? ray_box(ray, lo, hi) : ray_sphere(ray, p.center, p.radius),
         p.sigma_solid);
  }
  // ground half-space y > height
  {
    const double h = scene.ground.height;
    Interval iv{1, 0};
    if (ray.dir.y > 0)
      iv = {(h - ray.origin.y) / ray.dir.y, kInf};
    else if (ray.dir.y < 0)
      iv = {-kInf, (h - ray.origin.y) / ray.dir.y};
    else if (ray.origin.y > h)
      iv = {-kInf, kInf};
    push(iv, scene.ground.sigma_solid);
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });

  // sweep with a multiset of active densities; emit max-density spans
  std::vector<SolidSpan> spans;
  std::vector<double> active;
  double prev = 0.0;
  for (const auto& e : events) {
    if (!active.empty() && e.t > prev) {
      const double s = *std::max_element(active.begin(), active.end());
      if (!spans.empty() && spans.back().t1 == prev && spans.back().sigma == s)
        spans.back().t1 = e.t;
      else
        spans.push_back({prev, e.t, s});
    }
    if (e.delta > 0)
      active.push_back(e.sigma);
    else
      active.erase(std::find(active.begin(), active.end(), e.sigma));
    prev = e.t;
  }
  return spans;
}

double optical_depth(const SceneGT& scene, const Ray& ray, double t_len) {
  double tau = 0.0;
  for (const auto& s : solid_spans(scene, ray, t_len)) tau += s.sigma * (s.t1 - s.t0);
  return tau;
}

double first_hit(const SceneGT& scene, const Ray& ray, double t_max) {
  auto spans = solid_spans(scene, ray, t_max);
  return spans.empty() ? kInf : spans.front().t0;
}

Tensor render_gt_image(const SceneGT& scene, const CameraModel& cam, double step) {
  require(step > 0.0, "render_gt_image: step must be positive");
  const int h = cam.height, w = cam.width;
  std::vector<double> img(static_cast<size_t>(3) * h * w, 0.0);
  const Vec3 margin{1.0, 1.0, 1.0};
  const Vec3 blo = scene.bounds_min - margin, bhi = scene.bounds_max + margin;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const Ray ray = ray_through_pixel(cam, px, py);
      Interval iv = ray_box(ray, blo, bhi);
      const double t_end = std::min(iv.empty() ? 0.0 : iv.t1, 60.0);
      double trans = 1.0;
      double rgb[3] = {0, 0, 0};
      for (double t = step * 0.5; t < t_end; t += step) {
        const Vec3 p = ray.at(t);
        const double sigma = gt_density(scene, p);
        if (sigma <= 0.0) continue;
        const double alpha = 1.0 - std::exp(-sigma * step);
        const auto a = gt_albedo(scene, p);
        for (int c = 0; c < 3; ++c) rgb[c] += trans * alpha * a[static_cast<size_t>(c)];
        trans *= 1.0 - alpha;
        if (trans < 1e-5) break;
      }
      for (int c = 0; c < 3; ++c) img[(static_cast<size_t>(c) * h + py) * w + px] = rgb[c];
    }
  }
  return Tensor::from({3, h, w}, std::move(img));
}

bool visibility(const SceneGT& scene, const CameraModel& cam, const Vec3& point) {
  const Vec3 origin = cam.pose.t;
  const Vec3 diff = point - origin;
  const double len = diff.norm();
  const Vec3 pc = cam.pose.inverse().apply(point);
  require(pc.z > 0.0, "visibility: point is behind the camera");
  if (len < 1e-12) return true;
  Ray ray{origin, diff * (1.0 / len)};
  return optical_depth(scene, ray, len) < kLn2;
}

}  // namespace df
