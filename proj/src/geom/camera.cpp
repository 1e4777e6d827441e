#include "geom/camera.hpp"

#include <cstdio>
#include <sstream>

#include "core/error.hpp"

namespace df {

void CameraModel::validate() const {
  require(fx > 0 && fy > 0, "camera: focal lengths must be positive");
  require(width >= 8 && height >= 8, "camera: image must be at least 8x8");
  // orthonormality of the rotation block
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double d = pose.R.col(i).dot(pose.R.col(j)) - (i == j ? 1.0 : 0.0);
      require(std::fabs(d) < 1e-9, "camera: rotation block is not orthonormal");
    }
}

CameraModel CameraModel::flipped_horizontal() const {
  CameraModel out = *this;
  out.cx = static_cast<double>(width - 1) - cx;
  // world mirror S=diag(-1,1,1) composed with a camera-frame x mirror:
  // R' = S R F, t' = S t. det stays +1.
  Mat3 R = pose.R;
  Mat3 Rp = R;
  Rp.m = {R.m[0], -R.m[1], -R.m[2], -R.m[3], R.m[4], R.m[5], -R.m[6], R.m[7], R.m[8]};
  out.pose.R = Rp;
  out.pose.t = {-pose.t.x, pose.t.y, pose.t.z};
  return out;
}

Projection project(const CameraModel& cam, const Vec3& point) {
  const Vec3 pc = cam.pose.inverse().apply(point);
  Projection pr;
  pr.depth = pc.z;
  if (pc.z <= 0.0) return pr;  // behind the camera
  pr.u = cam.fx * (pc.x / pc.z) + cam.cx;
  pr.v = cam.fy * (pc.y / pc.z) + cam.cy;
  pr.valid = pr.u >= 0.0 && pr.u <= cam.width - 1 && pr.v >= 0.0 && pr.v <= cam.height - 1;
  return pr;
}

Ray ray_through_pixel(const CameraModel& cam, double u, double v) {
  require(u >= 0.0 && u <= cam.width - 1 && v >= 0.0 && v <= cam.height - 1,
          "ray_through_pixel: pixel (" + std::to_string(u) + "," + std::to_string(v) + ") outside image");
  const Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  Ray r;
  r.origin = cam.pose.t;
  r.dir = (cam.pose.R * dir_cam).normalized();
  return r;
}

RaySamples sample_ray_points(const Ray& ray, const SamplerConfig& cfg, Rng* rng) {
  const int m = cfg.samples_per_ray;
  require(m >= 2, "sample_ray_points: need at least 2 samples");
  require(cfg.z_near > 0 && cfg.z_far > cfg.z_near, "sample_ray_points: need 0 < z_near < z_far");
  RaySamples s;
  s.depths.resize(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double f = cfg.jitter && rng ? rng->uniform() : 0.5;
    if (cfg.mode == SampleMode::Linear) {
      const double lo = cfg.z_near + (cfg.z_far - cfg.z_near) * i / m;
      const double hi = cfg.z_near + (cfg.z_far - cfg.z_near) * (i + 1) / m;
      s.depths[static_cast<size_t>(i)] = lo + f * (hi - lo);
    } else {
      const double s_lo = 1.0 / cfg.z_near + (1.0 / cfg.z_far - 1.0 / cfg.z_near) * i / m;
      const double s_hi = 1.0 / cfg.z_near + (1.0 / cfg.z_far - 1.0 / cfg.z_near) * (i + 1) / m;
      s.depths[static_cast<size_t>(i)] = 1.0 / (s_lo + f * (s_hi - s_lo));
    }
  }
  s.spacings.resize(static_cast<size_t>(m));
  for (int i = 0; i + 1 < m; ++i) s.spacings[static_cast<size_t>(i)] = s.depths[static_cast<size_t>(i + 1)] - s.depths[static_cast<size_t>(i)];
  s.spacings[static_cast<size_t>(m - 1)] = (s.depths[static_cast<size_t>(m - 1)] - s.depths[0]) / (m - 1);
  s.points.resize(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) s.points[static_cast<size_t>(i)] = ray.at(s.depths[static_cast<size_t>(i)]);
  return s;
}

ViewMask frustum_mask(const std::vector<CameraModel>& cams, const Vec3& point) {
  require(!cams.empty(), "frustum_mask: empty camera list");
  ViewMask m;
  m.bits.reserve(cams.size());
  for (const auto& c : cams) m.bits.push_back(project(c, point).valid ? 1 : 0);
  return m;
}

std::string camera_to_text(const CameraModel& cam) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %d %d\n", cam.fx, cam.fy, cam.cx, cam.cy,
                cam.width, cam.height);
  out += buf;
  const Mat3& R = cam.pose.R;
  const Vec3& t = cam.pose.t;
  const double rows[4][4] = {{R.m[0], R.m[1], R.m[2], t.x},
                             {R.m[3], R.m[4], R.m[5], t.y},
                             {R.m[6], R.m[7], R.m[8], t.z},
                             {0, 0, 0, 1}};
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", r[0], r[1], r[2], r[3]);
    out += buf;
  }
  return out;
}

CameraModel camera_from_text(const std::string& text, const std::string& context) {
  std::istringstream is(text);
  CameraModel cam;
  double w = 0, h = 0;
  if (!(is >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> w >> h))
    throw IoError(context + ": malformed camera header line");
  cam.width = static_cast<int>(w);
  cam.height = static_cast<int>(h);
  double rows[16];
  for (double& v : rows)
    if (!(is >> v)) throw IoError(context + ": malformed camera pose matrix");
  cam.pose.R.m = {rows[0], rows[1], rows[2], rows[4], rows[5], rows[6], rows[8], rows[9], rows[10]};
  cam.pose.t = {rows[3], rows[7], rows[11]};
  cam.validate();
  return cam;
}

}  // namespace df
