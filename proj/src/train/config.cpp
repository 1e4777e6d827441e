#include "train/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "core/error.hpp"

namespace df {

namespace {

struct Field {
  const char* name;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    require(used == v.size(), "config: bad number for '" + key + "': '" + v + "'");
    return r;
  } catch (const ContractViolation&) {
    throw;
  } catch (...) {
    fail_contract("config: bad number for '" + key + "': '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  require(d == std::floor(d), "config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_contract("config: '" + key + "' expects true/false, got '" + v + "'");
}

#define F_INT(field)                                                                      \
  Field {                                                                                 \
    #field, [](const Config& c) { return std::to_string(c.field); },                      \
        [](Config& c, const std::string& v) { c.field = to_int(#field, v); }              \
  }
#define F_DOUBLE(field)                                                                   \
  Field {                                                                                 \
    #field, [](const Config& c) { return fmt_double(c.field); },                          \
        [](Config& c, const std::string& v) { c.field = to_double(#field, v); }           \
  }
#define F_BOOL(field)                                                                     \
  Field {                                                                                 \
    #field, [](const Config& c) { return c.field ? std::string("true") : "false"; },      \
        [](Config& c, const std::string& v) { c.field = to_bool(#field, v); }             \
  }
#define F_STR(field)                                                                      \
  Field {                                                                                 \
    #field, [](const Config& c) { return c.field; },                                      \
        [](Config& c, const std::string& v) { c.field = v; }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      F_INT(image_width),      F_INT(image_height),    F_INT(n_train_scenes),  F_INT(n_test_scenes),
      F_INT(n_primitives_min), F_INT(n_primitives_max), F_DOUBLE(sigma_solid),  F_INT(n_cameras),
      F_INT(n_density_views),  F_DOUBLE(baseline_m),   F_DOUBLE(speed_mps),    F_DOUBLE(t_offset_min_s),
      F_DOUBLE(t_offset_max_s), F_DOUBLE(yaw_jitter_deg), F_DOUBLE(focal_px),  F_DOUBLE(gt_march_step),
      F_INT(n_backdrop_segments), F_INT(n_floor_tiles),
      F_INT(samples_per_ray),  F_DOUBLE(z_near),       F_DOUBLE(z_far),        F_STR(ray_mode),
      F_INT(batch_size),       F_INT(patches_per_item), F_INT(patch_size),     F_INT(steps_mv),
      F_INT(steps_kd),         F_DOUBLE(lr),           F_DOUBLE(lr_late),      F_DOUBLE(late_fraction),
      F_DOUBLE(lr_kd),         F_DOUBLE(view_dropout_rate), F_BOOL(aug_color), F_BOOL(aug_flip),
      F_DOUBLE(lambda_l1),     F_DOUBLE(lambda_ssim),  F_DOUBLE(lambda_eas),   F_STR(init_checkpoint),
      F_INT(grid_nx),          F_INT(grid_ny),         F_INT(grid_nz),         F_DOUBLE(ext_x_min),
      F_DOUBLE(ext_x_max),     F_DOUBLE(ext_y_min),    F_DOUBLE(ext_y_max),    F_DOUBLE(ext_z_min),
      F_DOUBLE(ext_z_max),     F_DOUBLE(tau_occ),      F_INT(eval_samples_per_ray),
  };
  return f;
}

#undef F_INT
#undef F_DOUBLE
#undef F_BOOL
#undef F_STR

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  }
  fail_contract("config: unknown key '" + key + "'");
}

void Config::load_file(const std::string& path) {
  for (const auto& [k, v] : read_kv(path)) set(k, v);
}

KvPairs Config::to_kv() const {
  KvPairs kv;
  for (const auto& f : fields()) kv.emplace_back(f.name, f.get(*this));
  return kv;
}

void Config::save(const std::string& path) const { write_kv(path, to_kv()); }

SceneGenConfig Config::scene_config() const {
  SceneGenConfig c;
  c.n_primitives_min = n_primitives_min;
  c.n_primitives_max = n_primitives_max;
  c.sigma_solid = sigma_solid;
  c.n_backdrop_segments = n_backdrop_segments;
  c.n_floor_tiles = n_floor_tiles;
  return c;
}

RigConfig Config::rig_config() const {
  RigConfig r;
  r.n_cameras = n_cameras;
  r.n_density_views = n_density_views;
  r.baseline_m = baseline_m;
  r.speed_mps = speed_mps;
  r.t_offset_min_s = t_offset_min_s;
  r.t_offset_max_s = t_offset_max_s;
  r.yaw_jitter_deg = yaw_jitter_deg;
  r.image_width = image_width;
  r.image_height = image_height;
  r.focal_px = focal_px;
  r.gt_march_step = gt_march_step;
  return r;
}

GridSpec Config::grid_spec() const {
  GridSpec g;
  g.nx = grid_nx;
  g.ny = grid_ny;
  g.nz = grid_nz;
  g.bounds = {ext_x_min, ext_y_min, ext_z_min, ext_x_max, ext_y_max, ext_z_max};
  return g;
}

SamplerConfig Config::sampler_config(bool jitter) const {
  SamplerConfig s;
  s.samples_per_ray = samples_per_ray;
  s.z_near = z_near;
  s.z_far = z_far;
  require(ray_mode == "inverse" || ray_mode == "linear", "config: ray_mode must be inverse or linear");
  s.mode = ray_mode == "linear" ? SampleMode::Linear : SampleMode::InverseDepth;
  s.jitter = jitter;
  return s;
}

LossConfig Config::loss_config() const {
  LossConfig l;
  l.lambda_l1 = lambda_l1;
  l.lambda_ssim = lambda_ssim;
  l.lambda_eas = lambda_eas;
  return l;
}

PositionalEncodingConfig Config::pe_config() const {
  PositionalEncodingConfig p;
  p.z_near = z_near;
  p.z_far = z_far;
  return p;
}

double Config::resolved_tau_occ() const {
  if (tau_occ > 0.0) return tau_occ;
  BitGrid g;
  g.nx = grid_nx;
  g.ny = grid_ny;
  g.nz = grid_nz;
  g.bounds = grid_spec().bounds;
  return std::log(2.0) / g.cell_edge();
}

}  // namespace df
