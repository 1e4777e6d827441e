#include "synth/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace df {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& context) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw IoError(context + ": not a number: '" + tok + "'");
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s, const std::string& context) {
  std::vector<int> out;
  for (double v : parse_doubles(s, context)) out.push_back(static_cast<int>(v));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

const std::string& kv_get(const std::map<std::string, std::string>& m, const std::string& key,
                          const std::string& context) {
  auto it = m.find(key);
  if (it == m.end()) throw IoError(context + ": missing key '" + key + "'");
  return it->second;
}

void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError(path + ": truncated at byte " + std::to_string(is.tellg()));
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
         static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, "write_ppm: image must be [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  const int64_t plane = static_cast<int64_t>(h) * w;
  const double* d = image.data();
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(std::max(d[c * plane + static_cast<int64_t>(y) * w + x], 0.0), 1.0);
        row[static_cast<size_t>(x * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError(path + ": not a P6 image (byte 0)");
  int w = 0, h = 0, maxval = 0;
  if (!(is >> w >> h >> maxval) || w <= 0 || h <= 0)
    throw IoError(path + ": malformed header at byte " + std::to_string(is.tellg()));
  if (maxval != 255) throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IoError(path + ": truncated pixel data at byte " + std::to_string(is.tellg()));
  std::vector<double> img(raw.size());
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img[static_cast<size_t>(c * plane + static_cast<int64_t>(y) * w + x)] =
            raw[static_cast<size_t>((static_cast<int64_t>(y) * w + x) * 3 + c)] / 255.0;
  return Tensor::from({3, h, w}, std::move(img));
}

void write_ogrd(const std::string& path, const BitGrid& grid) {
  require(static_cast<int64_t>(grid.bits.size()) == grid.size(), "write_ogrd: bit count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("OGRD1", 5);
  put_u32le(os, static_cast<uint32_t>(grid.nx));
  put_u32le(os, static_cast<uint32_t>(grid.ny));
  put_u32le(os, static_cast<uint32_t>(grid.nz));
  os.write(reinterpret_cast<const char*>(grid.bounds.data()), 6 * sizeof(double));
  os.write(reinterpret_cast<const char*>(grid.bits.data()), static_cast<std::streamsize>(grid.bits.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

BitGrid read_ogrd(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "OGRD1", 5) != 0) throw IoError(path + ": bad magic at byte 0");
  BitGrid g;
  g.nx = static_cast<int>(read_u32le(is, path));
  g.ny = static_cast<int>(read_u32le(is, path));
  g.nz = static_cast<int>(read_u32le(is, path));
  if (g.nx <= 0 || g.ny <= 0 || g.nz <= 0 || g.size() > (1ll << 32))
    throw IoError(path + ": implausible grid extents");
  is.read(reinterpret_cast<char*>(g.bounds.data()), 6 * sizeof(double));
  if (!is) throw IoError(path + ": truncated bounds at byte " + std::to_string(is.tellg()));
  g.bits.resize(static_cast<size_t>(g.size()));
  is.read(reinterpret_cast<char*>(g.bits.data()), static_cast<std::streamsize>(g.bits.size()));
  if (!is) throw IoError(path + ": truncated grid data at byte " + std::to_string(is.tellg()));
  return g;
}

void write_kv(const std::string& path, const KvPairs& kv) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  if (!os) throw IoError("write failed for '" + path + "'");
}

KvPairs read_kv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  KvPairs kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

std::map<std::string, std::string> kv_map(const KvPairs& kv) {
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : kv) m[k] = v;
  return m;
}

KvPairs scene_to_kv(const SceneGT& scene) {
  KvPairs kv;
  kv.emplace_back("seed", std::to_string(scene.seed));
  kv.emplace_back("ground_height", fmt_double(scene.ground.height));
  kv.emplace_back("ground_albedo", fmt_double(scene.ground.albedo[0]) + "," + fmt_double(scene.ground.albedo[1]) +
                                       "," + fmt_double(scene.ground.albedo[2]));
  kv.emplace_back("ground_sigma", fmt_double(scene.ground.sigma_solid));
  kv.emplace_back("bounds_min",
                  fmt_double(scene.bounds_min.x) + "," + fmt_double(scene.bounds_min.y) + "," + fmt_double(scene.bounds_min.z));
  kv.emplace_back("bounds_max",
                  fmt_double(scene.bounds_max.x) + "," + fmt_double(scene.bounds_max.y) + "," + fmt_double(scene.bounds_max.z));
  kv.emplace_back("n_primitives", std::to_string(scene.primitives.size()));
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    std::string v = p.kind == Primitive::Kind::Box ? "box" : "sphere";
    v += "," + fmt_double(p.center.x) + "," + fmt_double(p.center.y) + "," + fmt_double(p.center.z);
    if (p.kind == Primitive::Kind::Box)
      v += "," + fmt_double(p.half_extents.x) + "," + fmt_double(p.half_extents.y) + "," + fmt_double(p.half_extents.z);
    else
      v += "," + fmt_double(p.radius);
    v += "," + fmt_double(p.albedo[0]) + "," + fmt_double(p.albedo[1]) + "," + fmt_double(p.albedo[2]);
    v += "," + fmt_double(p.sigma_solid);
    kv.emplace_back("primitive_" + std::to_string(i), v);
  }
  return kv;
}

SceneGT scene_from_kv(const KvPairs& kv, const std::string& context) {
  auto m = kv_map(kv);
  SceneGT s;
  s.seed = std::stoull(kv_get(m, "seed", context));
  s.ground.height = std::stod(kv_get(m, "ground_height", context));
  auto ga = parse_doubles(kv_get(m, "ground_albedo", context), context);
  if (ga.size() != 3) throw IoError(context + ": ground_albedo needs 3 values");
  s.ground.albedo = {ga[0], ga[1], ga[2]};
  s.ground.sigma_solid = std::stod(kv_get(m, "ground_sigma", context));
  auto bmin = parse_doubles(kv_get(m, "bounds_min", context), context);
  auto bmax = parse_doubles(kv_get(m, "bounds_max", context), context);
  if (bmin.size() != 3 || bmax.size() != 3) throw IoError(context + ": bounds need 3 values");
  s.bounds_min = {bmin[0], bmin[1], bmin[2]};
  s.bounds_max = {bmax[0], bmax[1], bmax[2]};
  const int n = std::stoi(kv_get(m, "n_primitives", context));
  for (int i = 0; i < n; ++i) {
    const std::string key = "primitive_" + std::to_string(i);
    std::string v = kv_get(m, key, context);
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw IoError(context + ": malformed " + key);
    const std::string kind = v.substr(0, comma);
    auto nums = parse_doubles(v.substr(comma + 1), context + ":" + key);
    Primitive p;
    if (kind == "box") {
      if (nums.size() != 10) throw IoError(context + ": " + key + " needs 10 numbers");
      p.kind = Primitive::Kind::Box;
      p.center = {nums[0], nums[1], nums[2]};
      p.half_extents = {nums[3], nums[4], nums[5]};
      p.albedo = {nums[6], nums[7], nums[8]};
      p.sigma_solid = nums[9];
    } else if (kind == "sphere") {
      if (nums.size() != 8) throw IoError(context + ": " + key + " needs 8 numbers");
      p.kind = Primitive::Kind::Sphere;
      p.center = {nums[0], nums[1], nums[2]};
      p.radius = nums[3];
      p.albedo = {nums[4], nums[5], nums[6]};
      p.sigma_solid = nums[7];
    } else {
      throw IoError(context + ": unknown primitive kind '" + kind + "'");
    }
    s.primitives.push_back(p);
  }
  return s;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  KvPairs manifest;
  manifest.emplace_back("n_scenes", std::to_string(ds.items.size()));
  for (const auto& [k, v] : ds.manifest) manifest.emplace_back(k, v);
  write_kv(dir + "/dataset.cfg", manifest);

  char name[64];
  for (size_t si = 0; si < ds.items.size(); ++si) {
    const DatasetItem& item = ds.items[si];
    std::snprintf(name, sizeof name, "scene_%04zu", si);
    const std::string sdir = dir + "/" + name;
    fs::create_directories(sdir);

    KvPairs meta = scene_to_kv(item.scene);
    meta.emplace_back("n_frames", std::to_string(item.frames.frames.size()));
    std::vector<int> stamps;
    for (const auto& f : item.frames.frames) stamps.push_back(f.timestamp);
    meta.emplace_back("timestamps", join_ints(stamps));
    meta.emplace_back("roles_density", join_ints(item.frames.density_views));
    meta.emplace_back("roles_loss", join_ints(item.frames.loss_views));
    meta.emplace_back("roles_render", join_ints(item.frames.render_views));
    write_kv(sdir + "/meta.cfg", meta);

    for (size_t fi = 0; fi < item.frames.frames.size(); ++fi) {
      std::snprintf(name, sizeof name, "cam_%02zu.txt", fi);
      std::ofstream cam(sdir + "/" + name, std::ios::trunc);
      if (!cam) throw IoError("cannot open '" + sdir + "/" + name + "' for writing");
      cam << camera_to_text(item.frames.frames[fi].cam);
      std::snprintf(name, sizeof name, "img_%02zu.ppm", fi);
      write_ppm(sdir + "/" + name, item.frames.frames[fi].image);
    }
    write_ogrd(sdir + "/occupancy.ogrd", item.occupancy);
    write_ogrd(sdir + "/visibility.ogrd", item.visibility);
  }
}

Dataset read_dataset(const std::string& dir) {
  Dataset ds;
  KvPairs all = read_kv(dir + "/dataset.cfg");
  auto m = kv_map(all);
  for (auto& [k, v] : all)
    if (k != "n_scenes") ds.manifest.emplace_back(k, v);
  const int n = std::stoi(kv_get(m, "n_scenes", dir + "/dataset.cfg"));
  char name[64];
  for (int si = 0; si < n; ++si) {
    std::snprintf(name, sizeof name, "scene_%04d", si);
    const std::string sdir = dir + "/" + name;
    DatasetItem item;
    KvPairs meta = read_kv(sdir + "/meta.cfg");
    auto mm = kv_map(meta);
    item.scene = scene_from_kv(meta, sdir + "/meta.cfg");
    const int nf = std::stoi(kv_get(mm, "n_frames", sdir + "/meta.cfg"));
    auto stamps = parse_ints(kv_get(mm, "timestamps", sdir + "/meta.cfg"), sdir);
    if (static_cast<int>(stamps.size()) != nf) throw IoError(sdir + "/meta.cfg: timestamps count mismatch");
    for (int fi = 0; fi < nf; ++fi) {
      Frame f;
      std::snprintf(name, sizeof name, "cam_%02d.txt", fi);
      std::ifstream cam(sdir + "/" + name);
      if (!cam) throw IoError("cannot open '" + sdir + "/" + name + "'");
      std::stringstream ss;
      ss << cam.rdbuf();
      f.cam = camera_from_text(ss.str(), sdir + "/" + name);
      std::snprintf(name, sizeof name, "img_%02d.ppm", fi);
      f.image = read_ppm(sdir + "/" + name);
      f.timestamp = stamps[static_cast<size_t>(fi)];
      item.frames.frames.push_back(std::move(f));
    }
    item.frames.density_views = parse_ints(kv_get(mm, "roles_density", sdir), sdir);
    item.frames.loss_views = parse_ints(kv_get(mm, "roles_loss", sdir), sdir);
    item.frames.render_views = parse_ints(kv_get(mm, "roles_render", sdir), sdir);
    item.frames.validate_roles();
    item.occupancy = read_ogrd(sdir + "/occupancy.ogrd");
    item.visibility = read_ogrd(sdir + "/visibility.ogrd");
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace df
