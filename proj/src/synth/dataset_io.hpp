#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "synth/frameset.hpp"
#include "synth/grid.hpp"

namespace df {

// binary PPM, P6 maxval 255; tensor layout [3,H,W] in [0,1]
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// grid file: magic "OGRD1", u32 LE nx ny nz, 6 float64 LE bounds
// (min xyz, max xyz), then nx*ny*nz bytes in x-fastest order
void write_ogrd(const std::string& path, const BitGrid& grid);
BitGrid read_ogrd(const std::string& path);

// UTF-8 `key = value` lines; '#' starts a comment; lists are
// comma-separated. Order-preserving.
using KvPairs = std::vector<std::pair<std::string, std::string>>;
void write_kv(const std::string& path, const KvPairs& kv);
KvPairs read_kv(const std::string& path);
std::map<std::string, std::string> kv_map(const KvPairs& kv);

// One synthetic scene with its rendered frames and ground-truth grids.
struct DatasetItem {
  SceneGT scene;
  FrameSet frames;
  BitGrid occupancy;   // scene occupancy over the evaluation grid
  BitGrid visibility;  // visibility from the reference density camera
};

struct Dataset {
  std::vector<DatasetItem> items;
  KvPairs manifest;  // echoed configuration, free-form
};

// Layout: <dir>/dataset.cfg plus per-scene directories scene_NNNN/ with
// meta.cfg, cam_NN.txt, img_NN.ppm, occupancy.ogrd, visibility.ogrd.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

// scene <-> key-value serialization (lossless: %.17g)
KvPairs scene_to_kv(const SceneGT& scene);
SceneGT scene_from_kv(const KvPairs& kv, const std::string& context);

}  // namespace df
