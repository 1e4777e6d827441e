#include "densfield.h"

#include <filesystem>
#include <sstream>
#include <string>

#include "eval/occupancy.hpp"
#include "synth/dataset_io.hpp"
#include "train/config.hpp"
#include "train/trainer.hpp"

namespace {

thread_local std::string g_last_error;

template <class F>
df_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return DF_OK;
  } catch (const df::ContractViolation& e) {
    g_last_error = e.what();
    return DF_ERR_CONTRACT;
  } catch (const df::IoError& e) {
    g_last_error = e.what();
    return DF_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DF_ERR_CONTRACT;
  }
}

df_status usage_error(const std::string& msg) {
  g_last_error = msg;
  return DF_ERR_USAGE;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void write_snapshot(const df::Config& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  cfg.save(dir + "/resolved.cfg");
}

// train/test scene seeds are decorrelated streams of the run seed
df::Dataset build_split(const df::Config& cfg, uint64_t seed, int n_scenes, uint64_t salt) {
  df::Dataset ds;
  for (int s = 0; s < n_scenes; ++s) {
    const uint64_t scene_seed = df::Rng(seed ^ salt).fork(static_cast<uint64_t>(s)).next_u64();
    df::DatasetItem item;
    item.scene = df::generate_scene(scene_seed, cfg.scene_config());
    item.frames = df::build_frameset(item.scene, cfg.rig_config(), scene_seed ^ 0xF0F0F0F0ull);
    item.occupancy = df::occupancy_grid_from_scene(item.scene, cfg.grid_spec());
    item.visibility = df::visibility_grid_from_scene(
        item.scene, item.frames.frames[static_cast<size_t>(item.frames.density_views[0])].cam, cfg.grid_spec());
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

extern "C" {

struct df_config {
  df::Config cfg;
  std::string scratch;
};

const char* df_last_error(void) { return g_last_error.c_str(); }

df_config* df_config_create(void) {
  try {
    return new df_config();
  } catch (...) {
    return nullptr;
  }
}

void df_config_destroy(df_config* cfg) { delete cfg; }

df_status df_config_load(df_config* cfg, const char* path) {
  if (!cfg || !path) return usage_error("df_config_load: null argument");
  return guarded([&] { cfg->cfg.load_file(path); });
}

df_status df_config_set(df_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return usage_error("df_config_set: null argument");
  return guarded([&] { cfg->cfg.set(key, value); });
}

const char* df_config_get(df_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  for (const auto& [k, v] : cfg->cfg.to_kv()) {
    if (k == key) {
      cfg->scratch = v;
      return cfg->scratch.c_str();
    }
  }
  return nullptr;
}

df_status df_config_save(const df_config* cfg, const char* path) {
  if (!cfg || !path) return usage_error("df_config_save: null argument");
  return guarded([&] { cfg->cfg.save(path); });
}

df_status df_generate_dataset(const df_config* cfg, uint64_t seed, const char* out_dir) {
  if (!cfg || !out_dir) return usage_error("df_generate_dataset: null argument");
  return guarded([&] {
    const df::Config& c = cfg->cfg;
    df::Dataset train = build_split(c, seed, c.n_train_scenes, 0x7261494Eull);
    df::Dataset test = build_split(c, seed, c.n_test_scenes, 0x7465535Dull);
    df::write_dataset(std::string(out_dir) + "/train", train);
    df::write_dataset(std::string(out_dir) + "/test", test);
    write_snapshot(c, out_dir);
  });
}

df_status df_train(const df_config* cfg, const char* dataset_dir, const char* stage, uint64_t seed,
                   const char* out_dir) {
  if (!cfg || !dataset_dir || !stage || !out_dir) return usage_error("df_train: null argument");
  const std::string stage_s = stage;
  if (stage_s != "mv" && stage_s != "kd")
    return usage_error("df_train: stage must be 'mv' or 'kd', got '" + stage_s + "'");
  return guarded([&] {
    df::run_training(dataset_dir, cfg->cfg, stage_s, seed, out_dir);
    write_snapshot(cfg->cfg, out_dir);
  });
}

namespace {

df_status run_eval(const df_config* cfg, const char* dataset_dir, const char* ckpt_mv_stem,
                   const char* ckpt_kd_stem, const char* modes_csv, const char* out_dir, bool occupancy) {
  if (!cfg || !dataset_dir || !modes_csv || !out_dir) return usage_error("df_eval: null argument");
  const auto modes = split_csv(modes_csv);
  if (modes.empty()) return usage_error("df_eval: empty mode list");
  for (const auto& m : modes) {
    if (m == "kd") {
      if (!ckpt_kd_stem) return usage_error("df_eval: mode 'kd' requires a kd checkpoint");
    } else if (!ckpt_mv_stem) {
      return usage_error("df_eval: mode '" + m + "' requires an mv checkpoint");
    }
    try {
      df::parse_eval_mode(m);
    } catch (const std::exception& e) {
      return usage_error(e.what());
    }
  }
  return guarded([&] {
    df::Dataset test = df::read_dataset(std::string(dataset_dir) + "/test");
    std::filesystem::create_directories(out_dir);
    df::Checkpoint mv, kd;
    bool mv_loaded = false, kd_loaded = false;
    std::vector<df::MetricsReport> reports;
    for (const auto& m : modes) {
      const bool is_kd = m == "kd";
      df::Checkpoint& ck = is_kd ? kd : mv;
      bool& loaded = is_kd ? kd_loaded : mv_loaded;
      if (!loaded) {
        ck = df::load_checkpoint(is_kd ? ckpt_kd_stem : ckpt_mv_stem);
        loaded = true;
      }
      if (occupancy) {
        reports.push_back(df::evaluate_occupancy(ck, test, cfg->cfg, m));
        // predicted grid of the first test scene, for inspection
        df::OccupancyPrediction pred = df::predict_occupancy_grid(ck, test.items[0], cfg->cfg, m);
        df::write_ogrd(std::string(out_dir) + "/pred_" + m + "_scene0000.ogrd", pred.bits);
      } else {
        reports.push_back(df::evaluate_depth(ck, test, cfg->cfg, m));
      }
    }
    df::write_report(reports, std::string(out_dir) + (occupancy ? "/occupancy_report.csv" : "/depth_report.csv"));
    write_snapshot(cfg->cfg, out_dir);
  });
}

}  // namespace

df_status df_eval_occupancy(const df_config* cfg, const char* dataset_dir, const char* ckpt_mv_stem,
                            const char* ckpt_kd_stem, const char* modes_csv, const char* out_dir) {
  return run_eval(cfg, dataset_dir, ckpt_mv_stem, ckpt_kd_stem, modes_csv, out_dir, true);
}

df_status df_eval_depth(const df_config* cfg, const char* dataset_dir, const char* ckpt_mv_stem,
                        const char* ckpt_kd_stem, const char* modes_csv, const char* out_dir) {
  return run_eval(cfg, dataset_dir, ckpt_mv_stem, ckpt_kd_stem, modes_csv, out_dir, false);
}

df_status df_render_profile(const df_config* cfg, const char* dataset_dir, const char* ckpt_stem,
                            const char* mode, int scene_index, const char* out_ppm) {
  if (!cfg || !dataset_dir || !mode || !out_ppm) return usage_error("df_render_profile: null argument");
  const std::string mode_s = mode;
  if (mode_s != "gt") {
    if (!ckpt_stem) return usage_error("df_render_profile: mode '" + mode_s + "' requires a checkpoint");
    try {
      df::parse_eval_mode(mode_s);
    } catch (const std::exception& e) {
      return usage_error(e.what());
    }
  }
  return guarded([&] {
    df::Dataset test = df::read_dataset(std::string(dataset_dir) + "/test");
    df::require(scene_index >= 0 && scene_index < static_cast<int>(test.items.size()),
                "df_render_profile: scene index out of range");
    const df::DatasetItem& item = test.items[static_cast<size_t>(scene_index)];
    const df::GridSpec spec = cfg->cfg.grid_spec();
    std::vector<double> sigma;
    if (mode_s == "gt") {
      df::RenderContext ctx;
      ctx.density_oracle = [&](const df::Vec3& p) { return df::gt_density(item.scene, p); };
      sigma = df::predict_occupancy_grid(ctx, spec, cfg->cfg.resolved_tau_occ()).sigma;
    } else {
      df::Checkpoint ck = df::load_checkpoint(ckpt_stem);
      sigma = df::predict_occupancy_grid(ck, item, cfg->cfg, mode_s).sigma;
    }
    df::render_profile(sigma, spec, out_ppm);
    cfg->cfg.save(std::string(out_ppm) + ".cfg");
  });
}

}  // extern "C"
