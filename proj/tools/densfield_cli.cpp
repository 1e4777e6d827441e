// Command-line front end over the densfield C API.
//
// Exit codes: 0 success, 1 contract/runtime failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "densfield.h"

namespace {

struct ConfigDeleter {
  void operator()(df_config* c) const { df_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<df_config, ConfigDeleter>;

int fail(df_status st) {
  std::fprintf(stderr, "error: %s\n", df_last_error());
  return st == DF_ERR_USAGE ? 2 : 1;
}

// --config file first, then --set overrides in order
int apply_config(df_config* cfg, const std::string& config_path, const std::vector<std::string>& sets) {
  if (!config_path.empty()) {
    const df_status st = df_config_load(cfg, config_path.c_str());
    if (st != DF_OK) return fail(st);
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    const df_status st = df_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != DF_OK) {
      std::fprintf(stderr, "error: %s\n", df_last_error());
      return 2;  // unknown or malformed keys are usage errors at the CLI
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"densfield: self-supervised multi-view density fields with distillation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, ckpt, ckpt_kd, mode, out_file;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  int scene_index = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file (key = value lines)");
    cmd->add_option("--set", sets, "override a config key, e.g. --set steps_mv=500")->take_all();
    cmd->add_option("--seed", seed, "run seed");
  };

  auto* gen = app.add_subcommand("gen-data", "synthesize train/test scenes with ground truth");
  add_common(gen);
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train_mv = app.add_subcommand("train-mv", "stage 1: self-supervised multi-view training");
  add_common(train_mv);
  train_mv->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  train_mv->add_option("--out", out_dir, "run directory for checkpoints and logs")->required();

  auto* distill = app.add_subcommand("distill", "stage 2: distill into the single-view head");
  add_common(distill);
  distill->add_option("--data", data_dir, "dataset directory")->required();
  distill->add_option("--ckpt", ckpt, "teacher checkpoint stem from train-mv")->required();
  distill->add_option("--out", out_dir, "run directory")->required();

  auto* eval_occ = app.add_subcommand("eval-occ", "occupancy metrics on the test split");
  add_common(eval_occ);
  eval_occ->add_option("--data", data_dir, "dataset directory")->required();
  eval_occ->add_option("--ckpt", ckpt, "mv checkpoint stem");
  eval_occ->add_option("--ckpt-kd", ckpt_kd, "kd checkpoint stem (for mode kd)");
  eval_occ->add_option("--mode", mode, "comma list of sv, kd, mv-<k>view, mv-nview")->default_val("mv-nview");
  eval_occ->add_option("--out", out_dir, "report directory")->required();

  auto* eval_depth = app.add_subcommand("eval-depth", "depth metrics on the test split");
  add_common(eval_depth);
  eval_depth->add_option("--data", data_dir, "dataset directory")->required();
  eval_depth->add_option("--ckpt", ckpt, "mv checkpoint stem");
  eval_depth->add_option("--ckpt-kd", ckpt_kd, "kd checkpoint stem (for mode kd)");
  eval_depth->add_option("--mode", mode, "comma list of sv, kd, mv-<k>view, mv-nview")->default_val("mv-nview");
  eval_depth->add_option("--out", out_dir, "report directory")->required();

  auto* profile = app.add_subcommand("render-profile", "top-down density profile of a test scene");
  add_common(profile);
  profile->add_option("--data", data_dir, "dataset directory")->required();
  profile->add_option("--ckpt", ckpt, "checkpoint stem (omit for --mode gt)");
  profile->add_option("--mode", mode, "gt, sv, kd, mv-<k>view, or mv-nview")->default_val("gt");
  profile->add_option("--scene", scene_index, "test scene index")->default_val(0);
  profile->add_option("--out", out_file, "output PPM path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  ConfigPtr cfg(df_config_create());
  if (!cfg) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  if (int rc = apply_config(cfg.get(), config_path, sets); rc != 0) return rc;

  df_status st = DF_OK;
  if (gen->parsed()) {
    st = df_generate_dataset(cfg.get(), seed, out_dir.c_str());
  } else if (train_mv->parsed()) {
    st = df_train(cfg.get(), data_dir.c_str(), "mv", seed, out_dir.c_str());
  } else if (distill->parsed()) {
    if (df_status cs = df_config_set(cfg.get(), "init_checkpoint", ckpt.c_str()); cs != DF_OK) return fail(cs);
    st = df_train(cfg.get(), data_dir.c_str(), "kd", seed, out_dir.c_str());
  } else if (eval_occ->parsed()) {
    st = df_eval_occupancy(cfg.get(), data_dir.c_str(), ckpt.empty() ? nullptr : ckpt.c_str(),
                           ckpt_kd.empty() ? nullptr : ckpt_kd.c_str(), mode.c_str(), out_dir.c_str());
  } else if (eval_depth->parsed()) {
    st = df_eval_depth(cfg.get(), data_dir.c_str(), ckpt.empty() ? nullptr : ckpt.c_str(),
                       ckpt_kd.empty() ? nullptr : ckpt_kd.c_str(), mode.c_str(), out_dir.c_str());
  } else if (profile->parsed()) {
    st = df_render_profile(cfg.get(), data_dir.c_str(), ckpt.empty() ? nullptr : ckpt.c_str(), mode.c_str(),
                           scene_index, out_file.c_str());
  }
  return st == DF_OK ? 0 : fail(st);
}
