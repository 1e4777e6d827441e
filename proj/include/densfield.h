/* densfield: multi-view density-field training and evaluation pipeline.
 *
 * C interface over the core library. All objects are opaque handles;
 * every call returns DF_OK or an error code, with a thread-local
 * message available through df_last_error(). Strings are UTF-8.
 */
#ifndef DENSFIELD_H
#define DENSFIELD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum df_status {
  DF_OK = 0,
  DF_ERR_CONTRACT = 1, /* precondition or invariant violated */
  DF_ERR_USAGE = 2,    /* malformed request (unknown key, bad mode) */
  DF_ERR_IO = 3        /* filesystem or parse failure */
} df_status;

/* Message from the most recent failing call on this thread. Never NULL. */
const char* df_last_error(void);

/* ---- configuration ------------------------------------------------- */

typedef struct df_config df_config;

df_config* df_config_create(void); /* defaults; NULL on allocation failure */
void df_config_destroy(df_config* cfg);
df_status df_config_load(df_config* cfg, const char* path);
df_status df_config_set(df_config* cfg, const char* key, const char* value);
/* Value for a known key, or NULL (the string lives until the next call
 * on the same config). */
const char* df_config_get(df_config* cfg, const char* key);
df_status df_config_save(const df_config* cfg, const char* path);

/* ---- pipeline ------------------------------------------------------ */
/* Every artifact-producing call writes a resolved-config snapshot next
 * to its outputs. Dataset directories hold train/ and test/ splits. */

/* Synthesizes n_train_scenes + n_test_scenes scenes with images, camera
 * files, and ground-truth grids under out_dir. */
df_status df_generate_dataset(const df_config* cfg, uint64_t seed, const char* out_dir);

/* stage "mv": self-supervised multi-view training from scratch.
 * stage "kd": distillation into the single-view head; the teacher
 * checkpoint stem comes from the init_checkpoint config key. */
df_status df_train(const df_config* cfg, const char* dataset_dir, const char* stage, uint64_t seed,
                   const char* out_dir);

/* modes_csv: comma-separated subset of sv, kd, mv-<k>view, mv-nview.
 * "kd" rows read ckpt_kd_stem; all others read ckpt_mv_stem. Writes
 * occupancy_report.csv (or depth_report.csv) under out_dir. */
df_status df_eval_occupancy(const df_config* cfg, const char* dataset_dir, const char* ckpt_mv_stem,
                            const char* ckpt_kd_stem, const char* modes_csv, const char* out_dir);
df_status df_eval_depth(const df_config* cfg, const char* dataset_dir, const char* ckpt_mv_stem,
                        const char* ckpt_kd_stem, const char* modes_csv, const char* out_dir);

/* Top-down density profile of one test scene as a PPM image. mode "gt"
 * renders the analytic ground truth and needs no checkpoint. */
df_status df_render_profile(const df_config* cfg, const char* dataset_dir, const char* ckpt_stem,
                            const char* mode, int scene_index, const char* out_ppm);

#ifdef __cplusplus
}
#endif

#endif /* DENSFIELD_H */
