#ifndef SEGSR_C_API_H
#define SEGSR_C_API_H

/* C interface to the SegSR core. All entry points return a status code;
 * SEGSR_OK on success. On failure, segsr_last_error() returns a thread-local
 * human-readable message valid until the next call on the same thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum segsr_status {
  SEGSR_OK = 0,
  SEGSR_ERR_VALIDATION = 1, /* bad input, config or precondition */
  SEGSR_ERR_RUNTIME = 2     /* I/O or computation failure */
} segsr_status;

/* Opaque run context: configuration plus derived schedules. */
typedef struct segsr_session segsr_session;

const char* segsr_version(void);
const char* segsr_last_error(void);

/* config_path may be NULL for the built-in desk-scale defaults. */
segsr_status segsr_session_open(const char* config_path, segsr_session** out);
void segsr_session_close(segsr_session* s);

/* Writes the session's normalized configuration JSON to the given path. */
segsr_status segsr_session_save_config(segsr_session* s, const char* path);

/* Builds the synthetic benchmark (hq/lq/mask PNG triples + manifest.json). */
segsr_status segsr_gen_data(const char* out_dir, int n_scenes, uint64_t seed, int k);

/* Runs one training stage. stage is one of: seg2img_pretrain, srdm_joint,
 * backbone_pretrain, segdm_train, imgaided_train, final_joint. */
segsr_status segsr_train(segsr_session* s, const char* stage, const char* data_dir,
                         const char* ckpt_dir, int resume);

/* Restores one image. input is a LQ PNG path or a dataset index (requires a
 * data path in the session config or data_dir non-NULL). mode is 1..5,
 * "coupled" or "zero". Writes <out_prefix>.png and <out_prefix>.mask.png,
 * plus <out_prefix>.traj.png when save_trajectory is nonzero. */
segsr_status segsr_sample(segsr_session* s, const char* ckpt_dir, const char* data_dir,
                          const char* input, const char* mode, uint64_t seed,
                          const char* out_prefix, int save_trajectory);

/* Ablation table over the validation split. modes_csv like "1,2,4,5,zero",
 * seeds_csv like "0,1,2". Writes a TSV to out_path and, if table_out is
 * non-NULL, stores a malloc'd formatted table (caller frees with
 * segsr_free). */
segsr_status segsr_eval(segsr_session* s, const char* ckpt_dir, const char* data_dir,
                        const char* modes_csv, const char* seeds_csv, const char* out_path,
                        char** table_out);

/* Oracle/property self-checks; returns SEGSR_OK when everything passes.
 * report_out (optional) receives a malloc'd text report. */
segsr_status segsr_selftest(char** report_out);

void segsr_free(char* p);

#ifdef __cplusplus
}
#endif

#endif /* SEGSR_C_API_H */
