/* Licensed under the Apache License 2.0 (see LICENSE file). */

/* C interface to the tsync library. Every call returns a status code; on
 * failure tsync_last_error() holds a message for the calling thread. */

#ifndef TSYNC_TSYNC_H
#define TSYNC_TSYNC_H

#include <stddef.h>

#if defined(_WIN32)
#define TSYNC_API __declspec(dllexport)
#else
#define TSYNC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsync_status {
  TSYNC_OK = 0,
  TSYNC_NO_MATCH = 1,
  TSYNC_ERR_DATA = 2, /* bad arguments, unreadable or malformed files */
  TSYNC_ERR_NUMERIC = 3
} tsync_status;

typedef struct tsync_config tsync_config;
typedef struct tsync_model tsync_model;

typedef void (*tsync_log_fn)(const char* line, void* user);

typedef struct tsync_metrics {
  double coverage;
  double hit_rate;
  double mean_offset;
  double median_offset;
  size_t predicted;
  size_t comparable;
} tsync_metrics;

enum {
  TSYNC_ALIGN_DUMP_MATRIX = 1u, /* write the raw coarse matrix (TSCM) */
  TSYNC_ALIGN_PGM = 2u,         /* write the raw coarse matrix as PGM */
  TSYNC_ALIGN_COARSE_ONLY = 4u  /* skip refinement and smoothing */
};

TSYNC_API const char* tsync_last_error(void);
TSYNC_API const char* tsync_version(void);

/* Progress lines go to the callback; NULL silences them. */
TSYNC_API void tsync_set_log(tsync_log_fn fn, void* user);

TSYNC_API tsync_config* tsync_config_new(void);
TSYNC_API void tsync_config_free(tsync_config* cfg);
TSYNC_API tsync_status tsync_config_load(tsync_config* cfg, const char* path);
TSYNC_API tsync_status tsync_config_set(tsync_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to len). */
TSYNC_API tsync_status tsync_config_get(const tsync_config* cfg, const char* key, char* buf, size_t len);
TSYNC_API tsync_status tsync_config_write(const tsync_config* cfg, const char* path);

TSYNC_API tsync_status tsync_model_load(const char* path, tsync_model** out);
TSYNC_API void tsync_model_free(tsync_model* model);
TSYNC_API size_t tsync_model_input_dim(const tsync_model* model);
TSYNC_API size_t tsync_model_output_dim(const tsync_model* model);
/* features: input_dim floats; out: output_dim floats on the unit sphere. */
TSYNC_API tsync_status tsync_model_embed(const tsync_model* model, const float* features, float* out);

TSYNC_API tsync_status tsync_generate(const tsync_config* cfg, const char* out_dir);

/* Reports and per-iteration label files go to report_dir (NULL: the
 * model's directory). */
TSYNC_API tsync_status tsync_train(const tsync_config* cfg, const char* corpus_dir, const char* model_path,
                                   const char* report_dir);

/* Writes tour_<x>_<y>.csv and, unless coarse-only, align_<x>_<y>.csv into
 * out_dir, where x and y are the journey file stems. TSYNC_NO_MATCH when
 * the tour is empty. */
TSYNC_API tsync_status tsync_align(const tsync_config* cfg, const char* model_path, const char* journey_x,
                                   const char* journey_y, const char* out_dir, unsigned flags);

/* Aligns every journey in the reference's class to the reference. Writes
 * align_<ref>_<id>.csv, tour_<ref>_<id>.csv and sync_report.json.
 * TSYNC_NO_MATCH when the reference matched no other journey. */
TSYNC_API tsync_status tsync_sync(const tsync_config* cfg, const char* model_path, const char* corpus_dir,
                                  const char* reference, const char* out_dir);

/* swap: the alignment's x is the ground truth's frame_b column. */
TSYNC_API tsync_status tsync_eval(const char* alignment_csv, const char* ground_truth_csv, size_t tolerance,
                                  int swap, tsync_metrics* out);

/* Coarse cost matrix of two journeys; decorrelated when requested. pgm_path
 * may be NULL. */
TSYNC_API tsync_status tsync_dump_matrix(const tsync_config* cfg, const char* model_path, const char* journey_x,
                                         const char* journey_y, int decorrelated, const char* matrix_path,
                                         const char* pgm_path);

#ifdef __cplusplus
}
#endif

#endif /* TSYNC_TSYNC_H */
