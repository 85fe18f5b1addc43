/*
 * Copyright 2026 The fractal-vit-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the fractal-vit-lab core. Objects are opaque handles owned
 * by the caller and released with the matching *_destroy function. Every
 * fallible call returns an fvit_status; on failure fvit_last_error() holds a
 * message for the calling thread until its next failing call.
 *
 * Text results use caller buffers: *needed always receives the size
 * including the terminating NUL, and FVIT_ERR_BUFFER is returned when cap is
 * too small (pass buf = NULL, cap = 0 to query). */

#ifndef FVIT_FVIT_H_
#define FVIT_FVIT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FVIT_BUILDING_LIBRARY)
#    define FVIT_API __declspec(dllexport)
#  else
#    define FVIT_API __declspec(dllimport)
#  endif
#else
#  define FVIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fvit_status {
  FVIT_OK = 0,
  FVIT_ERR_INTERNAL = 1,
  FVIT_ERR_CONFIG = 2,   /* bad geometry, unknown names, inconsistent settings */
  FVIT_ERR_CONTRACT = 3, /* precondition violated by the caller */
  FVIT_ERR_IO = 4,       /* unreadable or unwritable file, corrupt checkpoint */
  FVIT_ERR_ARGUMENT = 5, /* NULL handle or output pointer */
  FVIT_ERR_BUFFER = 6    /* output buffer too small; see *needed */
} fvit_status;

typedef enum fvit_mask_format { FVIT_MASK_CSV = 0, FVIT_MASK_PGM = 1 } fvit_mask_format;

typedef struct fvit_config fvit_config;
typedef struct fvit_layout fvit_layout;
typedef struct fvit_mask fvit_mask;
typedef struct fvit_model fvit_model;
typedef struct fvit_report fvit_report;

FVIT_API const char* fvit_last_error(void);
FVIT_API const char* fvit_version(void);

/* Run configuration: key=value pairs, defaults are the tiny preset. */
FVIT_API fvit_status fvit_config_create(fvit_config** out);
FVIT_API void fvit_config_destroy(fvit_config* config);
FVIT_API fvit_status fvit_config_set(fvit_config* config, const char* key, const char* value);
FVIT_API fvit_status fvit_config_load(fvit_config* config, const char* path);
FVIT_API fvit_status fvit_config_get(const fvit_config* config, const char* key, char* buf, size_t cap,
                                     size_t* needed);
FVIT_API fvit_status fvit_config_dump(const fvit_config* config, char* buf, size_t cap, size_t* needed);

/* Token layout for an n_h x n_w patch grid with k x k summary blocks. */
FVIT_API fvit_status fvit_max_levels(size_t n_h, size_t n_w, size_t k, size_t* out);
FVIT_API fvit_status fvit_layout_create(size_t n_h, size_t n_w, size_t k, size_t levels, int clamp_orphans,
                                        fvit_layout** out);
FVIT_API void fvit_layout_destroy(fvit_layout* layout);
FVIT_API fvit_status fvit_layout_counts(const fvit_layout* layout, size_t* regular, size_t* summary,
                                        size_t* total);
FVIT_API fvit_status fvit_layout_dump(const fvit_layout* layout, char* buf, size_t cap, size_t* needed);

/* Attention masks. */
FVIT_API fvit_status fvit_mask_fractal(const fvit_layout* layout, fvit_mask** out);
FVIT_API fvit_status fvit_mask_full(size_t n_total, fvit_mask** out);
FVIT_API void fvit_mask_destroy(fvit_mask* mask);
FVIT_API fvit_status fvit_mask_size(const fvit_mask* mask, size_t* n);
FVIT_API fvit_status fvit_mask_get(const fvit_mask* mask, size_t row, size_t col, int* allowed);
FVIT_API fvit_status fvit_mask_popcount(const fvit_mask* mask, size_t* out);
/* Number of structural violations against the layout; 0 means well formed. */
FVIT_API fvit_status fvit_mask_validate(const fvit_mask* mask, const fvit_layout* layout, size_t* violations);
FVIT_API fvit_status fvit_mask_write(const fvit_mask* mask, const char* path, fvit_mask_format format);

/* Positional encodings as CSV text. The table variant emits one row per grid
 * position "row,col,v0,...,v{d-1},norm2"; scheme is "sincos2d" or "learned". */
FVIT_API fvit_status fvit_posenc_table_csv(const char* scheme, size_t h, size_t w, size_t d, double tau,
                                           uint64_t seed, char* buf, size_t cap, size_t* needed);
FVIT_API fvit_status fvit_alibi_slopes(size_t n_heads, double* out, size_t cap);
FVIT_API fvit_status fvit_alibi2d_csv(const fvit_layout* layout, size_t n_heads, char* buf, size_t cap,
                                      size_t* needed);

/* Encoder model built from a configuration. */
FVIT_API fvit_status fvit_model_create(const fvit_config* config, fvit_model** out);
FVIT_API void fvit_model_destroy(fvit_model* model);
FVIT_API fvit_status fvit_model_info(const fvit_model* model, size_t* n_params, size_t* n_classes,
                                     size_t* image_size);
FVIT_API fvit_status fvit_model_randomize(fvit_model* model, uint64_t seed);
/* image: HWC doubles of length image_size; logits: n_classes doubles. */
FVIT_API fvit_status fvit_model_forward(fvit_model* model, const double* image, size_t image_len, double* logits,
                                        size_t logits_cap);
FVIT_API fvit_status fvit_model_save(fvit_model* model, const char* path);
FVIT_API fvit_status fvit_model_load(fvit_model* model, const char* path);
/* Accuracy on the enumerated evaluation set described by config. */
FVIT_API fvit_status fvit_model_evaluate(fvit_model* model, const fvit_config* config, double* accuracy);

/* Training on the dataset described by config. */
FVIT_API fvit_status fvit_train(fvit_model* model, const fvit_config* config, fvit_report** out);
FVIT_API void fvit_report_destroy(fvit_report* report);
FVIT_API fvit_status fvit_report_summary(const fvit_report* report, double* initial_accuracy,
                                         double* final_accuracy, size_t* epochs, int* diverged);
FVIT_API fvit_status fvit_report_text(const fvit_report* report, char* buf, size_t cap, size_t* needed);
FVIT_API fvit_status fvit_report_csv(const fvit_report* report, char* buf, size_t cap, size_t* needed);

typedef struct fvit_gradcheck_result {
  double max_rel_error;
  double worst_analytic;
  double worst_numeric;
  size_t worst_index;
  size_t checked;
  char worst_parameter[64];
} fvit_gradcheck_result;

/* Central differences on the first batch_size training samples. */
FVIT_API fvit_status fvit_gradcheck(fvit_model* model, const fvit_config* config, size_t batch_size, double eps,
                                    fvit_gradcheck_result* out);
/* kind: "any", "within-block", "block" or "cross-block". */
FVIT_API fvit_status fvit_permtest(fvit_model* model, const char* kind, size_t trials, uint64_t seed,
                                   double* max_deviation);

#ifdef __cplusplus
}
#endif

#endif /* FVIT_FVIT_H_ */
