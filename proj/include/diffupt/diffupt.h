/*
 * Copyright 2026 The DiffuPT Workbench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the DiffuPT workbench shared library.
 *
 * Every fallible call returns a dpt_status. On failure, dpt_last_error()
 * describes the problem for the calling thread until its next call into the
 * library. Handles are opaque and owned by the caller; release them with the
 * matching *_free function. Strings returned through char** are released
 * with dpt_string_free. */

#ifndef DIFFUPT_DIFFUPT_H_
#define DIFFUPT_DIFFUPT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DPT_API __declspec(dllexport)
#else
#define DPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dpt_status {
  DPT_OK = 0,
  DPT_ERR_ARGUMENT = 1,   /* null handle, bad shape, unknown name */
  DPT_ERR_CONFIG = 2,     /* parse or validation failure; see dpt_last_error_line */
  DPT_ERR_IO = 3,         /* unreadable or unwritable file */
  DPT_ERR_NUMERIC = 4,    /* non-finite value or diverged training */
  DPT_ERR_GENERATION = 5, /* generation attempt budget exhausted */
  DPT_ERR_RUNTIME = 6     /* anything else */
} dpt_status;

typedef struct dpt_config dpt_config;
typedef struct dpt_dataset dpt_dataset;

/* Progress callback; `message` is valid only during the call. */
typedef void (*dpt_log_fn)(const char* message, void* user);

DPT_API const char* dpt_version(void);
DPT_API const char* dpt_status_name(dpt_status status);
DPT_API const char* dpt_last_error(void);
/* Line of the last configuration error, 0 when not tied to a line. */
DPT_API size_t dpt_last_error_line(void);
DPT_API void dpt_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

DPT_API dpt_status dpt_config_default(dpt_config** out);
DPT_API dpt_status dpt_config_load(const char* path, dpt_config** out);
DPT_API dpt_status dpt_config_parse(const char* text, dpt_config** out);
/* Canonical text with every key, suitable for dpt_config_parse. */
DPT_API dpt_status dpt_config_serialize(const dpt_config* cfg, char** out);
/* 40 hex digits plus terminator. */
DPT_API dpt_status dpt_config_hash(const dpt_config* cfg, char out[41]);
DPT_API size_t dpt_config_seed_count(const dpt_config* cfg);
DPT_API dpt_status dpt_config_seeds(const dpt_config* cfg, uint64_t* out, size_t capacity);
DPT_API void dpt_config_free(dpt_config* cfg);

/* ---- experiments ------------------------------------------------------ */

DPT_API size_t dpt_command_count(void);
/* NULL when i is out of range. */
DPT_API const char* dpt_command_name(size_t i);
DPT_API int dpt_is_command(const char* name);

/* Runs `command` for each seed (the config's seed list when n_seeds is 0)
 * and writes reports, samples, weights and manifest.json under out_dir. */
DPT_API dpt_status dpt_run(const char* command, const dpt_config* cfg, const uint64_t* seeds,
                           size_t n_seeds, const char* out_dir, dpt_log_fn log, void* user);
/* Repeats the run recorded in a manifest into out_dir. */
DPT_API dpt_status dpt_rerun_manifest(const char* manifest_path, const char* out_dir,
                                      dpt_log_fn log, void* user);

/* ---- datasets --------------------------------------------------------- */

/* One split ("train", "val" or "test") of the synthetic dataset for a seed. */
DPT_API dpt_status dpt_dataset_synth(const dpt_config* cfg, uint64_t seed, const char* split,
                                     dpt_dataset** out);
DPT_API dpt_status dpt_dataset_load(const char* path, dpt_dataset** out);
DPT_API dpt_status dpt_dataset_save(const dpt_dataset* ds, const char* path);
DPT_API dpt_status dpt_dataset_shape(const dpt_dataset* ds, size_t* n, size_t* channels,
                                     size_t* height, size_t* width);
/* Copies N labels (0 or 1). */
DPT_API dpt_status dpt_dataset_labels(const dpt_dataset* ds, uint8_t* out, size_t capacity);
/* Copies N*C*H*W pixel values in [0, 1], row-major. */
DPT_API dpt_status dpt_dataset_pixels(const dpt_dataset* ds, double* out, size_t capacity);
DPT_API void dpt_dataset_free(dpt_dataset* ds);

#ifdef __cplusplus
}
#endif

#endif /* DIFFUPT_DIFFUPT_H_ */
