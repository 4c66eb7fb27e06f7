/* SPDX-License-Identifier: Apache-2.0 */
#ifndef SEEKQA_SEEKQA_H
#define SEEKQA_SEEKQA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef SEEKQA_BUILDING
#    define SEEKQA_API __declspec(dllexport)
#  else
#    define SEEKQA_API __declspec(dllimport)
#  endif
#else
#  define SEEKQA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum seekqa_status {
  SEEKQA_OK = 0,
  SEEKQA_ERR_USAGE = 1,    /* bad argument or configuration */
  SEEKQA_ERR_DATA = 2,     /* malformed or inconsistent input data */
  SEEKQA_ERR_IO = 3,       /* file could not be opened, read or written */
  SEEKQA_ERR_INTERNAL = 4
} seekqa_status;

typedef struct seekqa_config seekqa_config;
typedef struct seekqa_kg seekqa_kg;

/* Receives one summary line per stage run. */
typedef void (*seekqa_log_fn)(const char* line, void* user);

SEEKQA_API const char* seekqa_version(void);

/* Message of the last failed call on this thread; "" when none. */
SEEKQA_API const char* seekqa_last_error(void);

SEEKQA_API seekqa_config* seekqa_config_new(void);
SEEKQA_API void seekqa_config_free(seekqa_config* cfg);
SEEKQA_API seekqa_status seekqa_config_load_file(seekqa_config* cfg, const char* path);
SEEKQA_API seekqa_status seekqa_config_set(seekqa_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to cap). Returns the
 * full value length, or -1 when the key is unset. */
SEEKQA_API int64_t seekqa_config_get(const seekqa_config* cfg, const char* key, char* buf, size_t cap);

SEEKQA_API size_t seekqa_stage_count(void);
SEEKQA_API const char* seekqa_stage_name(size_t index);
/* Runs a pipeline stage (build-kg, train-kge, ground, extract, stats,
 * encode-stub, train-qa, eval-qa, predict). log may be NULL. */
SEEKQA_API seekqa_status seekqa_run_stage(const char* stage, const seekqa_config* cfg,
                                          seekqa_log_fn log, void* user);

/* format: "tsv3" or "conceptnet_csv". */
SEEKQA_API seekqa_status seekqa_kg_load_triples(const char* path, const char* format, seekqa_kg** out);
SEEKQA_API seekqa_status seekqa_kg_load(const char* snapshot_path, seekqa_kg** out);
SEEKQA_API seekqa_status seekqa_kg_save(const seekqa_kg* kg, const char* snapshot_path);
SEEKQA_API void seekqa_kg_free(seekqa_kg* kg);

SEEKQA_API size_t seekqa_kg_concept_count(const seekqa_kg* kg);
SEEKQA_API size_t seekqa_kg_relation_count(const seekqa_kg* kg);
SEEKQA_API size_t seekqa_kg_triple_count(const seekqa_kg* kg);
/* Concept id, or -1 when the name is unknown. */
SEEKQA_API int64_t seekqa_kg_find_concept(const seekqa_kg* kg, const char* name);
/* Writes up to cap (relation, concept) pairs; *count receives the total.
 * Relation ids >= seekqa_kg_relation_count are inverse traversals. */
SEEKQA_API seekqa_status seekqa_kg_neighbors(const seekqa_kg* kg, uint32_t concept_id,
                                             uint32_t* relations, uint32_t* concepts, size_t cap,
                                             size_t* count);

#ifdef __cplusplus
}
#endif

#endif
