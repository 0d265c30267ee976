#ifndef KGALIGN_H
#define KGALIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KgaStatus {
  KGA_STATUS_OK = 0,
  KGA_STATUS_NULL_POINTER = 1,
  KGA_STATUS_INVALID_UTF8 = 2,
  KGA_STATUS_IO = 3,
  KGA_STATUS_INGEST = 4,
  KGA_STATUS_CONFIG = 5,
  KGA_STATUS_LOOKUP = 6,
  KGA_STATUS_TRAINING = 7,
  KGA_STATUS_INTERNAL = 99,
} KgaStatus;

typedef enum KgaAnchorMode {
  KGA_ANCHOR_MODE_HARD = 0,
  KGA_ANCHOR_MODE_SOFT = 1,
} KgaAnchorMode;

typedef struct KgaConfig KgaConfig;

typedef struct KgaDataset KgaDataset;

typedef struct KgaRun KgaRun;

/**
 * Sizes of a loaded dataset.
 */
typedef struct KgaDatasetInfo {
  size_t source_entities;
  size_t target_entities;
  size_t source_triples;
  size_t target_triples;
  size_t train_links;
  size_t validation_links;
  size_t test_links;
} KgaDatasetInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *kga_last_error(void);

/**
 * Library version as a static string.
 */
const char *kga_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void kga_string_free(char *s);

/**
 * Default configuration.
 */
struct KgaConfig *kga_config_new(void);

/**
 * Reads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KgaStatus kga_config_load(const char *path, struct KgaConfig **out);

/**
 * Sets one option, e.g. `delta` = `0.8` or `neural.dim` = `32`.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated.
 */
enum KgaStatus kga_config_set(struct KgaConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must be null or a handle from this library, freed once.
 */
void kga_config_free(struct KgaConfig *config);

/**
 * Loads a dataset directory. Without pre-split link files, `ent_links` is
 * split with the given ratios and seed.
 *
 * # Safety
 * `dir` must be NUL-terminated; `out` must be writable.
 */
enum KgaStatus kga_dataset_load(const char *dir,
                                double train_ratio,
                                double valid_ratio,
                                uint64_t seed,
                                struct KgaDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum KgaStatus kga_dataset_info(const struct KgaDataset *dataset, struct KgaDatasetInfo *out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library, freed once. Runs
 * created from it stay valid.
 */
void kga_dataset_free(struct KgaDataset *dataset);

/**
 * Runs EM alignment seeded with the dataset's training links and scores
 * the result against its test links.
 *
 * # Safety
 * `dataset` and `config` must be live handles; `out` must be writable.
 */
enum KgaStatus kga_align(const struct KgaDataset *dataset,
                         const struct KgaConfig *config,
                         struct KgaRun **out);

/**
 * Reads a metric such as `hit@1`, `hit@10`, `mrr`, `precision`, `recall`
 * or `f1`.
 *
 * # Safety
 * `run` must be a live handle, `name` NUL-terminated, `out` writable.
 */
enum KgaStatus kga_run_metric(const struct KgaRun *run, const char *name, double *out);

/**
 * Number of completed EM iterations.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t kga_run_iterations(const struct KgaRun *run);

/**
 * Predictions in the `source<TAB>target<TAB>score<TAB>origin` format.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum KgaStatus kga_run_predictions_tsv(const struct KgaRun *run, char **out);

/**
 * Text report of the rules supporting `source` = `target`, by entity
 * label.
 *
 * # Safety
 * `run` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum KgaStatus kga_run_explain(const struct KgaRun *run,
                               const char *source,
                               const char *target,
                               enum KgaAnchorMode mode,
                               size_t rule_length,
                               char **out);

/**
 * Writes the run's output directory under `out_root`; its path is
 * returned through `run_dir` when that is non-null.
 *
 * # Safety
 * `run` must be a live handle; `out_root` NUL-terminated.
 */
enum KgaStatus kga_run_write_report(const struct KgaRun *run, const char *out_root, char **run_dir);

/**
 * # Safety
 * `run` must be null or a handle from this library, freed once.
 */
void kga_run_free(struct KgaRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGALIGN_H */
