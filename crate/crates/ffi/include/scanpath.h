#ifndef SCANPATH_H
#define SCANPATH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Update rule for the per-level cluster count.
 */
typedef enum SpUpdateRule {
  SP_UPDATE_RULE_CONSTANT = 0,
  SP_UPDATE_RULE_HALVING = 1,
  SP_UPDATE_RULE_LINEAR_DECAY = 2,
} SpUpdateRule;

/**
 * Result codes.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_UTF8 = 2,
  SP_STATUS_ARGUMENT = 3,
  SP_STATUS_CONFIG = 4,
  SP_STATUS_SCHEMA = 5,
  SP_STATUS_PARSE = 6,
  SP_STATUS_EMPTY_DATASET = 7,
  SP_STATUS_IO = 8,
  SP_STATUS_VERSION = 9,
  SP_STATUS_MODEL_FORMAT = 10,
  SP_STATUS_GENERATION = 11,
  SP_STATUS_FEATURE = 12,
  SP_STATUS_BUFFER_TOO_SMALL = 13,
  SP_STATUS_PANIC = 14,
} SpStatus;

/**
 * A learned scan path model.
 */
typedef struct SpModel SpModel;

/**
 * One generated scan path.
 */
typedef struct SpScanPath SpScanPath;

/**
 * Model building parameters. A `merge_radius` <= 0 selects the derived
 * default.
 */
typedef struct SpBuildConfig {
  uint32_t max_level;
  uint32_t num_clusters;
  bool dyn_cluster;
  enum SpUpdateRule rule;
  double merge_radius;
  double pca_variance;
  double time_weight;
  uint64_t seed;
  uint32_t kmeans_restarts;
  bool ignore_time;
} SpBuildConfig;

/**
 * Generation parameters.
 */
typedef struct SpGeneratorConfig {
  uint32_t max_clusters;
  uint32_t max_subclusters;
  bool dyn_cluster;
  enum SpUpdateRule rule;
  uint64_t seed;
  bool clamp_to_unit;
  bool support_weighted;
} SpGeneratorConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty after a success).
 * The pointer stays valid until the next call on this thread.
 */
const char *sp_last_error(void);

/**
 * Library version as a static string.
 */
const char *sp_version(void);

struct SpBuildConfig sp_build_config_default(void);

struct SpGeneratorConfig sp_generator_config_default(void);

/**
 * Reads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_model_load(const char *path, struct SpModel **out);

/**
 * Learns a model from a gaze CSV (columns x, y, optional t, rec,
 * stimulus, participant). Coordinates outside [0,1] are rescaled by their
 * extent; timestamps are normalized per recording.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `config` and `out` valid pointers.
 */
enum SpStatus sp_model_train_csv(const char *path,
                                 const struct SpBuildConfig *config,
                                 struct SpModel **out);

/**
 * Writes a model file.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum SpStatus sp_model_save(const struct SpModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void sp_model_free(struct SpModel *model);

/**
 * Point dimension of the model: 2 (x, y) or 3 (x, y, t). 0 for null.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t sp_model_dim(const struct SpModel *model);

/**
 * Number of levels. 0 for null.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t sp_model_levels(const struct SpModel *model);

/**
 * Number of nodes on 1-based `level`; 0 when out of range or null.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t sp_model_node_count(const struct SpModel *model, size_t level);

/**
 * Generates scan path number `stream` for `config.seed`. The same
 * (seed, stream) pair always yields the same scan path.
 *
 * # Safety
 * `model` must come from this library; `config` and `out` valid pointers.
 */
enum SpStatus sp_generate(const struct SpModel *model,
                          const struct SpGeneratorConfig *config,
                          uint64_t stream,
                          struct SpScanPath **out);

/**
 * # Safety
 * `path` must come from this library and not be used afterwards.
 */
void sp_scanpath_free(struct SpScanPath *path);

/**
 * Number of points. 0 for null.
 *
 * # Safety
 * `path` must be null or come from this library.
 */
size_t sp_scanpath_len(const struct SpScanPath *path);

/**
 * Copies the points as consecutive (x, y, t) triples into `buf`, which
 * must hold `3 * sp_scanpath_len(path)` doubles. t is NaN for untimed
 * scan paths.
 *
 * # Safety
 * `path` must come from this library; `buf` must point to `capacity`
 * writable doubles.
 */
enum SpStatus sp_scanpath_points(const struct SpScanPath *path, double *buf, size_t capacity);

/**
 * Heatmap of `path` on a `width` x `height` grid, row-major from the top
 * left cell, summing to 1. `buf` must hold `width * height` doubles.
 *
 * # Safety
 * `path` must come from this library; `buf` must point to `capacity`
 * writable doubles.
 */
enum SpStatus sp_featurize_heatmap(const struct SpScanPath *path,
                                   size_t width,
                                   size_t height,
                                   double *buf,
                                   size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCANPATH_H */
