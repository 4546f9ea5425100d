#ifndef DEPTHFORGE_H
#define DEPTHFORGE_H

#include <stddef.h>
#include <stdint.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_INPUT = 2,
  DF_STATUS_NUMERICAL_FAILURE = 3,
  DF_STATUS_PANIC = 4,
} DfStatus;

/**
 * Dense depth map in meters.
 */
typedef struct DfDepthMap DfDepthMap;

/**
 * Per-pixel object labels, 0 = unlabeled.
 */
typedef struct DfLabelMap DfLabelMap;

/**
 * Sparse depth samples.
 */
typedef struct DfSamples DfSamples;

typedef struct DfMetrics {
  double rmse;
  double mae;
  double rel;
  double delta1;
  double delta2;
  double delta3;
  size_t pixel_count;
} DfMetrics;

typedef struct DfLossReport {
  double l1;
  double edge_weighted;
  double alpha;
  size_t pixel_count;
  size_t edge_pixel_count;
} DfLossReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next depthforge call on the same thread.
 */
const char *df_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Version of the JSON configuration layout accepted by `df_calibrate`.
 */
uint32_t df_schema_version(void);

/**
 * Creates a depth map from `width * height` row-major values in meters.
 * `valid` may be NULL, in which case positive finite values are valid.
 *
 * # Safety
 * `values` (and `valid` when not NULL) must point to `width * height`
 * readable elements. `out` must be writable.
 */
enum DfStatus df_depth_map_new(size_t width,
                               size_t height,
                               const double *values,
                               const uint8_t *valid,
                               struct DfDepthMap **out);

/**
 * # Safety
 * `map` must be NULL or a handle from this library not yet freed.
 */
void df_depth_map_free(struct DfDepthMap *map);

/**
 * # Safety
 * `map` must be a live handle.
 */
size_t df_depth_map_width(const struct DfDepthMap *map);

/**
 * # Safety
 * `map` must be a live handle.
 */
size_t df_depth_map_height(const struct DfDepthMap *map);

/**
 * Copies values (meters) into `values` and, when not NULL, the validity
 * mask into `valid`. Invalid pixels read 0.
 *
 * # Safety
 * `map` must be a live handle; the buffers must hold `len` elements and
 * `len` must equal width * height.
 */
enum DfStatus df_depth_map_copy(const struct DfDepthMap *map,
                                double *values,
                                uint8_t *valid,
                                size_t len);

/**
 * # Safety
 * `labels` must point to `width * height` readable values; `out` must be writable.
 */
enum DfStatus df_label_map_new(size_t width,
                               size_t height,
                               const uint32_t *labels,
                               struct DfLabelMap **out);

/**
 * # Safety
 * `labels` must be NULL or a handle from this library not yet freed.
 */
void df_label_map_free(struct DfLabelMap *labels);

/**
 * Creates `count` samples at pixels `(u[i], v[i])` with depth `depth[i]`
 * meters, for an image of `width` x `height`.
 *
 * # Safety
 * `u`, `v` and `depth` must each point to `count` readable elements;
 * `out` must be writable.
 */
enum DfStatus df_samples_new(const uint32_t *u,
                             const uint32_t *v,
                             const double *depth,
                             size_t count,
                             size_t width,
                             size_t height,
                             struct DfSamples **out);

/**
 * # Safety
 * `samples` must be NULL or a handle from this library not yet freed.
 */
void df_samples_free(struct DfSamples *samples);

/**
 * Calibrates `prediction` against `samples`. `config_json` is a pipeline
 * configuration document (intrinsics required; paths are ignored).
 * `labels` may be NULL unless the mode is `smd`. On success `*out`
 * receives a new depth map the caller frees.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; handles must be live;
 * `out` must be writable.
 */
enum DfStatus df_calibrate(const char *config_json,
                           const struct DfDepthMap *prediction,
                           const struct DfLabelMap *labels,
                           const struct DfSamples *samples,
                           struct DfDepthMap **out);

/**
 * Error metrics over pixels valid in both maps.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum DfStatus df_evaluate(const struct DfDepthMap *truth,
                          const struct DfDepthMap *prediction,
                          struct DfMetrics *out);

/**
 * Edge-weighted loss with semantic edges taken from `labels`.
 * `edge_params_json` may be NULL for the default edge settings.
 *
 * # Safety
 * Handles must be live; `edge_params_json` must be NULL or NUL-terminated;
 * `out` must be writable.
 */
enum DfStatus df_edge_weighted_loss(const struct DfDepthMap *truth,
                                    const struct DfDepthMap *prediction,
                                    const struct DfLabelMap *labels,
                                    double alpha,
                                    const char *edge_params_json,
                                    struct DfLossReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPTHFORGE_H */
