#ifndef SEGQC_H
#define SEGQC_H

/* Generated by cbindgen from the segqc-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SegqcStatus {
  SEGQC_STATUS_OK = 0,
  /**
   * Null pointer, bad shape, or otherwise unusable argument.
   */
  SEGQC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration or checkpoint problem.
   */
  SEGQC_STATUS_BAD_CONFIG = 2,
  /**
   * Data problem (labels, files, geometry).
   */
  SEGQC_STATUS_DATA_ERROR = 3,
  /**
   * Numerical failure.
   */
  SEGQC_STATUS_NUMERICAL_ERROR = 4,
  /**
   * A panic was caught at the boundary.
   */
  SEGQC_STATUS_PANIC = 5,
} SegqcStatus;

/**
 * Opaque class-hierarchy handle.
 */
typedef struct SegqcHierarchy SegqcHierarchy;

/**
 * Opaque model handle.
 */
typedef struct SegqcModel SegqcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent error on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *segqc_last_error(void);

/**
 * Library version as a static C string.
 */
const char *segqc_version(void);

/**
 * Built-in nested brain-tumor hierarchy (labels 1/2/4; classes WT ⊇ TC ⊇ ET).
 */
struct SegqcHierarchy *segqc_hierarchy_brats(void);

/**
 * Built-in disjoint cardiac hierarchy (labels 1/2/3; classes LV, Myo, RV).
 */
struct SegqcHierarchy *segqc_hierarchy_cardiac(void);

/**
 * Parses a hierarchy from its JSON form; returns null on failure (see
 * `segqc_last_error`).
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string.
 */
struct SegqcHierarchy *segqc_hierarchy_from_json(const char *json);

/**
 * Number of derived classes of a hierarchy handle.
 *
 * # Safety
 * `h` must be a live pointer from a `segqc_hierarchy_*` constructor.
 */
size_t segqc_hierarchy_num_classes(const struct SegqcHierarchy *h);

/**
 * Frees a hierarchy handle (null is ignored).
 *
 * # Safety
 * `h` must come from a `segqc_hierarchy_*` constructor and not be freed twice.
 */
void segqc_hierarchy_free(struct SegqcHierarchy *h);

/**
 * Loads a checkpoint directory (weights.bin + config.json); returns null on
 * failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated C string.
 */
struct SegqcModel *segqc_model_load(const char *path);

/**
 * Number of error-map classes the model emits.
 *
 * # Safety
 * `m` must be a live pointer from `segqc_model_load`.
 */
size_t segqc_model_num_classes(const struct SegqcModel *m);

/**
 * Number of imaging modalities the model expects.
 *
 * # Safety
 * `m` must be a live pointer from `segqc_model_load`.
 */
size_t segqc_model_in_modalities(const struct SegqcModel *m);

/**
 * Frees a model handle (null is ignored).
 *
 * # Safety
 * `m` must come from `segqc_model_load` and not be freed twice.
 */
void segqc_model_free(struct SegqcModel *m);

/**
 * Runs the quality model on one (image, query mask) pair.
 *
 * `image`: `m·d·h·w` f32 values; `labels`: `d·h·w` u8 values. On success
 * writes the predicted DSC and NSD; when `out_sem_prob` is non-null it must
 * hold `num_classes·d·h·w` f32 slots and receives the per-class error
 * probabilities.
 *
 * # Safety
 * All pointers must honor the documented buffer sizes; `model` and
 * `hierarchy` must be live handles.
 */
enum SegqcStatus segqc_predict(const struct SegqcModel *model,
                               const struct SegqcHierarchy *hierarchy,
                               const float *image,
                               const uint8_t *labels,
                               size_t m,
                               size_t d,
                               size_t h,
                               size_t w,
                               double *out_dsc,
                               double *out_nsd,
                               float *out_sem_prob);

/**
 * Multi-class Dice between two label volumes.
 *
 * # Safety
 * `query`/`gt` must hold `d·h·w` bytes; `hierarchy` must be a live handle.
 */
enum SegqcStatus segqc_multiclass_dsc(const struct SegqcHierarchy *hierarchy,
                                      const uint8_t *query,
                                      const uint8_t *gt,
                                      size_t d,
                                      size_t h,
                                      size_t w,
                                      double *out);

/**
 * Class-averaged normalized surface dice at `tolerance_vox`.
 *
 * # Safety
 * `query`/`gt` must hold `d·h·w` bytes; `hierarchy` must be a live handle.
 */
enum SegqcStatus segqc_nsd(const struct SegqcHierarchy *hierarchy,
                           const uint8_t *query,
                           const uint8_t *gt,
                           size_t d,
                           size_t h,
                           size_t w,
                           double tolerance_vox,
                           double *out);

/**
 * Ground-truth segmentation error map: per class, the symmetric difference
 * of the one-hot channels. `out_sem` receives `num_classes·d·h·w` bytes of
 * 0/1.
 *
 * # Safety
 * Buffer sizes as documented; `hierarchy` must be a live handle.
 */
enum SegqcStatus segqc_sem_ground_truth(const struct SegqcHierarchy *hierarchy,
                                        const uint8_t *query,
                                        const uint8_t *gt,
                                        size_t d,
                                        size_t h,
                                        size_t w,
                                        uint8_t *out_sem);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGQC_H */
