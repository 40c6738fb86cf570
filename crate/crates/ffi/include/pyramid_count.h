#ifndef PYRAMID_COUNT_H
#define PYRAMID_COUNT_H

#pragma once

#include <stddef.h>
#include <stdint.h>

// Fusion mode codes, matching the weight-file encoding.
typedef enum PcFusion {
  PC_FUSION_ADAPTIVE = 0,
  PC_FUSION_FIXED = 1,
  PC_FUSION_NO_SOFTMAX = 2,
  PC_FUSION_SUM = 3,
  PC_FUSION_SINGLE = 4,
} PcFusion;

// Status codes returned by every fallible function.
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_CONFIG = 2,
  PC_STATUS_INPUT = 3,
  PC_STATUS_SHAPE = 4,
  PC_STATUS_LOAD = 5,
  PC_STATUS_IO = 6,
  PC_STATUS_PRECONDITION = 7,
  PC_STATUS_BUFFER_TOO_SMALL = 8,
  PC_STATUS_PANIC = 9,
} PcStatus;

// Opaque model handle.
typedef struct PcModel PcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library from the same thread.
const char *pc_last_error(void);

// Build a freshly initialised preset model. `scales` may be NULL to use the
// default pyramid for `n_scales` levels.
//
// # Safety
// `name` must be a NUL-terminated string; `scales` must point to `n_scales`
// floats or be NULL; `out` must be a valid pointer.
enum PcStatus pc_model_preset(const char *name,
                              const float *scales,
                              size_t n_scales,
                              enum PcFusion fusion,
                              uint64_t seed,
                              struct PcModel **out);

// Load a weight file whose config is a built-in preset.
//
// # Safety
// `path` must be NUL-terminated; `out` must be a valid pointer.
enum PcStatus pc_model_load(const char *path, struct PcModel **out);

// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum PcStatus pc_model_save(const struct PcModel *model, const char *path);

// Release a handle. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void pc_model_free(struct PcModel *model);

// # Safety
// Pointers must be valid.
enum PcStatus pc_model_param_count(const struct PcModel *model, size_t *out);

// # Safety
// Pointers must be valid.
enum PcStatus pc_model_receptive_field(const struct PcModel *model, size_t *out);

// # Safety
// Pointers must be valid.
enum PcStatus pc_model_num_scales(const struct PcModel *model, size_t *out);

// Receptive field of a preset backbone by name.
//
// # Safety
// `name` must be NUL-terminated; `out` valid.
enum PcStatus pc_preset_receptive_field(const char *name, size_t *out);

// Side lengths of the density map produced for an `h × w` image.
//
// # Safety
// `out_h` and `out_w` must be valid pointers.
enum PcStatus pc_output_dims(size_t h, size_t w, size_t *out_h, size_t *out_w);

// Predict on a row-major 8-bit grayscale image. The density map
// (`ceil(h/4) × ceil(w/4)`, row-major) is written to `density` when it is
// not NULL; `density_len` must then be at least that size. The count is
// written to `count` when it is not NULL.
//
// # Safety
// `pixels` must hold `h * w` bytes; `density` must hold `density_len` floats.
enum PcStatus pc_predict(const struct PcModel *model,
                         const uint8_t *pixels,
                         size_t h,
                         size_t w,
                         float *density,
                         size_t density_len,
                         double *count);

// Fixed-σ ground-truth density for `n_points` `(x, y)` pairs into a
// row-major `h × w` buffer.
//
// # Safety
// `xy` must hold `2 * n_points` doubles; `out` must hold `out_len` doubles.
enum PcStatus pc_density_fixed(const double *xy,
                               size_t n_points,
                               size_t h,
                               size_t w,
                               double sigma,
                               double *out,
                               size_t out_len);

// Geometry-adaptive density (σ = β · mean kNN distance).
//
// # Safety
// As [`pc_density_fixed`].
enum PcStatus pc_density_adaptive(const double *xy,
                                  size_t n_points,
                                  size_t h,
                                  size_t w,
                                  size_t k,
                                  double beta,
                                  double *out,
                                  size_t out_len);

// MAE, MSE and RMSE of `n` count pairs. Any output pointer may be NULL.
//
// # Safety
// `gt` and `pred` must hold `n` doubles.
enum PcStatus pc_metrics(const double *gt,
                         const double *pred,
                         size_t n,
                         double *out_mae,
                         double *out_mse,
                         double *out_rmse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PYRAMID_COUNT_H */
