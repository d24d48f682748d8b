/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef BELTSCAN_H
#define BELTSCAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_INPUT = 2,
  BS_STATUS_DIMENSION_MISMATCH = 3,
  BS_STATUS_INSUFFICIENT_DATA = 4,
  BS_STATUS_AMBIGUOUS_MATCH = 5,
  BS_STATUS_DEGENERATE = 6,
  BS_STATUS_IO = 7,
  BS_STATUS_FORMAT = 8,
  BS_STATUS_DIVERGED = 9,
  BS_STATUS_PANIC = 10,
} BsStatus;

// Trained gradient regressor.
typedef struct BsGradientModel BsGradientModel;

// Stitched normals, integrated height and per-frame poses.
typedef struct BsReconstruction BsReconstruction;

// Frames, background and manifest of a scan directory.
typedef struct BsScan BsScan;

typedef struct BsPose {
  size_t frame_index;
  double tx_px;
  double ty_px;
  double confidence;
} BsPose;

// `p' = rotation * p + translation`, rotation row-major.
typedef struct BsRigidTransform {
  double rotation[9];
  double translation[3];
} BsRigidTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, static NUL-terminated string.
const char *bs_version(void);

// Message of the last failure on this thread, or NULL. Valid until the next call.
const char *bs_last_error(void);

// Loads a gradient model JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum BsStatus bs_gradient_model_load(const char *path, struct BsGradientModel **out);

// # Safety
// `model` must come from `bs_gradient_model_load` or be NULL.
void bs_gradient_model_free(struct BsGradientModel *model);

// Reads a scan directory written by `beltscan simulate`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum BsStatus bs_scan_load(const char *dir, struct BsScan **out);

// Number of frames, 0 for NULL.
//
// # Safety
// `scan` must be a live handle or NULL.
size_t bs_scan_frame_count(const struct BsScan *scan);

// # Safety
// `scan` must come from `bs_scan_load` or be NULL.
void bs_scan_free(struct BsScan *scan);

// Full pipeline with default settings; `use_marker_prior` seeds flow with the belt encoder.
//
// # Safety
// Handles must be live and `out` a valid pointer.
enum BsStatus bs_reconstruct(const struct BsScan *scan,
                             const struct BsGradientModel *model,
                             bool use_marker_prior,
                             struct BsReconstruction **out);

// Mosaic size in pixels.
//
// # Safety
// `rec` must be live; `width` and `height` valid pointers.
enum BsStatus bs_reconstruction_dims(const struct BsReconstruction *rec,
                                     size_t *width,
                                     size_t *height);

// Copies the height field (mm, row-major); `len` must be `width * height`.
//
// # Safety
// `rec` must be live and `buf` writable for `len` doubles.
enum BsStatus bs_reconstruction_height(const struct BsReconstruction *rec, double *buf, size_t len);

// Copies unit normals as interleaved xyz; `len` must be `3 * width * height`.
//
// # Safety
// `rec` must be live and `buf` writable for `len` doubles.
enum BsStatus bs_reconstruction_normals(const struct BsReconstruction *rec,
                                        double *buf,
                                        size_t len);

// Number of registered frames, 0 for NULL.
//
// # Safety
// `rec` must be live or NULL.
size_t bs_reconstruction_pose_count(const struct BsReconstruction *rec);

// Copies per-frame poses; `len` must equal `bs_reconstruction_pose_count`.
//
// # Safety
// `rec` must be live and `buf` writable for `len` poses.
enum BsStatus bs_reconstruction_poses(const struct BsReconstruction *rec,
                                      struct BsPose *buf,
                                      size_t len);

// Writes the reconstruction output files into `dir`.
//
// # Safety
// `rec` must be live and `dir` a NUL-terminated string.
enum BsStatus bs_reconstruction_save(const struct BsReconstruction *rec,
                                     const char *dir,
                                     bool preview);

// # Safety
// `rec` must come from `bs_reconstruct` or be NULL.
void bs_reconstruction_free(struct BsReconstruction *rec);

// Integrates a full rectangular gradient field (mm/mm) into a zero-mean height field (mm).
//
// # Safety
// `gx`, `gy` and `out_height` must each hold `width * height` doubles.
enum BsStatus bs_poisson_integrate(const double *gx,
                                   const double *gy,
                                   size_t width,
                                   size_t height,
                                   double pixel_pitch,
                                   double *out_height);

// Point-to-point ICP; clouds are interleaved xyz with `n_source` and `n_target` points.
//
// # Safety
// Point buffers must hold `3 * n` doubles; `out` must be valid; `out_residual` may be NULL.
enum BsStatus bs_icp_align(const double *source,
                           size_t n_source,
                           const double *target,
                           size_t n_target,
                           size_t max_iter,
                           double tol,
                           struct BsRigidTransform *out,
                           double *out_residual);

// Belt advance in px between two sorted lists of marker x positions from one band.
//
// Returns `BS_STATUS_AMBIGUOUS_MATCH` when the interval pattern aliases.
//
// # Safety
// `prev_x` and `next_x` must hold `n_prev` and `n_next` doubles; `out` must be valid.
enum BsStatus bs_marker_displacement(const double *prev_x,
                                     size_t n_prev,
                                     const double *next_x,
                                     size_t n_next,
                                     double *out);

// Kind tag of a GBF1 grid file: 1 height, 2 gradient, 3 normal, 4 mask.
//
// # Safety
// `path` must be a NUL-terminated string and `kind` a valid pointer.
enum BsStatus bs_gbf_kind(const char *path, uint32_t *kind);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BELTSCAN_H */
