#ifndef BEVDET_H
#define BEVDET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BEVDET_POINT_STRIDE 4

#define BEVDET_BOX_STRIDE 7

#define BEVDET_PROPOSAL_STRIDE 4

#define BEVDET_TARGET_STRIDE 8

#define BEVDET_DETECTION_STRIDE 9

typedef enum BevdetStatus {
  BEVDET_STATUS_OK = 0,
  BEVDET_STATUS_NULL_POINTER = 1,
  BEVDET_STATUS_INVALID_ARGUMENT = 2,
  BEVDET_STATUS_SHAPE_MISMATCH = 3,
  BEVDET_STATUS_NON_FINITE = 4,
  BEVDET_STATUS_PANIC = 5,
} BevdetStatus;

// Height target form passed to [`bevdet_codec_new`].
typedef enum BevdetHeightMode {
  BEVDET_HEIGHT_MODE_RATIO = 0,
  BEVDET_HEIGHT_MODE_LITERAL = 1,
} BevdetHeightMode;

// Opaque codec handle: yaw bins, height mode, weights and the mapping
// from integer category ids to reference boxes.
typedef struct BevdetCodec BevdetCodec;

typedef struct BevdetGridParams {
  double cell_size;
  double forward_range;
  double lateral_range;
  double max_height_above_ground;
  double ground_z;
  uint32_t density_saturation;
} BevdetGridParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *bevdet_last_error(void);

// Library version, NUL-terminated and static.
const char *bevdet_version(void);

struct BevdetGridParams bevdet_grid_default(void);

// Raster size of a grid.
//
// # Safety
// `grid`, `rows` and `cols` must be valid pointers.
enum BevdetStatus bevdet_grid_dims(const struct BevdetGridParams *grid, size_t *rows, size_t *cols);

// Rasterizes `n_points` points into `out`, laid out as
// `[height, intensity, density] x rows x cols`. `out_len` must equal
// `3 * rows * cols`. Reflectance is clamped to `[0, 1]`.
//
// # Safety
// `points` must hold `4 * n_points` floats and `out` `out_len` floats.
enum BevdetStatus bevdet_bev_encode_array(const float *points,
                                          size_t n_points,
                                          const struct BevdetGridParams *grid,
                                          float *out,
                                          size_t out_len);

// New codec with unit weights and an empty reference table; `n_bins` must
// be a positive multiple of 4. Returns null on invalid arguments.
struct BevdetCodec *bevdet_codec_new(size_t n_bins, enum BevdetHeightMode mode);

// # Safety
// `codec` must come from [`bevdet_codec_new`] and not be used afterwards.
void bevdet_codec_free(struct BevdetCodec *codec);

// Maps `category_id` to a reference box of height `h_ref` and centroid
// elevation `z_ref`, replacing any earlier registration.
//
// # Safety
// `codec` must be a live handle not used concurrently by another call.
enum BevdetStatus bevdet_codec_register_reference(struct BevdetCodec *codec,
                                                  int32_t category_id,
                                                  double h_ref,
                                                  double z_ref);

// Sets the regression weights (all positive).
//
// # Safety
// `codec` must be a live handle not used concurrently by another call.
enum BevdetStatus bevdet_codec_set_weights(struct BevdetCodec *codec,
                                           double w_xy,
                                           double w_lw,
                                           double w_h,
                                           double w_z);

// Encodes `n` boxes against their proposals. Planar box fields share the
// proposal units; `h`, `z` are metric. The bin index is written as a float.
//
// # Safety
// Buffers must hold `7n`, `4n`, `n` and `8n` elements respectively.
enum BevdetStatus bevdet_encode_targets_array(const struct BevdetCodec *codec,
                                              const double *boxes,
                                              const double *proposals,
                                              const int32_t *category_ids,
                                              size_t n,
                                              double *out_targets);

// Inverse of [`bevdet_encode_targets_array`]. Bin indices must be integral.
//
// # Safety
// Buffers must hold `8n`, `4n`, `n` and `7n` elements respectively.
enum BevdetStatus bevdet_decode_targets_array(const struct BevdetCodec *codec,
                                              const double *targets,
                                              const double *proposals,
                                              const int32_t *category_ids,
                                              size_t n,
                                              double *out_boxes);

// Per-category greedy NMS on BEV footprints. Writes the kept row indices
// in descending score order to `out_keep` (capacity `n`) and their count
// to `out_count`.
//
// # Safety
// `dets` must hold `9n` doubles, `out_keep` `n` entries.
enum BevdetStatus bevdet_rotated_nms_array(const double *dets,
                                           size_t n,
                                           double iou_threshold,
                                           size_t *out_keep,
                                           size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEVDET_H */
