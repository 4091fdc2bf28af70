#ifndef FRACLAB_H
#define FRACLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_INVALID_MEASURE = 3,
  FL_STATUS_RESOLUTION_EXCEEDED = 4,
  FL_STATUS_EMPTY = 5,
  FL_STATUS_DIMENSION_MISMATCH = 6,
  FL_STATUS_CAP_EXCEEDED = 7,
  FL_STATUS_UNCALIBRATED = 8,
  FL_STATUS_INSUFFICIENT_SCALES = 9,
  FL_STATUS_NUMERICAL = 10,
  FL_STATUS_FORMAT = 11,
  FL_STATUS_IO = 12,
  FL_STATUS_PANIC = 13,
} FlStatus;

/**
 * Opaque measure handle.
 */
typedef struct FlMeasure FlMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next fraclab call on the same thread.
 */
const char *fl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Builds a measure from `n` points of dimension `dim` (row-major in `points`)
 * and `n` positive weights.
 *
 * # Safety
 * `points` must hold `n * dim` doubles, `weights` must hold `n` doubles and
 * `handle` must be writable.
 */
enum FlStatus fl_measure_from_points(size_t dim,
                                     const double *points,
                                     const double *weights,
                                     size_t n,
                                     double gen_scale,
                                     struct FlMeasure **handle);

/**
 * Built-in measures: "unit-interval" and "unit-square" (midpoint grids with
 * `n` points per side), "segment", "circle", "uniform-random", "gaussian"
 * (σ = 0.2) and "ball" (radius 0.5). `dim` is used by the random families.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `handle` must be writable.
 */
enum FlStatus fl_measure_builtin(const char *name,
                                 size_t dim,
                                 size_t n,
                                 uint64_t seed,
                                 struct FlMeasure **handle);

/**
 * Natural measure of a built-in IFS ("cantor", "cantor-dust", "four-corner",
 * "sierpinski", "uniform-cube") at `depth`. `ratio` is read by four-corner
 * and `dim` by uniform-cube.
 *
 * # Safety
 * `family_name` must be a NUL-terminated string and `handle` must be writable.
 */
enum FlStatus fl_measure_ifs(const char *family_name,
                             double ratio,
                             size_t dim,
                             uint32_t depth,
                             struct FlMeasure **handle);

/**
 * Chaos-game sample of a built-in IFS.
 *
 * # Safety
 * As for [`fl_measure_ifs`].
 */
enum FlStatus fl_measure_chaos(const char *family_name,
                               double ratio,
                               size_t dim,
                               size_t n_points,
                               uint64_t seed,
                               struct FlMeasure **handle);

/**
 * Reads a measure file in either format.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `handle` must be writable.
 */
enum FlStatus fl_measure_load(const char *path, struct FlMeasure **handle);

/**
 * Writes a measure; `binary` selects the binary format over text.
 *
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum FlStatus fl_measure_save(const struct FlMeasure *m, const char *path, bool binary);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `m` must be NULL or a handle from this library that has not been freed.
 */
void fl_measure_free(struct FlMeasure *m);

/**
 * Number of points; 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t fl_measure_len(const struct FlMeasure *m);

/**
 * Ambient dimension; 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t fl_measure_dim(const struct FlMeasure *m);

/**
 * Total mass; NaN for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
double fl_measure_total_mass(const struct FlMeasure *m);

/**
 * Generation scale; NaN for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
double fl_measure_gen_scale(const struct FlMeasure *m);

/**
 * Copies the coordinates (len * dim doubles) and weights (len doubles).
 * Either output may be NULL to skip it.
 *
 * # Safety
 * Non-NULL outputs must have room for the stated number of doubles.
 */
enum FlStatus fl_measure_copy(const struct FlMeasure *m, double *points, double *weights);

/**
 * μ(B(x, r)) for a point `x` of the measure's dimension.
 *
 * # Safety
 * `x` must hold `dim` doubles and `result` must be writable.
 */
enum FlStatus fl_ball_mass(const struct FlMeasure *m, const double *x, double r, double *result);

/**
 * Box-counting dimension over dyadic scales in [delta_min, delta_max].
 *
 * # Safety
 * `m` must be a live handle; `value` and `std_error` must be writable.
 */
enum FlStatus fl_box_dimension(const struct FlMeasure *m,
                               double delta_min,
                               double delta_max,
                               double *value,
                               double *std_error);

/**
 * Frostman exponent and constant from ball masses at `n_centers` sampled
 * centres on dyadic radii in [r_min, r_max].
 *
 * # Safety
 * `m` must be a live handle; `exponent` and `constant` must be writable.
 */
enum FlStatus fl_frostman_exponent(const struct FlMeasure *m,
                                   double r_min,
                                   double r_max,
                                   size_t n_centers,
                                   uint64_t seed,
                                   double *exponent,
                                   double *constant);

/**
 * Riesz s-energy with pair distances clamped below `mollify_scale`.
 *
 * # Safety
 * `m` must be a live handle and `result` writable.
 */
enum FlStatus fl_energy_spatial(const struct FlMeasure *m,
                                double s,
                                double mollify_scale,
                                double *result);

/**
 * Frequency-side energy without the self-interaction term, using the
 * calibrated constant for the measure's dimension.
 *
 * # Safety
 * `m` must be a live handle and `result` writable.
 */
enum FlStatus fl_energy_fourier(const struct FlMeasure *m,
                                double s,
                                double mollify_scale,
                                double *result);

/**
 * μ̂(ξ) = Σ w e^{-2πi x·ξ}.
 *
 * # Safety
 * `xi` must hold `dim` doubles; `re` and `im` must be writable.
 */
enum FlStatus fl_fourier_transform(const struct FlMeasure *m,
                                   const double *xi,
                                   double *re,
                                   double *im);

/**
 * Mean of |μ̂(rω)|² over `n_directions` unit vectors ω.
 *
 * # Safety
 * `m` must be a live handle and `result` writable.
 */
enum FlStatus fl_spherical_average(const struct FlMeasure *m,
                                   double r,
                                   size_t n_directions,
                                   double *result);

/**
 * Similarity dimension of a built-in IFS.
 *
 * # Safety
 * `family_name` must be a NUL-terminated string and `result` writable.
 */
enum FlStatus fl_moran_dimension(const char *family_name, double ratio, size_t dim, double *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACLAB_H */
