#ifndef CRAMER_GMM_H
#define CRAMER_GMM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_ARGUMENT = 2,
  CG_STATUS_DIMENSION_MISMATCH = 3,
  CG_STATUS_NON_FINITE = 4,
  CG_STATUS_IO = 5,
  CG_STATUS_PARSE = 6,
  CG_STATUS_PANIC = 7,
} CgStatus;

// Unit directions with the weight that turns a per-direction sum into the
// sliced distance.
typedef struct CgDirections CgDirections;

// Univariate Gaussian mixture.
typedef struct CgGmm1 CgGmm1;

// Multivariate Gaussian mixture with `Sigma_j = S_j^T S_j`.
typedef struct CgGmmN CgGmmN;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len` bytes) and returns the full message length
// plus one. Passing a null `buf` only queries the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t cg_last_error_message(char *buf, size_t len);

// Standard normal CDF.
double cg_phi_cdf(double x);

// Standard normal density.
double cg_phi_pdf(double x);

// `U(x) = x Phi(x) + phi(x)`.
double cg_u(double x);

// `V(x) = (U(x) + U(-x)) / 2`.
double cg_v(double x);

// Builds a univariate mixture from `n` weights, means and standard
// deviations. Weights must sum to one; deviations may be zero.
//
// # Safety
// The three arrays must hold `n` values; `out` must be writable.
enum CgStatus cg_gmm1_new(const double *weights,
                          const double *means,
                          const double *stds,
                          size_t n,
                          struct CgGmm1 **out);

// Releases a mixture. Null is ignored.
//
// # Safety
// `g` must come from this library and not be used afterwards.
void cg_gmm1_free(struct CgGmm1 *g);

// Number of components, or 0 for null.
//
// # Safety
// `g` must be null or a live handle.
size_t cg_gmm1_len(const struct CgGmm1 *g);

// Squared Cramér 2-distance between two univariate mixtures.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CgStatus cg_c2_squared(const struct CgGmm1 *a, const struct CgGmm1 *b, double *out);

// Distance and its gradient with respect to the parameters of `a`. Each
// gradient array must hold `n = cg_gmm1_len(a)` values.
//
// # Safety
// Handles must be live; output arrays must hold `n` values.
enum CgStatus cg_c2_squared_grad(const struct CgGmm1 *a,
                                 const struct CgGmm1 *b,
                                 size_t n,
                                 double *loss,
                                 double *d_weights,
                                 double *d_means,
                                 double *d_stds);

// Builds a multivariate mixture. `means` holds `n * dim` values (component
// major); `scales` holds `n` row-major `dim x dim` matrices `S_j`.
//
// # Safety
// Arrays must have the stated lengths; `out` must be writable.
enum CgStatus cg_gmmn_new(size_t dim,
                          size_t n,
                          const double *weights,
                          const double *means,
                          const double *scales,
                          struct CgGmmN **out);

// Loads a JSON model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum CgStatus cg_gmmn_load(const char *path, struct CgGmmN **out);

// Writes a JSON model file.
//
// # Safety
// `g` must be live; `path` must be a NUL-terminated string.
enum CgStatus cg_gmmn_save(const struct CgGmmN *g, const char *path);

// Releases a mixture. Null is ignored.
//
// # Safety
// `g` must come from this library and not be used afterwards.
void cg_gmmn_free(struct CgGmmN *g);

// Dimension, or 0 for null.
//
// # Safety
// `g` must be null or a live handle.
size_t cg_gmmn_dim(const struct CgGmmN *g);

// Number of components, or 0 for null.
//
// # Safety
// `g` must be null or a live handle.
size_t cg_gmmn_len(const struct CgGmmN *g);

// `t` independent uniform directions on the unit sphere in `dim >= 2`
// dimensions, seeded.
//
// # Safety
// `out` must be writable.
enum CgStatus cg_directions_uniform(size_t dim, size_t t, uint64_t seed, struct CgDirections **out);

// `t` evenly spaced planar directions starting at `offset_angle` radians.
//
// # Safety
// `out` must be writable.
enum CgStatus cg_directions_equidistant_2d(size_t t,
                                           double offset_angle,
                                           struct CgDirections **out);

// Releases a direction set. Null is ignored.
//
// # Safety
// `d` must come from this library and not be used afterwards.
void cg_directions_free(struct CgDirections *d);

// Number of directions, or 0 for null.
//
// # Safety
// `d` must be null or a live handle.
size_t cg_directions_len(const struct CgDirections *d);

// Sliced squared Cramér 2-distance estimate over `dirs`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CgStatus cg_sliced_c2_squared(const struct CgGmmN *a,
                                   const struct CgGmmN *b,
                                   const struct CgDirections *dirs,
                                   double *out);

// Sliced distance and its gradient with respect to `a`. With `n` components
// and dimension `dim`, `d_weights` holds `n` values, `d_means` `n * dim` and
// `d_scales` `n * dim * dim` (row-major per component).
//
// # Safety
// Handles must be live; output arrays must have the stated lengths.
enum CgStatus cg_sliced_c2_squared_grad(const struct CgGmmN *a,
                                        const struct CgGmmN *b,
                                        const struct CgDirections *dirs,
                                        double *loss,
                                        double *d_weights,
                                        double *d_means,
                                        double *d_scales);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRAMER_GMM_H */
