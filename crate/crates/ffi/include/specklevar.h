#ifndef SPECKLEVAR_H
#define SPECKLEVAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvStatus {
  SV_STATUS_OK = 0,
  SV_STATUS_NULL_POINTER = 1,
  SV_STATUS_INVALID_ARGUMENT = 2,
  SV_STATUS_IO = 3,
  SV_STATUS_FORMAT = 4,
  SV_STATUS_PRECONDITION = 5,
  // The estimator has no value for this input (zero mean vector).
  SV_STATUS_UNDEFINED = 6,
  SV_STATUS_INTERNAL = 7,
  SV_STATUS_PANIC = 8,
} SvStatus;

typedef enum SvKind {
  SV_KIND_R = 0,
  SV_KIND_VV = 1,
  SV_KIND_VN = 2,
  SV_KIND_AZ = 3,
  SV_KIND_SINGLE = 4,
} SvKind;

typedef enum SvPolarity {
  // High values indicate change.
  SV_POLARITY_HIGH = 0,
  // Low values indicate permanent scatterers.
  SV_POLARITY_LOW = 1,
} SvPolarity;

// Opaque 2-D map with per-pixel validity.
typedef struct SvMap SvMap;

// Opaque image stack.
typedef struct SvStack SvStack;

// Estimation settings. `window` and `frame` are only read when `spatial` is
// non-zero; `channel` only for `SV_KIND_SINGLE`.
typedef struct SvEstimator {
  enum SvKind kind;
  size_t channel;
  int32_t spatial;
  size_t window;
  size_t frame;
  int32_t unbiased;
} SvEstimator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sv_version(void);

// Message of the last failed call on this thread ("" after a success).
// Valid until the next call into the library from the same thread.
const char *sv_last_error(void);

enum SvStatus sv_stack_read(const char *path, struct SvStack **out);

enum SvStatus sv_stack_write(const struct SvStack *st, const char *path);

// Copy `n·p·h·w` floats laid out `[t][c][y][x]` into a new real stack.
enum SvStatus sv_stack_from_real(size_t n_time,
                                 size_t n_chan,
                                 size_t height,
                                 size_t width,
                                 const float *data,
                                 struct SvStack **out);

// Copy `2·n·p·h·w` floats of interleaved `(re, im)` pairs into a new
// complex stack.
enum SvStatus sv_stack_from_complex(size_t n_time,
                                    size_t n_chan,
                                    size_t height,
                                    size_t width,
                                    const float *data,
                                    struct SvStack **out);

void sv_stack_free(struct SvStack *st);

// Writes `[n_time, n_chan, height, width]` to `dims` and 1 to
// `is_complex` for complex stacks (either may be null).
enum SvStatus sv_stack_shape(const struct SvStack *st, size_t *dims, int32_t *is_complex);

// Copy samples out. `len` is the number of floats available at `buf`:
// `n·p·h·w` for real stacks, twice that (interleaved) for complex ones.
enum SvStatus sv_stack_data(const struct SvStack *st, float *buf, size_t len);

// Generate a stack from a JSON scenario.
enum SvStatus sv_simulate_json(const char *scenario, struct SvStack **out);

// Average groups of `k` frames of a real stack.
enum SvStatus sv_integrate_time(const struct SvStack *st, size_t k, struct SvStack **out);

enum SvStatus sv_compute_map(const struct SvStack *st, struct SvEstimator est, struct SvMap **out);

// Activity map `1/γ²`. Saturated pixels stay valid in `out`; if
// `saturated` is non-null it receives a 0/1 map of them.
enum SvStatus sv_vmai_map(const struct SvStack *st,
                          struct SvEstimator est,
                          struct SvMap **out,
                          struct SvMap **saturated);

enum SvStatus sv_temporal_dop(const struct SvStack *st, struct SvMap **out);

enum SvStatus sv_inverse_dop(const struct SvMap *dop, struct SvMap **out);

enum SvStatus sv_map_read(const char *path, struct SvMap **out);

enum SvStatus sv_map_write(const struct SvMap *map, const char *path);

void sv_map_free(struct SvMap *map);

enum SvStatus sv_map_dims(const struct SvMap *map, size_t *height, size_t *width);

// Copy the `height·width` row-major values. Undefined pixels hold -1.
enum SvStatus sv_map_values(const struct SvMap *map, double *buf, size_t len);

// Copy the validity flags as 0/1 bytes.
enum SvStatus sv_map_valid(const struct SvMap *map, uint8_t *buf, size_t len);

enum SvStatus sv_pearson(const struct SvMap *a, const struct SvMap *b, double *out);

// Area under the ROC curve of `map` against a 0/1 `truth` map.
enum SvStatus sv_roc_auc(const struct SvMap *map,
                         const struct SvMap *truth,
                         enum SvPolarity polarity,
                         double *out);

// Coefficient of variation from a mean vector `mu[p]` and a row-major
// covariance `cov[p·p]`. Returns `SV_STATUS_UNDEFINED` where the estimator
// has no value.
enum SvStatus sv_mcv(const double *mu,
                     const double *cov,
                     size_t p,
                     enum SvKind kind,
                     size_t channel,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECKLEVAR_H */
