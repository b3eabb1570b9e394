/* Generated from the sunnpest-ffi crate. Do not edit. */

#ifndef SUNNPEST_H
#define SUNNPEST_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_IO = 3,
  SP_STATUS_PARSE = 4,
  SP_STATUS_VERSION = 5,
  SP_STATUS_ARITY_MISMATCH = 6,
  SP_STATUS_BUFFER_TOO_SMALL = 7,
  SP_STATUS_INTERNAL = 8,
} SpStatus;

typedef enum SpWarning {
  SP_WARNING_NO_ACTION = 0,
  SP_WARNING_WATCH = 1,
  SP_WARNING_SPRAY_WINDOW = 2,
} SpWarning;

/*
 Opaque handle to a loaded bundle.
 */
typedef struct SpBundle SpBundle;

typedef struct SpInterval {
  double lower;
  double upper;
} SpInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *sp_version(void);

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *sp_last_error_message(void);

/*
 Loads and validates a bundle file. On success `*out` owns a handle that
 must be released with `sp_bundle_free`; on failure `*out` is set to null.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_bundle_load(const char *path, struct SpBundle **out);

/*
 Parses a bundle from `len` bytes of JSON.

 # Safety
 `json` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum SpStatus sp_bundle_from_json(const char *json, size_t len, struct SpBundle **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `b` must come from a loader in this library and not be freed twice.
 */
void sp_bundle_free(struct SpBundle *b);

/*
 Number of features a prediction call expects.

 # Safety
 `b` must be a live handle and `out` a valid pointer.
 */
enum SpStatus sp_bundle_feature_count(const struct SpBundle *b, size_t *out);

/*
 Copies the name of feature `index` into `buf` with a trailing NUL.
 `*needed` receives the name length without the NUL, even when `buf` is
 too small, so callers can size a second attempt.

 # Safety
 `buf` must have `buf_len` writable bytes; `needed` may be null.
 */
enum SpStatus sp_bundle_feature_name(const struct SpBundle *b,
                                     size_t index,
                                     char *buf,
                                     size_t buf_len,
                                     size_t *needed);

/*
 Predicts the phase (1..3) and writes the leaf class distribution to
 `distribution[0..3]`.

 # Safety
 `features` must hold `n` values, `distribution` have room for 3.
 */
enum SpStatus sp_predict_phase(const struct SpBundle *b,
                               const double *features_ptr,
                               size_t n,
                               uint8_t *phase,
                               double *distribution);

/*
 Predicts the five stage shares into `ratios[0..5]`. `*degenerate` is set
 when every stage forest predicted zero and the shares are a placeholder.

 # Safety
 `features` must hold `n` values, `ratios` have room for 5; `degenerate` may be null.
 */
enum SpStatus sp_predict_ratios(const struct SpBundle *b,
                                const double *features_ptr,
                                size_t n,
                                double *ratios,
                                bool *degenerate);

/*
 Spray decision. Bit `s - 1` of `watched_mask` selects stage `s`.

 # Safety
 `ratios` must hold 5 values summing to one; `out` must be valid.
 */
enum SpStatus sp_warning_decision(uint8_t phase,
                                  const double *ratios,
                                  uint8_t watched_mask,
                                  double threshold,
                                  bool require_phase3,
                                  enum SpWarning *out);

/*
 Normal-approximation interval for an error rate measured on `n` cases.

 # Safety
 `out` must be a valid pointer.
 */
enum SpStatus sp_ci_proportion(double error_rate, uint64_t n, double level, struct SpInterval *out);

/*
 Student-t interval for the mean of `n` values.

 # Safety
 `values` must hold `n` values and `out` be a valid pointer.
 */
enum SpStatus sp_ci_mean(const double *values, size_t n, double level, struct SpInterval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUNNPEST_H */
