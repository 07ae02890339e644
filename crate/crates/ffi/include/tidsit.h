#ifndef TIDSIT_H
#define TIDSIT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. Values 2 to 5 match the CLI exit codes.
typedef enum TidsitStatus {
  TIDSIT_STATUS_OK = 0,
  // A required pointer argument was NULL.
  TIDSIT_STATUS_NULL_POINTER = 1,
  // Bad argument or configuration.
  TIDSIT_STATUS_CONFIG = 2,
  // Malformed data or checkpoint.
  TIDSIT_STATUS_DATA = 3,
  // Numerical failure (non-finite value, shape contract).
  TIDSIT_STATUS_NUMERIC = 4,
  // File system error.
  TIDSIT_STATUS_IO = 5,
  // A string argument was not valid UTF-8.
  TIDSIT_STATUS_INVALID_UTF8 = 6,
  // Internal panic; the handle involved should be freed.
  TIDSIT_STATUS_PANIC = 7,
} TidsitStatus;

// A loaded checkpoint. Opaque to C; create with [`tidsit_model_load`] and
// release with [`tidsit_model_free`]. Safe to share between threads for
// prediction.
typedef struct TidsitModel TidsitModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// NUL-terminated library version; static storage, never freed.
const char *tidsit_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length plus one,
// or 0 if no error has been recorded. Pass `buf = NULL, len = 0` to query
// the size.
//
// # Safety
// `buf` is NULL or points to `len` writable bytes.
size_t tidsit_last_error_message(char *buf, size_t len);

// Load a checkpoint written by `tidsit train`. On success `*out` owns a new
// handle.
//
// # Safety
// `path` is a NUL-terminated string; `out` is valid for one write.
enum TidsitStatus tidsit_model_load(const char *path, struct TidsitModel **out);

// Release a handle. NULL is ignored.
//
// # Safety
// `model` is NULL or came from [`tidsit_model_load`] and is not used again.
void tidsit_model_free(struct TidsitModel *model);

// Maximum number of samples per cycle (`T`).
//
// # Safety
// `model` is a live handle; `out` is valid for one write.
enum TidsitStatus tidsit_model_pad_len(const struct TidsitModel *model, size_t *out);

// Number of previous SoH values the model expects (`p`).
//
// # Safety
// `model` is a live handle; `out` is valid for one write.
enum TidsitStatus tidsit_model_history_len(const struct TidsitModel *model, size_t *out);

// Number of readings per sample: voltage (V), current (A), temperature (°C).
size_t tidsit_num_features(void);

// Predict the SoH of one discharge cycle.
//
// `timestamps` holds `n` strictly increasing seconds since cycle start and
// `readings` holds `n` rows of voltage, current, temperature in raw units
// (row-major, `3·n` values). `history` holds `history_len` previous SoH
// values, most recent first; pass `history_len = 0` to use the fresh-cell
// fill instead, otherwise it must equal [`tidsit_model_history_len`].
//
// # Safety
// `model` is a live handle; the arrays hold the stated number of values;
// `out` is valid for one write.
enum TidsitStatus tidsit_model_predict(const struct TidsitModel *model,
                                       const double *timestamps,
                                       const double *readings,
                                       size_t n,
                                       const double *history,
                                       size_t history_len,
                                       double *out);

// `c_current / c_rated`.
//
// # Safety
// `out` is valid for one write.
enum TidsitStatus tidsit_compute_soh(double c_current, double c_rated, double *out);

// Root-mean-square error of `n` predictions.
//
// # Safety
// `pred` and `target` hold `n` values; `out` is valid for one write.
enum TidsitStatus tidsit_rmse(const double *pred, const double *target, size_t n, double *out);

// Relative RMSE in percent: `100·sqrt(mean(((pred − true)/true)²))`.
//
// # Safety
// `pred` and `target` hold `n` values; `out` is valid for one write.
enum TidsitStatus tidsit_rmse_percent(const double *pred,
                                      const double *target,
                                      size_t n,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIDSIT_H */
