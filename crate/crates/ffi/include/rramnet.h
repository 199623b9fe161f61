#ifndef RRAMNET_H
#define RRAMNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RramStatus {
  RRAM_STATUS_OK = 0,
  RRAM_STATUS_NULL_POINTER = 1,
  RRAM_STATUS_DOMAIN = 2,
  RRAM_STATUS_SHAPE = 3,
  RRAM_STATUS_UNSUPPORTED = 4,
  RRAM_STATUS_IO = 5,
  RRAM_STATUS_FORMAT = 6,
  RRAM_STATUS_NUMERICAL = 7,
  RRAM_STATUS_BUFFER_TOO_SMALL = 8,
  RRAM_STATUS_PANIC = 9,
  RRAM_STATUS_OTHER = 10,
} RramStatus;

// A differential pair of crossbar arrays holding one weight matrix.
typedef struct RramCrossbar RramCrossbar;

// A device I-V law.
typedef struct RramDevice RramDevice;

// A trained multilayer perceptron.
typedef struct RramModel RramModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `cap` bytes. Returns the full message length excluding NUL.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t rram_last_error(char *buf, size_t cap);

// Half-bias nonlinearity `k = 2·cosh(b/2)`.
//
// # Safety
// `out` must be valid for one write.
enum RramStatus rram_k_of_b(double b, double *out);

// Inverse of [`rram_k_of_b`] for `k ≥ 2`.
//
// # Safety
// `out` must be valid for one write.
enum RramStatus rram_b_of_k(double k, double *out);

// Sinh device `I = g·sinh(b·V)` with conductances in `[g_min, g_max]`.
//
// # Safety
// `out` must be valid for one write.
enum RramStatus rram_sinh_device_new(double b,
                                     double g_min,
                                     double g_max,
                                     double v_read_max,
                                     struct RramDevice **out);

// The fitted complex device with default constants.
//
// # Safety
// `out` must be valid for one write.
enum RramStatus rram_complex_device_new(struct RramDevice **out);

// # Safety
// `dev` must be null or a handle from a device constructor, freed once.
void rram_device_free(struct RramDevice *dev);

// Cell current at `state` (conductance or complex-device state) and
// read voltage `v`.
//
// # Safety
// `dev` must be a live handle and `out` valid for one write.
enum RramStatus rram_device_current(const struct RramDevice *dev,
                                    double state,
                                    double v,
                                    double *out);

// `∂I/∂state` and `∂I/∂v`.
//
// # Safety
// `dev` must be a live handle; the outputs must be valid for one write each.
enum RramStatus rram_device_partials(const struct RramDevice *dev,
                                     double state,
                                     double v,
                                     double *d_state,
                                     double *d_v);

// Loads a checkpoint written by the `rramnet` tool.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one write.
enum RramStatus rram_model_load(const char *path, struct RramModel **out);

// # Safety
// `model` must be null or a handle from [`rram_model_load`], freed once.
void rram_model_free(struct RramModel *model);

// Layer sizes, input first. `*len` receives the count even when `cap` is
// too small.
//
// # Safety
// `model` must be a live handle, `dims` valid for `cap` writes, `len` null
// or valid for one write.
enum RramStatus rram_model_dims(const struct RramModel *model,
                                size_t *dims,
                                size_t cap,
                                size_t *len);

// Logits for `rows` row-major inputs of width `cols`.
//
// # Safety
// `x` must hold `rows·cols` values; `logits` must be valid for `cap`
// writes; `written` null or valid for one write.
enum RramStatus rram_model_forward(const struct RramModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t cols,
                                   double *logits,
                                   size_t cap,
                                   size_t *written);

// Maps a row-major `rows × cols` weight matrix onto a differential crossbar
// pair of the given device.
//
// # Safety
// `dev` must be a live handle, `w` hold `rows·cols` values and `out` be
// valid for one write.
enum RramStatus rram_crossbar_new(const double *w,
                                  size_t rows,
                                  size_t cols,
                                  const struct RramDevice *dev,
                                  struct RramCrossbar **out);

// # Safety
// `xb` must be null or a handle from [`rram_crossbar_new`], freed once.
void rram_crossbar_free(struct RramCrossbar *xb);

// Differential column currents for row voltages `v` (length = rows).
//
// # Safety
// `xb` must be a live handle, `v` hold `len` values, `out` be valid for
// `cap` writes and `written` null or valid for one write.
enum RramStatus rram_crossbar_readout(const struct RramCrossbar *xb,
                                      const double *v,
                                      size_t len,
                                      double *out,
                                      size_t cap,
                                      size_t *written);

// Converts differential currents back to weighted sums (sinh devices).
//
// # Safety
// As for [`rram_crossbar_readout`], with `currents` holding `len` values.
enum RramStatus rram_crossbar_unmap(const struct RramCrossbar *xb,
                                    const double *currents,
                                    size_t len,
                                    double *out,
                                    size_t cap,
                                    size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RRAMNET_H */
