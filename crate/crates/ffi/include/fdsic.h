#ifndef FDSIC_H
#define FDSIC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status of every fallible call. The nonzero codes 2 to 4 match the exit
// codes of the `fdsic` command line.
typedef enum FdsicStatus {
  FDSIC_STATUS_OK = 0,
  FDSIC_STATUS_NULL_POINTER = 1,
  FDSIC_STATUS_CONFIG = 2,
  FDSIC_STATUS_NUMERIC = 3,
  FDSIC_STATUS_IO = 4,
  FDSIC_STATUS_BUFFER_TOO_SMALL = 5,
  FDSIC_STATUS_PANIC = 6,
} FdsicStatus;

// Selects one of the two signals of a dataset.
typedef enum FdsicSignal {
  // Transmitted samples x(n).
  FDSIC_SIGNAL_TX = 0,
  // Received self-interference y(n).
  FDSIC_SIGNAL_RX = 1,
} FdsicSignal;

typedef enum FdsicKind {
  FDSIC_KIND_LINEAR = 0,
  FDSIC_KIND_POLY = 1,
  FDSIC_KIND_NN = 2,
} FdsicKind;

// Opaque dataset handle.
typedef struct FdsicDataset FdsicDataset;

// Opaque canceller handle.
typedef struct FdsicModel FdsicModel;

// Shape and training settings of `fdsic_model_fit`. Start from
// `fdsic_fit_params_default`.
typedef struct FdsicFitParams {
  enum FdsicKind kind;
  size_t memory;
  // Odd nonlinearity order; poly only.
  size_t order;
  // Hidden neurons; nn only.
  size_t hidden;
  // Ridge term of the least-squares fits.
  double lambda;
  // Leading fraction of the record used for fitting.
  double fit_fraction;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  // Nonzero selects Adam, zero plain SGD.
  uint8_t adam;
  uint64_t seed;
  double train_fraction;
} FdsicFitParams;

// Timing of one pipeline simulation.
typedef struct FdsicCycleReport {
  uint64_t latency;
  uint64_t first_output;
  uint64_t cycles_per_sample;
  uint64_t stall_cycles;
  uint64_t starved_cycles;
  uint64_t total_cycles;
  uint64_t samples;
  // Simulated outputs that differ from the fixed-point reference.
  uint64_t mismatches;
} FdsicCycleReport;

typedef struct FdsicOpCount {
  uint64_t mults;
  uint64_t adds;
  uint64_t params;
} FdsicOpCount;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null. Valid until
// the next failing call on this thread.
const char *fdsic_last_error(void);

// Library version as a static NUL-terminated string.
const char *fdsic_version(void);

// Generates the synthetic dataset described by `config_toml` (flat TOML;
// null or empty selects every default).
//
// # Safety
// `config_toml` is null or a NUL-terminated string; `out` is writable.
enum FdsicStatus fdsic_dataset_generate(const char *config_toml, struct FdsicDataset **out);

// Wraps caller-provided `x` and `y` of `n` complex samples each.
//
// # Safety
// `x` and `y` point to `2 n` doubles each; `out` is writable.
enum FdsicStatus fdsic_dataset_from_samples(const double *x,
                                            const double *y,
                                            size_t n,
                                            double sample_rate_hz,
                                            struct FdsicDataset **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum FdsicStatus fdsic_dataset_load(const char *path, struct FdsicDataset **out);

// # Safety
// `ds` is a live handle; `path` is a NUL-terminated string.
enum FdsicStatus fdsic_dataset_save(const struct FdsicDataset *ds, const char *path);

// Number of complex samples, 0 for a null handle.
//
// # Safety
// `ds` is null or a live handle.
size_t fdsic_dataset_len(const struct FdsicDataset *ds);

// Copies one signal into `buf`, which holds `capacity` complex samples.
//
// # Safety
// `ds` is a live handle; `buf` points to `2 capacity` doubles.
enum FdsicStatus fdsic_dataset_copy(const struct FdsicDataset *ds,
                                    enum FdsicSignal which,
                                    double *buf,
                                    size_t capacity);

// # Safety
// `ds` is null or a handle not freed before.
void fdsic_dataset_free(struct FdsicDataset *ds);

// Defaults for `kind`: memory 13, order 7, 18 hidden neurons, 70 % fit.
struct FdsicFitParams fdsic_fit_params_default(enum FdsicKind kind);

// Fits a canceller on the leading `fit_fraction` of the dataset.
//
// # Safety
// `ds` is a live handle; `params` is readable; `out` is writable.
enum FdsicStatus fdsic_model_fit(const struct FdsicDataset *ds,
                                 const struct FdsicFitParams *params,
                                 struct FdsicModel **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum FdsicStatus fdsic_model_load(const char *path, struct FdsicModel **out);

// # Safety
// `model` is a live handle; `path` is a NUL-terminated string.
enum FdsicStatus fdsic_model_save(const struct FdsicModel *model, const char *path);

// Real-valued parameter count, 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t fdsic_model_real_params(const struct FdsicModel *model);

// Floating-point SI estimate of `n` transmit samples into `y_hat`.
//
// # Safety
// `model` is a live handle; `x` and `y_hat` point to `2 n` doubles each.
enum FdsicStatus fdsic_model_predict(const struct FdsicModel *model,
                                     const double *x,
                                     size_t n,
                                     double *y_hat);

// Held-out cancellation in dB (negative is better) after the leading
// `fit_fraction` of the record. `total_bits` 0 evaluates the floating-point
// model, otherwise the calibrated fixed-point datapath of that width.
//
// # Safety
// `model` and `ds` are live handles; `out_db` is writable.
enum FdsicStatus fdsic_model_cancellation_db(const struct FdsicModel *model,
                                             const struct FdsicDataset *ds,
                                             double fit_fraction,
                                             uint32_t total_bits,
                                             double *out_db);

// Runs the cycle-accurate pipeline of an nn or poly canceller quantized to
// `total_bits` on `n` dataset samples from `start`, with the default
// processing-element layout, and compares it with the fixed-point reference.
//
// # Safety
// `model` and `ds` are live handles; `report` is writable.
enum FdsicStatus fdsic_model_simulate(const struct FdsicModel *model,
                                      const struct FdsicDataset *ds,
                                      uint32_t total_bits,
                                      size_t start,
                                      size_t n,
                                      struct FdsicCycleReport *report);

// # Safety
// `model` is null or a handle not freed before.
void fdsic_model_free(struct FdsicModel *model);

// Real multiplications, additions and parameters per cancelled sample.
// `order` is read for poly and `hidden` for nn.
//
// # Safety
// `out` is writable.
enum FdsicStatus fdsic_complexity(enum FdsicKind kind,
                                  size_t memory,
                                  size_t order,
                                  size_t hidden,
                                  struct FdsicOpCount *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDSIC_H */
