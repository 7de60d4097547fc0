#ifndef OTFS_MIMO_H
#define OTFS_MIMO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OtfsStatus {
  OTFS_STATUS_OK = 0,
  OTFS_STATUS_NULL_POINTER = 1,
  OTFS_STATUS_INVALID_ARGUMENT = 2,
  OTFS_STATUS_CONFIG = 3,
  OTFS_STATUS_IO = 4,
  OTFS_STATUS_PARSE = 5,
  OTFS_STATUS_NUMERIC = 6,
  OTFS_STATUS_OVERFLOW = 7,
  OTFS_STATUS_PANIC = 8,
} OtfsStatus;

/**
 * Trained network detector with its input scaler.
 */
typedef struct OtfsModel OtfsModel;

/**
 * Simulator bound to one configuration. Test frames are simulated on first use.
 */
typedef struct OtfsSimulator OtfsSimulator;

/**
 * Real-multiplication counts for one configuration.
 */
typedef struct OtfsComplexity {
  uint64_t mld;
  uint64_t mrc_ml_total;
  uint64_t mlp;
  uint64_t cnn;
  uint64_t resnet;
} OtfsComplexity;

/**
 * One BER point.
 */
typedef struct OtfsBerPoint {
  double snr_db;
  uint64_t symbols;
  uint64_t bit_errors;
  double ber;
} OtfsBerPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *otfs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *otfs_version(void);

/**
 * # Safety
 * `out` must point to writable storage for one [`OtfsComplexity`].
 */
enum OtfsStatus otfs_complexity(uint64_t m,
                                uint64_t n,
                                uint64_t nt,
                                uint64_t nr,
                                uint64_t q,
                                struct OtfsComplexity *out);

/**
 * Builds a simulator from a TOML configuration document.
 *
 * # Safety
 * `config_toml` must be NUL-terminated; `out` must be writable.
 */
enum OtfsStatus otfs_simulator_new(const char *config_toml, struct OtfsSimulator **out);

/**
 * # Safety
 * `sim` must come from [`otfs_simulator_new`] and not be used afterwards. NULL is ignored.
 */
void otfs_simulator_free(struct OtfsSimulator *sim);

/**
 * Number of symbols per SNR point the simulator will test.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum OtfsStatus otfs_simulator_test_symbols(const struct OtfsSimulator *sim, uint64_t *out);

/**
 * MLD bit-error rate at each of `count` SNR values.
 *
 * # Safety
 * `snr_db` must hold `count` doubles and `out` room for `count` points.
 */
enum OtfsStatus otfs_simulator_mld_ber(struct OtfsSimulator *sim,
                                       const double *snr_db,
                                       size_t count,
                                       struct OtfsBerPoint *out);

/**
 * Network bit-error rate on the same test frames as [`otfs_simulator_mld_ber`].
 *
 * # Safety
 * As for [`otfs_simulator_mld_ber`]; `model` must be a live handle.
 */
enum OtfsStatus otfs_simulator_model_ber(struct OtfsSimulator *sim,
                                         const struct OtfsModel *model,
                                         const double *snr_db,
                                         size_t count,
                                         struct OtfsBerPoint *out);

/**
 * Loads a checkpoint file written by `otfs-mimo train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum OtfsStatus otfs_model_load(const char *path, struct OtfsModel **out);

/**
 * Parses a checkpoint from its JSON text.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum OtfsStatus otfs_model_from_json(const char *json, struct OtfsModel **out);

/**
 * # Safety
 * `model` must come from a loader and not be used afterwards. NULL is ignored.
 */
void otfs_model_free(struct OtfsModel *model);

/**
 * Constellation order the network classifies into, or 0 for NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
uint32_t otfs_model_order(const struct OtfsModel *model);

/**
 * Classifies `count` samples given as interleaved `[re, im]` pairs.
 *
 * # Safety
 * `features` must hold `2 * count` doubles and `classes` room for `count` values.
 */
enum OtfsStatus otfs_model_predict(const struct OtfsModel *model,
                                   const double *features,
                                   size_t count,
                                   uint32_t *classes);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFS_MIMO_H */
