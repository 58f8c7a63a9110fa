#ifndef HFTMFG_H
#define HFTMFG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every exported function.
 */
typedef enum HftmfgStatus {
  HFTMFG_STATUS_OK = 0,
  HFTMFG_STATUS_NULL_POINTER = 1,
  HFTMFG_STATUS_INVALID_UTF8 = 2,
  HFTMFG_STATUS_IO = 3,
  HFTMFG_STATUS_PARSE = 4,
  HFTMFG_STATUS_VALIDATION = 5,
  HFTMFG_STATUS_SOLVER = 6,
  HFTMFG_STATUS_BUFFER_TOO_SMALL = 7,
  HFTMFG_STATUS_PANIC = 8,
} HftmfgStatus;

/**
 * Validated model configuration.
 */
typedef struct HftmfgConfig HftmfgConfig;

/**
 * Solved equilibrium (partial or overall, following the config's mode).
 */
typedef struct HftmfgEquilibrium HftmfgEquilibrium;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hftmfg_version(void);

/**
 * Length in bytes of the calling thread's last error message, excluding
 * the terminating NUL.
 */
size_t hftmfg_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
enum HftmfgStatus hftmfg_last_error_message(char *buf, size_t len);

/**
 * Parses and validates a JSON config.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum HftmfgStatus hftmfg_config_from_json(const char *json, struct HftmfgConfig **out);

/**
 * Reads, parses and validates a JSON config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HftmfgStatus hftmfg_config_from_file(const char *path, struct HftmfgConfig **out);

/**
 * Releases a config. Null is ignored.
 *
 * # Safety
 * `cfg` must come from this library and not be used afterwards.
 */
void hftmfg_config_free(struct HftmfgConfig *cfg);

/**
 * Sets the solver resolution (steps per unit time) and revalidates.
 *
 * # Safety
 * `cfg` must be a live config handle.
 */
enum HftmfgStatus hftmfg_config_set_grid(struct HftmfgConfig *cfg, size_t steps_per_unit_time);

/**
 * Number of aversion states and of LT trade dates.
 *
 * # Safety
 * `cfg` must be a live config handle; outputs must be writable.
 */
enum HftmfgStatus hftmfg_config_dimensions(const struct HftmfgConfig *cfg,
                                           size_t *n_states,
                                           size_t *n_trades);

/**
 * 1 when the config asks for the overall equilibrium, 0 for partial.
 *
 * # Safety
 * `cfg` must be a live config handle; `overall` must be writable.
 */
enum HftmfgStatus hftmfg_config_is_overall(const struct HftmfgConfig *cfg, int32_t *overall);

/**
 * Solves the equilibrium described by `cfg`.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum HftmfgStatus hftmfg_solve(const struct HftmfgConfig *cfg, struct HftmfgEquilibrium **out);

/**
 * Releases an equilibrium. Null is ignored.
 *
 * # Safety
 * `eq` must come from this library and not be used afterwards.
 */
void hftmfg_equilibrium_free(struct HftmfgEquilibrium *eq);

/**
 * Number of grid nodes; trade dates are counted twice (left limit and
 * value).
 *
 * # Safety
 * `eq` must be a live handle; `out` must be writable.
 */
enum HftmfgStatus hftmfg_equilibrium_node_count(const struct HftmfgEquilibrium *eq, size_t *out);

/**
 * Copies node times and the aggregate `E` and `mu` into caller buffers of
 * at least `hftmfg_equilibrium_node_count` entries.
 *
 * # Safety
 * `eq` must be a live handle; each buffer must hold `len` doubles.
 */
enum HftmfgStatus hftmfg_equilibrium_aggregate(const struct HftmfgEquilibrium *eq,
                                               double *times,
                                               double *e_agg,
                                               double *mu_agg,
                                               size_t len);

/**
 * Copies the LT schedule (the equilibrium `xi*` in overall mode) into
 * `xi`, which must hold at least one entry per trade date.
 *
 * # Safety
 * `eq` must be a live handle; `xi` must hold `len` doubles.
 */
enum HftmfgStatus hftmfg_equilibrium_schedule(const struct HftmfgEquilibrium *eq,
                                              double *xi,
                                              size_t len);

/**
 * Expected LT profit without and with the HFT population.
 *
 * # Safety
 * `eq` must be a live handle; outputs must be writable.
 */
enum HftmfgStatus hftmfg_equilibrium_profit(const struct HftmfgEquilibrium *eq,
                                            double *profit_no_hft,
                                            double *profit_with_hft);

/**
 * Terminal-condition residual and the worst speed-jump residual.
 *
 * # Safety
 * `eq` must be a live handle; outputs must be writable.
 */
enum HftmfgStatus hftmfg_equilibrium_residuals(const struct HftmfgEquilibrium *eq,
                                               double *terminal,
                                               double *worst_jump);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HFTMFG_H */
