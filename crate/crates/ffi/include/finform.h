#ifndef FINFORM_H
#define FINFORM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of an FFI call.
 */
typedef enum FinformStatus {
  FINFORM_STATUS_OK = 0,
  FINFORM_STATUS_NULL_POINTER = 1,
  FINFORM_STATUS_INVALID_UTF8 = 2,
  FINFORM_STATUS_INVALID_ARGUMENT = 3,
  FINFORM_STATUS_CONFIG = 4,
  FINFORM_STATUS_PREFLIGHT = 5,
  FINFORM_STATUS_DIVERGED = 6,
  FINFORM_STATUS_SIMULATION = 7,
  FINFORM_STATUS_IO = 8,
  FINFORM_STATUS_BUFFER_TOO_SMALL = 9,
  FINFORM_STATUS_PANIC = 10,
} FinformStatus;

/**
 * Scenario configuration being assembled.
 */
typedef struct FinformConfig FinformConfig;

/**
 * Result of a completed run.
 */
typedef struct FinformTrace FinformTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. Owned by the library.
 */
const char *finform_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *finform_version(void);

/**
 * Creates a configuration for the named scenario (`spring`, `sine`, `abs`, `linear`).
 *
 * # Safety
 * `scenario` must be a NUL-terminated string; `out` must be writable.
 */
enum FinformStatus finform_config_new(const char *scenario, struct FinformConfig **out);

/**
 * Loads an INI configuration file; `scenario` may be null to use the file's `[scenario] name`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `scenario` null or NUL-terminated; `out` must be writable.
 */
enum FinformStatus finform_config_load(const char *path,
                                       const char *scenario,
                                       struct FinformConfig **out);

/**
 * Applies `key=value` or `section.key=value`; the configuration is unchanged on failure.
 *
 * # Safety
 * `config` must come from `finform_config_new`/`finform_config_load`; `assignment` must be NUL-terminated.
 */
enum FinformStatus finform_config_set(struct FinformConfig *config,
                                      const char *assignment);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `config` must be null or a live handle not freed before.
 */
void finform_config_free(struct FinformConfig *config);

/**
 * Runs preflight, simulation and excitation analysis.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum FinformStatus finform_run(const struct FinformConfig *config, struct FinformTrace **out);

/**
 * Number of recorded samples.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum FinformStatus finform_trace_len(const struct FinformTrace *trace, uintptr_t *out);

/**
 * Values per sample of a named channel (`x`, `psi`, `u`, `theta_hat`, `V`, …).
 *
 * # Safety
 * `trace` must be a live handle, `name` NUL-terminated, `out` writable.
 */
enum FinformStatus finform_trace_channel_width(const struct FinformTrace *trace,
                                               const char *name,
                                               uintptr_t *out);

/**
 * Copies a channel row-major into `buf` (`len × width` values).
 *
 * # Safety
 * `buf` must point to `buf_len` writable doubles.
 */
enum FinformStatus finform_trace_channel_copy(const struct FinformTrace *trace,
                                              const char *name,
                                              double *buf,
                                              uintptr_t buf_len);

/**
 * Copies the sample times into `buf`.
 *
 * # Safety
 * `buf` must point to `buf_len` writable doubles.
 */
enum FinformStatus finform_trace_times_copy(const struct FinformTrace *trace,
                                            double *buf,
                                            uintptr_t buf_len);

/**
 * Plain-text run summary, owned by the trace handle.
 *
 * # Safety
 * `trace` must be a live handle; the string dies with it.
 */
const char *finform_trace_summary(const struct FinformTrace *trace);

/**
 * Writes the CSV trace (excitation column over a `2π` window when `with_pe` is nonzero).
 *
 * # Safety
 * `trace` must be a live handle and `path` NUL-terminated.
 */
enum FinformStatus finform_trace_export_csv(const struct FinformTrace *trace,
                                            const char *path,
                                            int32_t with_pe);

/**
 * Braking distance of a wheel run (m).
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum FinformStatus finform_trace_braking_distance(const struct FinformTrace *trace, double *out);

/**
 * Releases a trace; null is ignored.
 *
 * # Safety
 * `trace` must be null or a live handle not freed before.
 */
void finform_trace_free(struct FinformTrace *trace);

/**
 * Steady-state tyre force with default wheel parameters.
 *
 * # Safety
 * `out` must be writable.
 */
enum FinformStatus finform_lugre_friction(double x2, double x3, double theta, double *out);

/**
 * Force-maximising slip for road condition `theta` at wheel speed `x2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FinformStatus finform_optimal_slip(double theta, double x2, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINFORM_H */
