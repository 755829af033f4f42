/* SPDX-License-Identifier: Apache-2.0 */

#ifndef CLOAKSIM_H
#define CLOAKSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CLOAKSIM_OK 0

// Physics or integration failure.
#define CLOAKSIM_ERR_PHYSICS 1

// Parse error, unknown key, bad override or unsupported combination.
#define CLOAKSIM_ERR_CONFIG 2

// Null pointer, bad UTF-8 or out-of-range argument.
#define CLOAKSIM_ERR_ARGUMENT 3

// A panic was caught at the boundary.
#define CLOAKSIM_ERR_INTERNAL 4

// Result of a scenario run.
typedef struct CloaksimResult CloaksimResult;

// Parsed scenario.
typedef struct CloaksimScenario CloaksimScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *cloaksim_last_error(void);

// Library version as a static string.
const char *cloaksim_version(void);

// Parses scenario JSON text.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
int32_t cloaksim_scenario_parse(const char *json, struct CloaksimScenario **out);

// Loads a scenario bundled with the library by name.
//
// # Safety
// `name` must be a valid NUL-terminated string and `out` a valid pointer.
int32_t cloaksim_scenario_bundled(const char *name, struct CloaksimScenario **out);

// Applies one `key=value` override (dotted path or unique key).
//
// # Safety
// `sc` must come from this library; `assignment` must be NUL-terminated.
int32_t cloaksim_scenario_set(struct CloaksimScenario *sc, const char *assignment);

// Canonical JSON of the scenario; release with [`cloaksim_string_free`].
//
// # Safety
// `sc` must come from this library or be null.
char *cloaksim_scenario_json(const struct CloaksimScenario *sc);

// # Safety
// `sc` must come from this library or be null; it is invalid afterwards.
void cloaksim_scenario_free(struct CloaksimScenario *sc);

// Runs the scenario in memory; no files are written.
//
// # Safety
// `sc` must come from this library and `out` must be a valid pointer.
int32_t cloaksim_run(const struct CloaksimScenario *sc, struct CloaksimResult **out);

// Summary JSON; owned by the result.
//
// # Safety
// `res` must come from this library or be null.
const char *cloaksim_result_summary(const struct CloaksimResult *res);

// # Safety
// `res` must come from this library or be null.
size_t cloaksim_result_table_count(const struct CloaksimResult *res);

// Name of table `index`; owned by the result. Null when out of range.
//
// # Safety
// `res` must come from this library or be null.
const char *cloaksim_result_table_name(const struct CloaksimResult *res, size_t index);

// CSV text of table `index`; owned by the result. Null when out of range.
//
// # Safety
// `res` must come from this library or be null.
const char *cloaksim_result_table_csv(const struct CloaksimResult *res, size_t index);

// # Safety
// `res` must come from this library or be null; it is invalid afterwards.
void cloaksim_result_free(struct CloaksimResult *res);

// Samples the scenario's cancellation tone at `rate_gsps` and returns CSV
// text in `out`; release it with [`cloaksim_string_free`].
//
// # Safety
// `sc` must come from this library and `out` must be a valid pointer.
int32_t cloaksim_export_tone(const struct CloaksimScenario *sc, double rate_gsps, char **out);

// Closed-form cancellation tone for a constant sine cavity drive, in MHz
// (value/2pi), at `n` times `t_ns` written to `out_mhz`.
//
// # Safety
// `t_ns` and `out_mhz` must each point to `n` valid doubles.
int32_t cloaksim_closed_form_tone(double eps1_mhz,
                                  double omega1_ghz,
                                  double phi1_rad,
                                  double omega_r_ghz,
                                  double kappa_mhz,
                                  double g_mhz,
                                  const double *t_ns,
                                  size_t n,
                                  double *out_mhz);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library or be null; it is invalid afterwards.
void cloaksim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOAKSIM_H */
