#ifndef EXCURSION_KIT_H
#define EXCURSION_KIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EkSeKind {
  EK_SE_KIND_NAIVE = 0,
  EK_SE_KIND_CORRECTED = 1,
  EK_SE_KIND_CLUSTER = 2,
} EkSeKind;

typedef enum EkStatus {
  EK_STATUS_OK = 0,
  EK_STATUS_NULL_POINTER = 1,
  EK_STATUS_INVALID_UTF8 = 2,
  EK_STATUS_CONFIG = 3,
  EK_STATUS_DATA = 4,
  EK_STATUS_NUMERICAL = 5,
  EK_STATUS_DEGENERATE_ARM = 6,
  EK_STATUS_DEGENERATE_FOLD = 7,
  EK_STATUS_DEGENERATE_CLUSTER = 8,
  EK_STATUS_SCHEMA = 9,
  EK_STATUS_PARSE = 10,
  EK_STATUS_IO = 11,
  EK_STATUS_JSON = 12,
  EK_STATUS_PANIC = 13,
} EkStatus;

/**
 * Opaque panel handle.
 */
typedef struct EkPanel EkPanel;

/**
 * Opaque estimate handle.
 */
typedef struct EkReport EkReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *ek_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Free with `ek_string_free`.
 */
char *ek_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed at most once.
 */
void ek_string_free(char *s);

/**
 * Parses a panel archive document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be writable.
 */
enum EkStatus ek_panel_from_json(const char *json, struct EkPanel **out);

/**
 * Loads and derives a wearable dataset with a named recipe (`pamap2`, `mhealth`).
 * `scenario` may be NULL (full covariate set); `stride` 0 means 1.
 *
 * # Safety
 * String arguments must be NULL or valid NUL-terminated strings; `out` must be writable.
 */
enum EkStatus ek_panel_from_preset(const char *dir,
                                   const char *recipe,
                                   const char *scenario,
                                   size_t stride,
                                   struct EkPanel **out);

/**
 * # Safety
 * `panel` must be NULL or a handle from this library, freed at most once.
 */
void ek_panel_free(struct EkPanel *panel);

/**
 * # Safety
 * `panel` must be NULL or a live handle.
 */
size_t ek_panel_n_subjects(const struct EkPanel *panel);

/**
 * # Safety
 * `panel` must be NULL or a live handle.
 */
size_t ek_panel_n_rows(const struct EkPanel *panel);

/**
 * Serializes the panel archive.
 *
 * # Safety
 * `panel` must be a live handle; `out` must be writable.
 */
enum EkStatus ek_panel_to_json(const struct EkPanel *panel, char **out);

/**
 * Runs one estimator. `options_json` may be NULL or a JSON object with any of
 * `nuisance`, `scheme`, `trunc`, `critical`, `adjustment`, `se_basis`, `level`,
 * `seed`, `ridge_lambda`, `treatment_columns`, `outcome_columns`, `moderators`.
 *
 * # Safety
 * `panel` must be a live handle; strings must be NULL or NUL-terminated; `out` must be writable.
 */
enum EkStatus ek_estimate(const struct EkPanel *panel,
                          const char *method,
                          const char *options_json,
                          struct EkReport **out);

/**
 * # Safety
 * `report` must be NULL or a handle from this library, freed at most once.
 */
void ek_report_free(struct EkReport *report);

/**
 * Point estimate, or NaN for a NULL handle.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double ek_report_tau(const struct EkReport *report);

/**
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t ek_report_n_clusters(const struct EkReport *report);

/**
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum EkStatus ek_report_se(const struct EkReport *report, enum EkSeKind kind, double *out);

/**
 * Primary confidence interval.
 *
 * # Safety
 * `report` must be a live handle; `lo` and `hi` must be writable.
 */
enum EkStatus ek_report_ci(const struct EkReport *report, double *lo, double *hi);

/**
 * Report record as JSON; `include_influence` non-zero keeps the influence vector.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum EkStatus ek_report_to_json(const struct EkReport *report,
                                int32_t include_influence,
                                char **out);

/**
 * Runs every scenario of a TOML simulation config and returns a JSON array of
 * per-(scenario, method) records. `workers` 0 uses available parallelism.
 *
 * # Safety
 * `config_toml` must be a valid NUL-terminated string; `out` must be writable.
 */
enum EkStatus ek_simulate(const char *config_toml, size_t workers, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXCURSION_KIT_H */
