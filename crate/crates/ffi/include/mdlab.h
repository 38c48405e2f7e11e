#ifndef MDLAB_H
#define MDLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdlabStatus {
  MDLAB_STATUS_OK = 0,
  MDLAB_STATUS_NULL_POINTER = 1,
  MDLAB_STATUS_INVALID_UTF8 = 2,
  MDLAB_STATUS_CONFIG = 3,
  MDLAB_STATUS_IO = 4,
  MDLAB_STATUS_RUNTIME = 5,
  MDLAB_STATUS_INVALID_ARGUMENT = 6,
  MDLAB_STATUS_BUFFER_TOO_SMALL = 7,
  MDLAB_STATUS_PANIC = 8,
} MdlabStatus;

/**
 * Experiment configuration.
 */
typedef struct MdlabConfig MdlabConfig;

/**
 * Result of a run.
 */
typedef struct MdlabReport MdlabReport;

/**
 * Periodic lattice of `n[0]×n[1]×n[2]` nodes, C order, z fastest.
 */
typedef struct MdlabGrid {
  size_t n[3];
  double spacing[3];
} MdlabGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *mdlab_last_error_message(void);

/**
 * Preset configuration for a named experiment.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MdlabStatus mdlab_config_preset(const char *name, struct MdlabConfig **out);

/**
 * Configuration parsed from TOML text; absent keys come from the preset.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MdlabStatus mdlab_config_from_toml(const char *text, struct MdlabConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be freed.
 */
enum MdlabStatus mdlab_config_set_seed(struct MdlabConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must come from this library and not be freed.
 */
enum MdlabStatus mdlab_config_set_order(struct MdlabConfig *config, uint32_t order);

/**
 * # Safety
 * `config` must come from this library or be null; it is invalid afterwards.
 */
void mdlab_config_free(struct MdlabConfig *config);

/**
 * Runs the configured experiment. A report is produced even when checks
 * fail; inspect it with [`mdlab_report_exit_code`].
 *
 * # Safety
 * `config` must come from this library and `out` be writable.
 */
enum MdlabStatus mdlab_run(const struct MdlabConfig *config, struct MdlabReport **out);

/**
 * 1 when every check passed, 0 otherwise or for a null report.
 *
 * # Safety
 * `report` must come from this library or be null.
 */
int32_t mdlab_report_passed(const struct MdlabReport *report);

/**
 * Process exit code the CLI would return for this report; -1 for null.
 *
 * # Safety
 * `report` must come from this library or be null.
 */
int32_t mdlab_report_exit_code(const struct MdlabReport *report);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
size_t mdlab_report_num_checks(const struct MdlabReport *report);

/**
 * Value, tolerance and verdict of check `index`. Any out pointer may be null.
 *
 * # Safety
 * `report` must come from this library; non-null out pointers must be writable.
 */
enum MdlabStatus mdlab_report_check(const struct MdlabReport *report,
                                    size_t index,
                                    double *value,
                                    double *tolerance,
                                    int32_t *passed);

/**
 * Copies the record stream (no header line) into `buf` with a trailing
 * NUL. `needed` receives the byte count including the NUL; on
 * `BufferTooSmall` nothing is copied.
 *
 * # Safety
 * `buf` must hold `capacity` bytes or be null with `capacity == 0`.
 */
enum MdlabStatus mdlab_report_records(const struct MdlabReport *report,
                                      char *buf,
                                      size_t capacity,
                                      size_t *needed);

/**
 * Writes records, invariants, summary and snapshots into `dir`.
 *
 * # Safety
 * `report` must come from this library; `dir` must be NUL-terminated.
 */
enum MdlabStatus mdlab_report_emit(const struct MdlabReport *report, const char *dir);

/**
 * # Safety
 * `report` must come from this library or be null; it is invalid afterwards.
 */
void mdlab_report_free(struct MdlabReport *report);

/**
 * Least-squares order of `errors` against `spacings`. `pairwise` (may be
 * null) receives `count − 1` entries, NaN where undefined.
 *
 * # Safety
 * `spacings` and `errors` must hold `count` values; `pairwise`, if set,
 * `count − 1`.
 */
enum MdlabStatus mdlab_convergence_order(const double *spacings,
                                         const double *errors,
                                         size_t count,
                                         double *aggregate,
                                         double *pairwise);

/**
 * Discrete divergence of `(fx, fy, fz)` into `out`.
 *
 * # Safety
 * All buffers must hold `n[0]·n[1]·n[2]` values.
 */
enum MdlabStatus mdlab_div(struct MdlabGrid grid,
                           uint32_t order,
                           const double *fx,
                           const double *fy,
                           const double *fz,
                           double *out);

/**
 * Discrete curl of `(fx, fy, fz)` into `(ox, oy, oz)`.
 *
 * # Safety
 * All buffers must hold `n[0]·n[1]·n[2]` values.
 */
enum MdlabStatus mdlab_curl(struct MdlabGrid grid,
                            uint32_t order,
                            const double *fx,
                            const double *fy,
                            const double *fz,
                            double *ox,
                            double *oy,
                            double *oz);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDLAB_H */
