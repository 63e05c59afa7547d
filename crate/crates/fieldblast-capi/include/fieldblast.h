#ifndef FIELDBLAST_H
#define FIELDBLAST_H

/* Generated by cbindgen from the fieldblast-capi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Oracle validation policy for countermodels and failed goals.
 */
typedef enum FbOracleCheck {
  FbOracleAuto = 0,
  FbOracleOn = 1,
  FbOracleOff = 2,
} FbOracleCheck;

/**
 * Report rendering selector.
 */
typedef enum FbReportFormat {
  FbReportHuman = 0,
  FbReportLines = 1,
} FbReportFormat;

/**
 * Status code returned by fallible functions.
 */
typedef enum FbStatus {
  FbOk = 0,
  FbErrParse = 1,
  FbErrSort = 2,
  FbErrUnsupported = 3,
  FbErrTimeout = 4,
  FbErrResource = 5,
  FbErrIo = 6,
  FbErrInvalidArgument = 7,
  FbErrInternal = 8,
} FbStatus;

/**
 * Verdict of a verification run.
 */
typedef enum FbVerdictStatus {
  FbValid = 0,
  FbInvalid = 1,
  FbUnknown = 2,
} FbVerdictStatus;

/**
 * Opaque parsed problem.
 */
typedef struct FbProblem FbProblem;

/**
 * Opaque verification outcome.
 */
typedef struct FbVerdict FbVerdict;

/**
 * Verification options. Zero timeout or memory means unlimited.
 */
typedef struct FbOptions {
  uint64_t timeout_secs;
  uint64_t memory_mb;
  bool case_splits;
  enum FbOracleCheck oracle_check;
} FbOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *fb_version(void);

/**
 * Default options: 300 s timeout, 8192 MiB ceiling, case splits enabled,
 * oracle on auto.
 */
struct FbOptions fb_options_default(void);

/**
 * Copy of the last error message raised on this thread.
 *
 * # Safety
 * `out` must be a valid pointer to a `char*` slot.
 */
enum FbStatus fb_last_error(char **out);

/**
 * Parse and sort-check a problem from UTF-8 text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid slot; the
 * returned handle is released with `fb_problem_free`.
 */
enum FbStatus fb_problem_parse(const char *text, struct FbProblem **out);

/**
 * # Safety
 * `p` must be a handle from `fb_problem_parse` (or null).
 */
void fb_problem_free(struct FbProblem *p);

/**
 * Render a problem back to its canonical text.
 *
 * # Safety
 * `p` must be a live problem handle and `out` a valid slot.
 */
enum FbStatus fb_problem_render(const struct FbProblem *p, char **out);

/**
 * Run the verification pipeline. `opts` may be null for defaults.
 *
 * # Safety
 * `p` must be a live problem handle, `out` a valid slot; the returned
 * verdict is released with `fb_verdict_free`.
 */
enum FbStatus fb_verify(const struct FbProblem *p,
                        const struct FbOptions *opts,
                        struct FbVerdict **out);

/**
 * # Safety
 * `v` must be a handle from `fb_verify` (or null).
 */
void fb_verdict_free(struct FbVerdict *v);

/**
 * # Safety
 * `v` must be a live verdict handle.
 */
enum FbVerdictStatus fb_verdict_status(const struct FbVerdict *v);

/**
 * Render the verdict report.
 *
 * # Safety
 * `v` must be a live verdict handle and `out` a valid slot.
 */
enum FbStatus fb_verdict_report(const struct FbVerdict *v, enum FbReportFormat format, char **out);

/**
 * The rule-application trace as JSON lines.
 *
 * # Safety
 * `v` must be a live verdict handle and `out` a valid slot.
 */
enum FbStatus fb_verdict_trace_jsonl(const struct FbVerdict *v, char **out);

/**
 * Number of variables in the counterexample (0 when there is none).
 *
 * # Safety
 * `v` must be a live verdict handle.
 */
size_t fb_verdict_counterexample_len(const struct FbVerdict *v);

/**
 * Fetch one counterexample binding. The name pointer stays owned by the
 * verdict and is valid until `fb_verdict_free`.
 *
 * # Safety
 * `v` must be a live verdict handle; `name` and `value` must be valid
 * slots; `idx` must be below `fb_verdict_counterexample_len`.
 */
enum FbStatus fb_verdict_counterexample_at(const struct FbVerdict *v,
                                           size_t idx,
                                           const char **name,
                                           uint64_t *value);

/**
 * Emit the B-bit bitwise-or benchmark problem as text.
 *
 * # Safety
 * `out` must be a valid slot.
 */
enum FbStatus fb_gen_jolt_or(uint32_t bits, uint64_t field, char **out);

/**
 * Emit a seeded random context as text.
 *
 * # Safety
 * `out` must be a valid slot.
 */
enum FbStatus fb_gen_random(uint64_t seed,
                            uint64_t field,
                            uint32_t vars,
                            uint32_t depth,
                            char **out);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from a fieldblast function (or be null), and must not be
 * used afterwards.
 */
void fb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDBLAST_H */
