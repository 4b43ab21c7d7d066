#ifndef OSAMTL_H
#define OSAMTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OsamtlStatus {
  OSAMTL_STATUS_OK = 0,
  OSAMTL_STATUS_NULL_POINTER = 1,
  OSAMTL_STATUS_INVALID_UTF8 = 2,
  OSAMTL_STATUS_INVALID_ARGUMENT = 3,
  OSAMTL_STATUS_INVALID_DNLS = 4,
  OSAMTL_STATUS_FAILURE = 5,
  OSAMTL_STATUS_PANIC = 6,
} OsamtlStatus;

/**
 * A noisy sample with its diverse noisy label samples.
 */
typedef struct OsamtlDataset OsamtlDataset;

/**
 * Trained windowed logistic model.
 */
typedef struct OsamtlModel OsamtlModel;

/**
 * Abduced targets plus the reasoning audit trail.
 */
typedef struct OsamtlTargets OsamtlTargets;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * The pointer stays valid until the next call into this library.
 */
const char *osamtl_last_error_message(void);

const char *osamtl_version(void);

void osamtl_string_free(char *s);

/**
 * Parses a dataset JSON document (`n`, `k`, `features`, `nls`, optional
 * `true_labels`, `tau_div`).
 */
enum OsamtlStatus osamtl_dataset_from_json(const char *json, struct OsamtlDataset **out);

/**
 * Generates a synthetic dataset from the `synth` section of an experiment
 * config.
 */
enum OsamtlStatus osamtl_dataset_generate(const char *config_json, struct OsamtlDataset **out);

enum OsamtlStatus osamtl_dataset_to_json(const struct OsamtlDataset *ds, char **out);

enum OsamtlStatus osamtl_dataset_n(const struct OsamtlDataset *ds, size_t *out);

enum OsamtlStatus osamtl_dataset_d(const struct OsamtlDataset *ds, size_t *out);

/**
 * Writes 1 to `passed` when every branch pair is diverse, else 0. A failing
 * gate is not an error; the violations are available as the last error
 * message.
 */
enum OsamtlStatus osamtl_dataset_validate(const struct OsamtlDataset *ds, int32_t *passed);

void osamtl_dataset_free(struct OsamtlDataset *ds);

/**
 * Normalized Hamming distance between two label vectors of length `n`.
 */
enum OsamtlStatus osamtl_differentiate(const uint8_t *a, const uint8_t *b, size_t n, double *out);

/**
 * Runs one-step reasoning with the KB, policy and target specs of the
 * given experiment config.
 */
enum OsamtlStatus osamtl_abduce(const struct OsamtlDataset *ds,
                                const char *config_json,
                                struct OsamtlTargets **out);

enum OsamtlStatus osamtl_targets_m(const struct OsamtlTargets *t, size_t *out);

enum OsamtlStatus osamtl_targets_n(const struct OsamtlTargets *t, size_t *out);

/**
 * Copies target row `c` (n values) into `buf`.
 */
enum OsamtlStatus osamtl_targets_row(const struct OsamtlTargets *t,
                                     size_t c,
                                     double *buf,
                                     size_t len);

/**
 * Targets JSON including groundings, inconsistencies, revisions and
 * residuals.
 */
enum OsamtlStatus osamtl_targets_to_json(const struct OsamtlTargets *t, char **out);

void osamtl_targets_free(struct OsamtlTargets *t);

/**
 * Trains on the abduced targets with the alpha, feature map and training
 * settings of the config.
 */
enum OsamtlStatus osamtl_train(const struct OsamtlDataset *ds,
                               const struct OsamtlTargets *t,
                               const char *config_json,
                               struct OsamtlModel **out);

/**
 * Writes one probability per instance of `ds` into `buf`.
 */
enum OsamtlStatus osamtl_model_predict(const struct OsamtlModel *model,
                                       const struct OsamtlDataset *ds,
                                       double *buf,
                                       size_t len);

enum OsamtlStatus osamtl_model_to_json(const struct OsamtlModel *model, char **out);

void osamtl_model_free(struct OsamtlModel *model);

/**
 * Full multi-seed experiment; writes the report JSON.
 */
enum OsamtlStatus osamtl_pipeline(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSAMTL_H */
