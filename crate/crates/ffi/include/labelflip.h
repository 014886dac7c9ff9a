#ifndef LABELFLIP_H
#define LABELFLIP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_ARGUMENT = 2,
  LF_STATUS_DIMENSION_MISMATCH = 3,
  LF_STATUS_EMPTY_DATASET = 4,
  LF_STATUS_INVALID_DATA = 5,
  LF_STATUS_DIVERGED = 6,
  LF_STATUS_IO = 7,
  LF_STATUS_PARSE = 8,
  LF_STATUS_BUFFER_TOO_SMALL = 9,
  LF_STATUS_INTERNAL = 10,
} LfStatus;

typedef enum LfModelKind {
  LF_MODEL_KIND_LOGISTIC = 0,
  LF_MODEL_KIND_MLP = 1,
} LfModelKind;

typedef enum LfDirection {
  LF_DIRECTION_MINIMIZE_FN = 0,
  LF_DIRECTION_MINIMIZE_FP = 1,
} LfDirection;

typedef enum LfSelection {
  LF_SELECTION_SCORE_RANKED = 0,
  LF_SELECTION_SEEDED_RANDOM = 1,
} LfSelection;

/**
 * Opaque classifier handle.
 */
typedef struct LfClassifier LfClassifier;

/**
 * Opaque dataset handle.
 */
typedef struct LfDataset LfDataset;

/**
 * Training hyperparameters. Obtain defaults from [`lf_train_options_default`].
 */
typedef struct LfTrainOptions {
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  double weight_neg;
  double weight_pos;
  uint64_t seed;
} LfTrainOptions;

/**
 * Confusion counts and derived metrics at one threshold.
 */
typedef struct LfMetrics {
  double threshold;
  size_t true_negatives;
  size_t false_positives;
  size_t false_negatives;
  size_t true_positives;
  double recall;
  double precision;
  double f1;
  double auroc;
} LfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next `lf_*` call on the same thread.
 */
const char *lf_last_error_message(void);

struct LfTrainOptions lf_train_options_default(void);

/**
 * Builds a dataset from a row-major `n × dim` feature matrix and `n`
 * labels in {0,1}. Ids are `0..n`.
 *
 * # Safety
 * `features` must point to `n * dim` doubles and `labels` to `n` bytes.
 */
enum LfStatus lf_dataset_new(const double *features,
                             const uint8_t *labels,
                             size_t n,
                             size_t dim,
                             struct LfDataset **out);

/**
 * Seeded two-class Gaussian task: `n_per_class` positives with every
 * feature mean `sep`, `round(n_per_class * imbalance)` negatives at 0.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LfStatus lf_dataset_generate(size_t n_per_class,
                                  size_t dim,
                                  double sep,
                                  double scale,
                                  double imbalance,
                                  uint64_t seed,
                                  struct LfDataset **out);

/**
 * Loads a headed CSV; `label_column` names the label, an `id` column is
 * used as ids when present, and every other column is a feature.
 *
 * # Safety
 * `path` and `label_column` must be NUL-terminated strings.
 */
enum LfStatus lf_dataset_load_csv(const char *path,
                                  const char *label_column,
                                  struct LfDataset **out);

/**
 * Writes `id,x0..,label`.
 *
 * # Safety
 * `data` must be a live handle and `path` a NUL-terminated string.
 */
enum LfStatus lf_dataset_save_csv(const struct LfDataset *data, const char *path);

/**
 * Number of examples; 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t lf_dataset_len(const struct LfDataset *data);

/**
 * Feature count; 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t lf_dataset_feature_dim(const struct LfDataset *data);

/**
 * Copies the labels into `out` (capacity `len`, at least the dataset length).
 *
 * # Safety
 * `out` must point to `len` writable bytes.
 */
enum LfStatus lf_dataset_labels(const struct LfDataset *data, uint8_t *out, size_t len);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void lf_dataset_free(struct LfDataset *data);

/**
 * Trains a fresh classifier. `kind` is an [`LfModelKind`] value; `hidden` lists MLP layer sizes and is ignored
 * for logistic models. `options` may be NULL for defaults.
 *
 * # Safety
 * `hidden` must point to `n_hidden` values; pointers must be valid.
 */
enum LfStatus lf_classifier_train(const struct LfDataset *data,
                                  uint32_t kind,
                                  const size_t *hidden,
                                  size_t n_hidden,
                                  const struct LfTrainOptions *options,
                                  struct LfClassifier **out);

/**
 * Writes one score in \[0,1\] per example, in dataset order.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum LfStatus lf_classifier_predict(const struct LfClassifier *model,
                                    const struct LfDataset *data,
                                    double *out,
                                    size_t len);

/**
 * Metrics of `model` on `data`, predicting positive iff score > threshold.
 * AUROC is 0 when `data` holds a single class.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LfStatus lf_classifier_evaluate(const struct LfClassifier *model,
                                     const struct LfDataset *data,
                                     double threshold,
                                     struct LfMetrics *out);

/**
 * Label-flip retraining (`direction` is an [`LfDirection`], `selection` an
 * [`LfSelection`] value): flips `round_half_up(fraction × pool)` labels of
 * the pool at `pool_threshold` and warm-starts from `pretrained`, which must
 * have been trained on `train`'s feature space. `options` may be NULL.
 *
 * When `flipped_ids` is non-NULL, up to `ids_capacity` flipped ids are
 * written there. `flip_count` and `pool_size` may be NULL.
 *
 * # Safety
 * Pointers must be valid; `flipped_ids` must hold `ids_capacity` values.
 */
enum LfStatus lf_label_flip(const struct LfClassifier *pretrained,
                            const struct LfDataset *train_data,
                            uint32_t direction,
                            double fraction,
                            uint32_t selection,
                            double pool_threshold,
                            const struct LfTrainOptions *options,
                            struct LfClassifier **out,
                            size_t *flip_count,
                            size_t *pool_size,
                            uint64_t *flipped_ids,
                            size_t ids_capacity);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum LfStatus lf_classifier_save(const struct LfClassifier *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LfStatus lf_classifier_load(const char *path, struct LfClassifier **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void lf_classifier_free(struct LfClassifier *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LABELFLIP_H */
