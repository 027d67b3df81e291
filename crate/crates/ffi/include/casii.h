#ifndef CASII_H
#define CASII_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CasiiStatus {
  CASII_STATUS_OK = 0,
  CASII_STATUS_NULL_POINTER = 1,
  CASII_STATUS_INVALID_ARGUMENT = 2,
  CASII_STATUS_DATA = 3,
  CASII_STATUS_NUMERICAL = 4,
  CASII_STATUS_BUFFER_TOO_SMALL = 5,
  CASII_STATUS_PANIC = 6,
} CasiiStatus;

/**
 * Bag dataset handle.
 */
typedef struct CasiiDataset CasiiDataset;

/**
 * Negative key matrix handle.
 */
typedef struct CasiiKeys CasiiKeys;

/**
 * Model parameter handle.
 */
typedef struct CasiiModel CasiiModel;

/**
 * Generator settings; fields mirror the defaults from [`casii_synth_defaults`].
 */
typedef struct CasiiSynthConfig {
  size_t dim;
  size_t n_negative_bags;
  size_t n_positive_bags;
  size_t min_instances;
  size_t max_instances;
  double min_witness_rate;
  double max_witness_rate;
  size_t n_normal_clusters;
  double cluster_spread;
  double tumor_shift;
  double noise_sigma;
  uint64_t seed;
} CasiiSynthConfig;

/**
 * Subset of the training settings exposed over the ABI.
 */
typedef struct CasiiTrainConfig {
  double learning_rate;
  double weight_decay;
  double lambda1;
  double lambda2;
  size_t r;
  size_t warmup_epochs;
  size_t patience;
  size_t max_epochs;
  double val_ratio;
  size_t runs;
  uint64_t seed;
  size_t latent_dim;
  bool use_bot;
  bool use_top;
  bool parallel;
} CasiiTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * without the terminator.
 */
size_t casii_last_error(char *buf, size_t len);

struct CasiiSynthConfig casii_synth_defaults(void);

struct CasiiTrainConfig casii_train_defaults(void);

enum CasiiStatus casii_dataset_generate(const struct CasiiSynthConfig *config,
                                        struct CasiiDataset **out);

enum CasiiStatus casii_dataset_load(const char *path, struct CasiiDataset **out);

enum CasiiStatus casii_dataset_save(const struct CasiiDataset *ds, const char *path);

/**
 * Number of bags, or 0 for a null handle.
 */
size_t casii_dataset_len(const struct CasiiDataset *ds);

/**
 * Id, label and instance count of the bag at `index`.
 */
enum CasiiStatus casii_dataset_bag_info(const struct CasiiDataset *ds,
                                        size_t index,
                                        uint32_t *id,
                                        uint8_t *label,
                                        size_t *n_instances);

void casii_dataset_free(struct CasiiDataset *ds);

/**
 * Builds keys from the dataset's negative bags. `max_instances_per_bag` of
 * 0 means no cap.
 */
enum CasiiStatus casii_keys_build(const struct CasiiDataset *ds,
                                  size_t t_max,
                                  size_t max_instances_per_bag,
                                  struct CasiiKeys **out);

enum CasiiStatus casii_keys_load(const char *path, struct CasiiKeys **out);

enum CasiiStatus casii_keys_save(const struct CasiiKeys *keys, const char *path);

/**
 * Number of key columns, or 0 for a null handle.
 */
size_t casii_keys_tau(const struct CasiiKeys *keys);

void casii_keys_free(struct CasiiKeys *keys);

/**
 * Trains with best-of-N selection and returns the selected model.
 * `best_val_auc` may be null.
 */
enum CasiiStatus casii_model_train(const struct CasiiDataset *ds,
                                   const struct CasiiKeys *keys,
                                   const struct CasiiTrainConfig *config,
                                   struct CasiiModel **out,
                                   double *best_val_auc);

enum CasiiStatus casii_model_load(const char *path, struct CasiiModel **out);

enum CasiiStatus casii_model_save(const struct CasiiModel *model, const char *path);

void casii_model_free(struct CasiiModel *model);

/**
 * Bag probability for the bag at `index`.
 */
enum CasiiStatus casii_predict(const struct CasiiModel *model,
                               const struct CasiiKeys *keys,
                               const struct CasiiDataset *ds,
                               size_t index,
                               double *p_bag);

/**
 * Writes the attention weights of the bag at `index` into `buf`. `needed`
 * always receives the bag size; `CASII_STATUS_BUFFER_TOO_SMALL` is
 * returned when `cap` is smaller.
 */
enum CasiiStatus casii_attention(const struct CasiiModel *model,
                                 const struct CasiiKeys *keys,
                                 const struct CasiiDataset *ds,
                                 size_t index,
                                 double *buf,
                                 size_t cap,
                                 size_t *needed);

/**
 * Runs the gradient check on `cases` random problems of the default size
 * and stores the worst block error in `max_error`.
 */
enum CasiiStatus casii_gradcheck(uint64_t seed, size_t cases, double *max_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASII_H */
