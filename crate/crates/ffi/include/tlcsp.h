#ifndef TLCSP_H
#define TLCSP_H

#include <stddef.h>
#include <stdint.h>

#define TLCSP_STRATEGY_BL1 (1 << 0)

#define TLCSP_STRATEGY_BL2 (1 << 1)

#define TLCSP_STRATEGY_BL3 (1 << 2)

#define TLCSP_STRATEGY_CM1 (1 << 3)

#define TLCSP_STRATEGY_CM2 (1 << 4)

#define TLCSP_STRATEGY_MA (1 << 5)

#define TLCSP_STRATEGY_IA (1 << 6)

#define TLCSP_STRATEGY_ALL ((1 << 7) - 1)

typedef enum TlcspStatus {
  TLCSP_STATUS_OK = 0,
  TLCSP_STATUS_NULL_POINTER = 1,
  /**
   * Bad configuration, mismatched dimensions or too little data.
   */
  TLCSP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed file, or a file that cannot be read or written.
   */
  TLCSP_STATUS_IO = 3,
  /**
   * Degenerate or ill-conditioned numerics.
   */
  TLCSP_STATUS_NUMERIC = 4,
  TLCSP_STATUS_PANIC = 5,
} TlcspStatus;

/**
 * An ordered list of subjects.
 */
typedef struct TlcspCorpus TlcspCorpus;

/**
 * CSP filters and their eigenvalues.
 */
typedef struct TlcspCspBank TlcspCspBank;

/**
 * One subject's labeled epochs.
 */
typedef struct TlcspDataset TlcspDataset;

typedef struct TlcspSynthConfig {
  size_t num_subjects;
  size_t channels;
  size_t samples;
  size_t epochs_per_class;
  double sigma_hi;
  double sigma_lo;
  double divergence;
  double noise_floor;
  uint64_t seed;
} TlcspSynthConfig;

typedef struct TlcspBenchConfig {
  size_t pool_size;
  size_t m_step;
  size_t m_max;
  size_t repetitions;
  size_t filters_per_class;
  uint64_t base_seed;
  /**
   * Bitwise OR of `TLCSP_STRATEGY_*`.
   */
  uint32_t strategies;
  double cm1_lambda;
  /**
   * 0 uses one worker per core.
   */
  size_t workers;
} TlcspBenchConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *tlcsp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tlcsp_version(void);

/**
 * Builds a dataset from `n_epochs` epochs of `channels × samples` values
 * each (row-major, epochs back to back) and one label byte (0 or 1) per epoch.
 *
 * # Safety
 * `subject_id` must be a NUL-terminated string, `data` must hold
 * `n_epochs·channels·samples` values and `labels` `n_epochs` bytes.
 */
enum TlcspStatus tlcsp_dataset_new(const char *subject_id,
                                   size_t channels,
                                   size_t samples,
                                   size_t n_epochs,
                                   const double *data,
                                   const uint8_t *labels,
                                   struct TlcspDataset **out_dataset);

/**
 * # Safety
 * `file` must be a NUL-terminated path and `out_dataset` writable.
 */
enum TlcspStatus tlcsp_dataset_load(const char *file, struct TlcspDataset **out_dataset);

/**
 * # Safety
 * `dataset` must come from this library and `file` be a NUL-terminated path.
 */
enum TlcspStatus tlcsp_dataset_save(const struct TlcspDataset *dataset, const char *file);

/**
 * Number of epochs, channels and samples per epoch. Any output may be null.
 *
 * # Safety
 * `dataset` must come from this library.
 */
enum TlcspStatus tlcsp_dataset_shape(const struct TlcspDataset *dataset,
                                     size_t *out_epochs,
                                     size_t *out_channels,
                                     size_t *out_samples);

/**
 * # Safety
 * `dataset` must come from this library or be null; it is invalid afterwards.
 */
void tlcsp_dataset_free(struct TlcspDataset *dataset);

/**
 * Fills `out_config` with the library's default synthetic corpus settings.
 *
 * # Safety
 * `out_config` must be writable.
 */
enum TlcspStatus tlcsp_synth_config_default(struct TlcspSynthConfig *out_config);

/**
 * # Safety
 * `config` must be readable and `out_corpus` writable.
 */
enum TlcspStatus tlcsp_synth_generate(const struct TlcspSynthConfig *config,
                                      struct TlcspCorpus **out_corpus);

/**
 * Loads every `.eegx` file of a directory, ordered by file name.
 *
 * # Safety
 * `dir` must be a NUL-terminated path and `out_corpus` writable.
 */
enum TlcspStatus tlcsp_corpus_load(const char *dir, struct TlcspCorpus **out_corpus);

/**
 * Writes one `.eegx` file per subject into `dir`, creating it if needed.
 *
 * # Safety
 * `corpus` must come from this library and `dir` be a NUL-terminated path.
 */
enum TlcspStatus tlcsp_corpus_save(const struct TlcspCorpus *corpus, const char *dir);

/**
 * # Safety
 * `corpus` must come from this library and `out_len` be writable.
 */
enum TlcspStatus tlcsp_corpus_len(const struct TlcspCorpus *corpus, size_t *out_len);

/**
 * Copies subject `index` into a new dataset handle.
 *
 * # Safety
 * `corpus` must come from this library and `out_dataset` be writable.
 */
enum TlcspStatus tlcsp_corpus_subject(const struct TlcspCorpus *corpus,
                                      size_t index,
                                      struct TlcspDataset **out_dataset);

/**
 * # Safety
 * `corpus` must come from this library or be null; it is invalid afterwards.
 */
void tlcsp_corpus_free(struct TlcspCorpus *corpus);

/**
 * CSP filters from two `c × c` class-mean covariances.
 *
 * # Safety
 * `sigma0` and `sigma1` must hold `c·c` values and `out_bank` be writable.
 */
enum TlcspStatus tlcsp_csp_compute(size_t c,
                                   const double *sigma0,
                                   const double *sigma1,
                                   size_t filters_per_class,
                                   struct TlcspCspBank **out_bank);

/**
 * Channel count and number of filters (`2F`). Either output may be null.
 *
 * # Safety
 * `bank` must come from this library.
 */
enum TlcspStatus tlcsp_csp_shape(const struct TlcspCspBank *bank,
                                 size_t *out_channels,
                                 size_t *out_filters);

/**
 * Copies the `channels × 2F` filter matrix (row-major) and the `2F`
 * eigenvalues. Either output may be null.
 *
 * # Safety
 * `out_filters` must have room for `channels·2F` values and
 * `out_eigenvalues` for `2F`.
 */
enum TlcspStatus tlcsp_csp_filters(const struct TlcspCspBank *bank,
                                   double *out_filters,
                                   double *out_eigenvalues);

/**
 * Log-variance features of one `channels × channels` covariance.
 *
 * # Safety
 * `cov` must hold `channels²` values and `out_features` have room for `2F`.
 */
enum TlcspStatus tlcsp_csp_features(const struct TlcspCspBank *bank,
                                    const double *cov,
                                    double *out_features);

/**
 * # Safety
 * `bank` must come from this library or be null; it is invalid afterwards.
 */
void tlcsp_csp_free(struct TlcspCspBank *bank);

/**
 * KL divergence from `N(0, sigma_s)` to `N(0, sigma_t)`.
 *
 * # Safety
 * Both matrices must hold `c·c` values and `out_kl` be writable.
 */
enum TlcspStatus tlcsp_kl_divergence(size_t c,
                                     const double *sigma_s,
                                     const double *sigma_t,
                                     double *out_kl);

/**
 * Mixing weight of the selected sources given the target's leave-one-out
 * accuracy, the selected sources' accuracy and the chance level.
 *
 * # Safety
 * `out_lambda` must be writable.
 */
enum TlcspStatus tlcsp_cm2_lambda(double target_acc,
                                  double selected_acc,
                                  double rand_acc,
                                  double *out_lambda);

/**
 * Kernel mean matching weights for `n` source vectors against `m` target
 * vectors of length `dim`. A NaN `epsilon` uses `(√n − 1)/√n`; a
 * nonpositive `bandwidth` uses the median pairwise distance.
 *
 * # Safety
 * `source` must hold `n·dim` values, `target` `m·dim`, and `out_beta` have
 * room for `n`.
 */
enum TlcspStatus tlcsp_kmm_weights(size_t n,
                                   size_t m,
                                   size_t dim,
                                   const double *source,
                                   const double *target,
                                   double upper_bound,
                                   double epsilon,
                                   double bandwidth,
                                   double *out_beta);

/**
 * Simplex weights for `z` source models from their `m × z` matrix of ±1
 * votes (row-major) and the ±1 labels.
 *
 * # Safety
 * `votes` must hold `m·z` values, `labels` `m`, and `out_weights` have room
 * for `z`.
 */
enum TlcspStatus tlcsp_ensemble_weights(size_t m,
                                        size_t z,
                                        const double *votes,
                                        const double *labels,
                                        double *out_weights);

/**
 * Fills `out_config` with the default benchmark protocol.
 *
 * # Safety
 * `out_config` must be writable.
 */
enum TlcspStatus tlcsp_bench_config_default(struct TlcspBenchConfig *out_config);

/**
 * Runs the benchmark over every subject of `corpus` and writes the results
 * CSV to `out_csv`.
 *
 * # Safety
 * `corpus` must come from this library, `config` be readable and `out_csv`
 * be a NUL-terminated path.
 */
enum TlcspStatus tlcsp_benchmark_run(const struct TlcspCorpus *corpus,
                                     const struct TlcspBenchConfig *config,
                                     const char *out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TLCSP_H */
