#ifndef DMSEG_H
#define DMSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DMSEG_MODE_DMR 0

#define DMSEG_MODE_VMR 1

#define DMSEG_SCALE_BETA 0

#define DMSEG_SCALE_MVALUE 1

typedef enum {
  DMSEG_STATUS_OK = 0,
  DMSEG_STATUS_NULL_ARGUMENT = 1,
  DMSEG_STATUS_INVALID_UTF8 = 2,
  DMSEG_STATUS_IO = 3,
  DMSEG_STATUS_PARSE = 4,
  DMSEG_STATUS_INVALID_INPUT = 5,
  DMSEG_STATUS_INVALID_CONFIG = 6,
  DMSEG_STATUS_NUMERIC = 7,
  DMSEG_STATUS_INDEX_OUT_OF_RANGE = 8,
  DMSEG_STATUS_PANIC = 9,
} DmsegStatus;

/**
 * Aligned methylation data ready for analysis.
 */
typedef struct DmsegDataset DmsegDataset;

/**
 * Ranked regions from one run.
 */
typedef struct DmsegResults DmsegResults;

/**
 * Analysis settings. Fill with [`dmseg_params_default`] before changing fields.
 */
typedef struct {
  uint64_t max_gap_bp;
  double corr_min;
  double z_main;
  double z_bridge;
  uint32_t min_cpgs;
  uint32_t min_cluster_size;
  uint32_t permutations;
  uint64_t seed;
  /**
   * Worker threads; 0 uses every available core.
   */
  uint32_t threads;
  /**
   * `DMSEG_MODE_DMR` or `DMSEG_MODE_VMR`.
   */
  uint32_t mode;
} DmsegParams;

/**
 * Numeric fields of one reported region.
 */
typedef struct {
  uint64_t start_pos;
  uint64_t end_pos;
  size_t n_cpgs;
  size_t cluster_size;
  double segment_mean;
  double lrt;
  double p_value;
  double fwer;
} DmsegRegion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dmseg_version(void);

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *dmseg_last_error(void);

/**
 * Writes the default settings to `out`.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one `DmsegParams`.
 */
DmsegStatus dmseg_params_default(DmsegParams *out);

/**
 * Loads and aligns a matrix, phenotype table and manifest.
 *
 * `case_label` may be NULL. `scale` is `DMSEG_SCALE_BETA` or `DMSEG_SCALE_MVALUE`.
 *
 * # Safety
 * String arguments must be NULL or NUL-terminated. `out` must point to
 * writable storage for one pointer.
 */
DmsegStatus dmseg_dataset_load(const char *matrix_path,
                               const char *phenotypes_path,
                               const char *manifest_path,
                               const char *group_column,
                               const char *case_label,
                               uint32_t scale,
                               DmsegDataset **out);

/**
 * Number of CpG rows, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle from [`dmseg_dataset_load`].
 */
size_t dmseg_dataset_n_cpgs(const DmsegDataset *dataset);

/**
 * Number of samples, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle from [`dmseg_dataset_load`].
 */
size_t dmseg_dataset_n_samples(const DmsegDataset *dataset);

/**
 * # Safety
 * `dataset` must be NULL or a handle from [`dmseg_dataset_load`] not yet freed.
 */
void dmseg_dataset_free(DmsegDataset *dataset);

/**
 * Runs clustering, segment search and permutation testing.
 *
 * # Safety
 * `dataset` and `params` must be live, `out` writable storage for one pointer.
 */
DmsegStatus dmseg_run(const DmsegDataset *dataset, const DmsegParams *params, DmsegResults **out);

/**
 * Number of regions, or 0 for NULL.
 *
 * # Safety
 * `results` must be NULL or a live handle from [`dmseg_run`].
 */
size_t dmseg_results_len(const DmsegResults *results);

/**
 * Copies the numeric fields of region `index` (0 is the top-ranked) into `out`.
 *
 * # Safety
 * `results` must be live and `out` writable.
 */
DmsegStatus dmseg_results_get(const DmsegResults *results, size_t index, DmsegRegion *out);

/**
 * Chromosome of region `index`, owned by `results`; NULL when out of range.
 *
 * # Safety
 * `results` must be NULL or a live handle from [`dmseg_run`].
 */
const char *dmseg_results_chromosome(const DmsegResults *results, size_t index);

/**
 * First probe of region `index`, owned by `results`; NULL when out of range.
 *
 * # Safety
 * `results` must be NULL or a live handle from [`dmseg_run`].
 */
const char *dmseg_results_start_probe(const DmsegResults *results, size_t index);

/**
 * Last probe of region `index`, owned by `results`; NULL when out of range.
 *
 * # Safety
 * `results` must be NULL or a live handle from [`dmseg_run`].
 */
const char *dmseg_results_end_probe(const DmsegResults *results, size_t index);

/**
 * Writes the results table in the same format as the command-line tool.
 *
 * # Safety
 * `results` must be live and `path` NUL-terminated.
 */
DmsegStatus dmseg_results_write_tsv(const DmsegResults *results, const char *path);

/**
 * # Safety
 * `results` must be NULL or a handle from [`dmseg_run`] not yet freed.
 */
void dmseg_results_free(DmsegResults *results);

/**
 * Weighted-mean effect and likelihood-ratio statistic of one segment.
 *
 * # Safety
 * `betas` and `variances` must each hold `len` values; outputs must be writable.
 */
DmsegStatus dmseg_lrt_score(const double *betas,
                            const double *variances,
                            size_t len,
                            double *out_mean,
                            double *out_lrt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMSEG_H */
