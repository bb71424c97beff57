/* C interface to the hskdetect heteroskedasticity test library.
 *
 * Usage pattern:
 *   HskDataset *data = hsk_dataset_new(x, n, m, y, delta_or_null);
 *   HskConfig *cfg = hsk_config_new(1);
 *   HskOutcome out;
 *   if (hsk_test_run(data, cfg, &out) == HSK_OK) { ... }
 *   hsk_config_free(cfg);
 *   hsk_dataset_free(data);
 *
 * Every fallible call returns an HskStatus; on failure, the message for
 * the current thread is available via hsk_last_error_message. Handles
 * are not thread-safe and must be freed exactly once.
 */

#ifndef HSKDETECT_H
#define HSKDETECT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum HskStatus {
  HSK_OK = 0,
  HSK_NULL_POINTER = 1,
  HSK_INVALID_ARGUMENT = 2,
  HSK_COMPUTATION_FAILED = 3,
  HSK_PANIC = 4,
} HskStatus;

/* Opaque handles. */
typedef struct HskDataset HskDataset;
typedef struct HskConfig HskConfig;

typedef struct HskOutcome {
  double statistic;
  double critical_value;
  double p_value;
  /* 1 when the null of a constant error scale is rejected, else 0. */
  int32_t reject;
  /* Number of complete cases the test ran on. */
  size_t n_used;
} HskOutcome;

/* Copies the current thread's last error message into buf (NUL
 * terminated, truncated to cap bytes) and returns the full length. */
size_t hsk_last_error_message(char *buf, size_t cap);

/* x: row-major n*m covariates; y: n responses; delta: n bytes of 0/1
 * indicators or NULL when everything is observed. NULL on error. */
HskDataset *hsk_dataset_new(const double *x, size_t n, size_t m,
                            const double *y, const uint8_t *delta);
void hsk_dataset_free(HskDataset *dataset);

/* Defaults: cross-validated bandwidths, estimated-scale detection
 * weights, level 0.05, published asymptotic critical value. */
HskConfig *hsk_config_new(uint32_t degree);
void hsk_config_free(HskConfig *config);

HskStatus hsk_config_set_alpha(HskConfig *config, double alpha);
HskStatus hsk_config_set_fixed_bandwidth(HskConfig *config, double constant);
HskStatus hsk_config_set_omega_values(HskConfig *config, const double *values,
                                      size_t len);
HskStatus hsk_config_set_critical_exact(HskConfig *config);
HskStatus hsk_config_set_critical_fixed(HskConfig *config, double critical);
HskStatus hsk_config_set_bootstrap(HskConfig *config, size_t replications,
                                   uint64_t seed);

HskStatus hsk_test_run(const HskDataset *dataset, const HskConfig *config,
                       HskOutcome *out);

/* Critical values: the published series threshold (1.1779 at the 5%
 * level) and the exact quantile of sup |B0| (1.3581 at 5%). */
HskStatus hsk_published_critical_value(double alpha, double *out);
HskStatus hsk_exact_critical_value(double alpha, double *out);

#ifdef __cplusplus
}
#endif

#endif /* HSKDETECT_H */
