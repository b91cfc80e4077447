#ifndef CHIBAR_H
#define CHIBAR_H

#include <stddef.h>
#include <stdint.h>

typedef enum ChibarDecision {
  CHIBAR_DECISION_ACCEPT_H0 = 0,
  CHIBAR_DECISION_REJECT_TO_H1 = 1,
  CHIBAR_DECISION_REJECT_TO_H2 = 2,
} ChibarDecision;

typedef enum ChibarLrVariant {
  CHIBAR_LR_VARIANT_NAIVE = 0,
  CHIBAR_LR_VARIANT_BASIC = 1,
  CHIBAR_LR_VARIANT_TUNABLE = 2,
} ChibarLrVariant;

typedef enum ChibarMcVariant {
  CHIBAR_MC_VARIANT_NAIVE = 0,
  CHIBAR_MC_VARIANT_BENNET = 1,
  CHIBAR_MC_VARIANT_TUNABLE = 2,
} ChibarMcVariant;

typedef enum ChibarStatus {
  CHIBAR_STATUS_OK = 0,
  CHIBAR_STATUS_NULL_POINTER = 1,
  CHIBAR_STATUS_INVALID_INPUT = 2,
  CHIBAR_STATUS_PARSE_ERROR = 3,
  CHIBAR_STATUS_NUMERICAL_ERROR = 4,
  CHIBAR_STATUS_NON_CONVERGENCE = 5,
  CHIBAR_STATUS_BUFFER_TOO_SMALL = 6,
  CHIBAR_STATUS_PANIC = 7,
} ChibarStatus;

typedef enum ChibarWeightMethod {
  CHIBAR_WEIGHT_METHOD_EXACT = 0,
  CHIBAR_WEIGHT_METHOD_MONTE_CARLO = 1,
} ChibarWeightMethod;

// Parameterisation plus constraint cone.
typedef struct ChibarModel ChibarModel;

// A contingency table.
typedef struct ChibarTable ChibarTable;

// Chi-bar-square weights.
typedef struct ChibarWeights ChibarWeights;

typedef struct ChibarLrStats {
  double l01;
  double l12;
  double l02;
} ChibarLrStats;

typedef struct ChibarAlphas {
  double alpha1;
  double alpha2;
  double alpha12;
} ChibarAlphas;

// `c2` and `c12` are `INFINITY` when unbounded.
typedef struct ChibarCriticalValues {
  double c1;
  double c2;
  double c12;
} ChibarCriticalValues;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *chibar_last_error(void);

// Library version as a static string.
const char *chibar_version(void);

void chibar_string_free(char *s);

// Table from row-major counts (last index fastest).
enum ChibarStatus chibar_table_new(const size_t *dims,
                                   size_t ndims,
                                   const uint64_t *counts,
                                   size_t ncells,
                                   struct ChibarTable **out);

// Table from whitespace separated text.
enum ChibarStatus chibar_table_parse(const char *text,
                                     const size_t *dims,
                                     size_t ndims,
                                     struct ChibarTable **out);

void chibar_table_free(struct ChibarTable *t);

// Local log-odds ratios of an `nrows x ncols` table, all constrained
// non-negative.
enum ChibarStatus chibar_model_local_logodds(size_t nrows, size_t ncols, struct ChibarModel **out);

// Global log-odds ratios of an `nrows x ncols` table, all constrained
// non-negative.
enum ChibarStatus chibar_model_global_logodds(size_t nrows, size_t ncols, struct ChibarModel **out);

// Model from JSON with `C`, `M`, `D` and optional `E` (row-major arrays).
enum ChibarStatus chibar_model_from_json(const char *json, struct ChibarModel **out);

// Number of inequality constraints.
size_t chibar_model_num_inequalities(const struct ChibarModel *m);

void chibar_model_free(struct ChibarModel *m);

// `L01`, `L12`, `L02`.
enum ChibarStatus chibar_lr_statistics(const struct ChibarTable *t,
                                       const struct ChibarModel *m,
                                       struct ChibarLrStats *out);

// Weights of the null distribution at the equality-constrained fit.
enum ChibarStatus chibar_weights_plugin(const struct ChibarTable *t,
                                        const struct ChibarModel *m,
                                        enum ChibarWeightMethod method,
                                        size_t mc_samples,
                                        uint64_t seed,
                                        struct ChibarWeights **out);

// Weights for the `k x k` covariance `cov` (row-major) of the constrained
// estimates, with a lineality space of dimension `q`.
enum ChibarStatus chibar_weights_from_cov(const double *cov,
                                          size_t k,
                                          size_t q,
                                          enum ChibarWeightMethod method,
                                          size_t mc_samples,
                                          uint64_t seed,
                                          struct ChibarWeights **out);

// Number of weights, `k + 1`.
size_t chibar_weights_len(const struct ChibarWeights *w);

// Copy the weights into `buf` of length `len`.
enum ChibarStatus chibar_weights_get(const struct ChibarWeights *w, double *buf, size_t len);

// `P(chi-bar-square > c)`; NaN for a NULL handle.
double chibar_weights_tail(const struct ChibarWeights *w, double c);

// `P(L01 <= c1, L12 <= c2)`; NaN for a NULL handle.
double chibar_weights_joint_cdf(const struct ChibarWeights *w, double c1, double c2);

void chibar_weights_free(struct ChibarWeights *w);

enum ChibarStatus chibar_lr_critical_values(const struct ChibarWeights *w,
                                            const struct ChibarAlphas *a,
                                            enum ChibarLrVariant variant,
                                            struct ChibarCriticalValues *out);

enum ChibarStatus chibar_lr_decide(const struct ChibarLrStats *stats,
                                   const struct ChibarCriticalValues *cv,
                                   enum ChibarLrVariant variant,
                                   enum ChibarDecision *out);

// Extremes of the studentized constraint estimates, and optionally their
// `k x k` null correlation matrix (row-major) when `corr` is not NULL.
enum ChibarStatus chibar_mc_statistics(const struct ChibarTable *t,
                                       const struct ChibarModel *m,
                                       double *min_z,
                                       double *max_z,
                                       double *corr,
                                       size_t corr_len);

// MC critical values for the `k x k` correlation matrix `corr`.
enum ChibarStatus chibar_mc_critical_values(const double *corr,
                                            size_t k,
                                            const struct ChibarAlphas *a,
                                            enum ChibarMcVariant variant,
                                            double accuracy,
                                            uint64_t seed,
                                            struct ChibarCriticalValues *out);

enum ChibarStatus chibar_mc_decide(double min_z,
                                   double max_z,
                                   const struct ChibarCriticalValues *cv,
                                   enum ChibarMcVariant variant,
                                   enum ChibarDecision *out);

// Full analysis as JSON. `options_json` may be NULL for defaults.
enum ChibarStatus chibar_analyze_json(const struct ChibarTable *t,
                                      const struct ChibarModel *m,
                                      const char *options_json,
                                      char **out);

// Run a simulation scenario given as JSON; the report is JSON. `jobs = 0`
// uses every core.
enum ChibarStatus chibar_simulate_json(const char *scenario_json, size_t jobs, char **out);

// Correlation matrix of a `k x k` covariance, written into `out`.
enum ChibarStatus chibar_correlation(const double *cov, size_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHIBAR_H */
