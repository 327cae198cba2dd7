/* C interface to the cpsets library: conformal prediction sets over
 * Bayesian posterior approximations for small classifiers.
 *
 * All functions returning int use 0 for success and a negative cps_status
 * value on failure; cps_last_error() describes the most recent failure on
 * the calling thread. Handles are opaque and owned by the caller via the
 * matching *_free function.
 */
#ifndef CPSETS_H
#define CPSETS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CPS_API __declspec(dllexport)
#else
#define CPS_API __attribute__((visibility("default")))
#endif

typedef enum cps_status {
  CPS_OK = 0,
  CPS_ERR_INVALID_ARGUMENT = -1,
  CPS_ERR_RUNTIME = -2,
  CPS_ERR_IO = -3
} cps_status;

typedef struct cps_dataset cps_dataset;
typedef struct cps_posterior cps_posterior;
typedef struct cps_calibration cps_calibration;

/* Message for the last error on this thread; empty string if none. */
CPS_API const char* cps_last_error(void);

/* ---- datasets ---------------------------------------------------------- */

CPS_API int cps_dataset_make_blobs(int num_classes, int dim, long n, double class_sep,
                                   double within_std, uint64_t seed, cps_dataset** out);
/* kind: translate | rotate | gaussian_noise | feature_scale, intensity 1..5 */
CPS_API int cps_dataset_apply_shift(const cps_dataset* ds, const char* kind, int intensity,
                                    cps_dataset** out);
/* fractions: train/val/calibration/test, must sum to 1 */
CPS_API int cps_dataset_split(const cps_dataset* ds, const double fractions[4], uint64_t seed,
                              cps_dataset* out[4]);
CPS_API int cps_dataset_save_csv(const cps_dataset* ds, const char* path);
CPS_API int cps_dataset_load_csv(const char* path, cps_dataset** out);
CPS_API long cps_dataset_size(const cps_dataset* ds);
CPS_API int cps_dataset_dim(const cps_dataset* ds);
CPS_API int cps_dataset_num_classes(const cps_dataset* ds);
CPS_API void cps_dataset_free(cps_dataset* ds);

/* ---- posteriors -------------------------------------------------------- */

/* Trains the named method (a section of the config file) on train/validation. */
CPS_API int cps_train(const char* config_path, const char* method, const cps_dataset* train,
                      const cps_dataset* validation, cps_posterior** out);
CPS_API int cps_posterior_save(const cps_posterior* p, const char* path);
CPS_API int cps_posterior_load(const char* path, cps_posterior** out);
CPS_API const char* cps_posterior_kind(const cps_posterior* p);
/* probs_out must hold num_classes doubles. */
CPS_API int cps_posterior_predict(const cps_posterior* p, const double* x, int dim,
                                  int n_samples, uint64_t seed, double* probs_out,
                                  int num_classes);
CPS_API void cps_posterior_free(cps_posterior* p);

/* ---- conformal --------------------------------------------------------- */

/* probs: n x num_classes row-major. kind: thr | aps. */
CPS_API int cps_calibrate(const double* probs, const int* labels, long n, int num_classes,
                          double alpha, const char* kind, uint64_t seed,
                          cps_calibration** out);
CPS_API int cps_calibration_save(const cps_calibration* cal, const char* path);
CPS_API int cps_calibration_load(const char* path, cps_calibration** out);
/* +infinity when every label is admitted */
CPS_API double cps_calibration_tau(const cps_calibration* cal);
/* mask_out[k] set to 1 if label k is in the set, else 0 */
CPS_API int cps_predict_set(const cps_calibration* cal, const double* probs, int num_classes,
                            uint64_t seed, int* mask_out);
CPS_API int cps_credible_set(const double* probs, int num_classes, double alpha, int* mask_out);
CPS_API void cps_calibration_free(cps_calibration* cal);

/* ---- harness ----------------------------------------------------------- */

/* coverage_out: credible-set coverage on the calibration data.
 * verdict_out: 0 overconfident, 1 within band, 2 underconfident. */
CPS_API int cps_diagnose(const double* probs, const int* labels, long n, int num_classes,
                         double alpha, long n_cal, double* coverage_out, int* verdict_out);

/* stage: generate-data | train | calibrate | evaluate | diagnose | run-all.
 * alphas may be NULL (use the config's); seed_override 0 keeps config seeds. */
CPS_API int cps_pipeline_run(const char* config_path, const char* out_dir, const char* stage,
                             int jobs, uint64_t seed_override, const double* alphas,
                             int n_alphas);

#ifdef __cplusplus
}
#endif

#endif /* CPSETS_H */
