#ifndef CAVITY_SPINWAVE_H
#define CAVITY_SPINWAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum {
  CSW_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  CSW_STATUS_NULL_ARGUMENT = 1,
  /**
   * A parameter, grid or record failed validation.
   */
  CSW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The integrator or a linear solve failed.
   */
  CSW_STATUS_NUMERICAL = 3,
  /**
   * A correlator or correction has a zero or negative denominator.
   */
  CSW_STATUS_UNDEFINED = 4,
  /**
   * A caller-provided buffer has the wrong length.
   */
  CSW_STATUS_BUFFER_SIZE = 5,
  CSW_STATUS_PANIC = 6,
} CswStatus;

/**
 * Opaque accumulated detection record.
 */
typedef struct CswDetectionRecord CswDetectionRecord;

/**
 * Opaque result of one read-out integration.
 */
typedef struct CswRetrieval CswRetrieval;

/**
 * Resonator description.
 */
typedef struct {
  double mirror_reflectivity;
  double round_trip_loss;
  double length_m;
  double waist_m;
  double wavelength_m;
  /**
   * Transition dipole moment in C·m.
   */
  double dipole_moment_cm;
} CswCavityGeometry;

/**
 * Derived resonator constants. Linewidths are half-widths in MHz.
 */
typedef struct {
  double finesse;
  double fsr_mhz;
  double kappa_mhz;
  double kappa0_mhz;
  double escape_efficiency;
} CswCavityDerived;

/**
 * Two-level probe response parameters, in MHz.
 */
typedef struct {
  double g_mhz;
  double kappa_mhz;
  double kappa0_mhz;
  double gamma_mhz;
  double delta_c_mhz;
} CswTwoLevelParams;

/**
 * Three-level read-out parameters. `gamma_s_mhz` is the spin-wave decay.
 */
typedef struct {
  double g_mhz;
  double kappa_mhz;
  double gamma_mhz;
  double gamma_s_mhz;
  double delta_c_mhz;
  double delta_r_mhz;
} CswThreeLevelParams;

/**
 * Gaussian read pulse.
 */
typedef struct {
  double peak_rabi_mhz;
  double center_us;
  double fwhm_us;
} CswReadPulse;

/**
 * Integrator settings. A non-positive `horizon_us` selects the default.
 */
typedef struct {
  double tolerance;
  double horizon_us;
  size_t samples;
} CswRetrievalOptions;

/**
 * Where the unit spin-wave excitation ended up.
 */
typedef struct {
  double through_cavity;
  double through_atom;
  double through_spin;
  double residual_norm;
} CswDecayBudget;

/**
 * Optical efficiencies from read photon to click.
 */
typedef struct {
  double escape;
  double transmission;
  double detection;
} CswEfficiencyChain;

/**
 * Source model for synthetic detection records.
 */
typedef struct {
  double mean_excitations;
  double chi_true;
  CswEfficiencyChain chain;
  double write_efficiency;
  double dark_count;
  /**
   * Background gates; `UINT64_MAX` matches the trial count.
   */
  uint64_t background_trials;
} CswDetectionModel;

/**
 * Value with a one-sigma statistical error.
 */
typedef struct {
  double value;
  double error;
} CswMeasured;

/**
 * Estimator chain output. The Cauchy-Schwarz fields are meaningful only when
 * `cauchy_schwarz_defined` is true.
 */
typedef struct {
  uint64_t trials;
  CswMeasured p_w;
  CswMeasured p_r;
  CswMeasured p_wr;
  CswMeasured p_r_given_w;
  CswMeasured p_b;
  double eta_tot;
  CswMeasured g2_wr;
  CswMeasured g2_ww;
  CswMeasured g2_rr;
  CswMeasured p_rw_corrected;
  CswMeasured chi;
  double chi_raw;
  bool chi_out_of_model;
  bool cauchy_schwarz_defined;
  double cauchy_schwarz_ratio;
  double cauchy_schwarz_bound;
  double cauchy_schwarz_significance;
  bool nonclassical;
} CswStatsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *csw_version(void);

/**
 * Copies the calling thread's last error message into `buf`, truncating to
 * `len - 1` bytes plus NUL. Returns the full message length including NUL,
 * or 0 if no error has been recorded. `buf` may be NULL to query the length.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t csw_last_error_message(char *buf, size_t len);

/**
 * Clears the calling thread's last error.
 */
void csw_clear_error(void);

/**
 * Writes the reference resonator into `out`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
CswStatus csw_cavity_reference(CswCavityGeometry *out);

/**
 * # Safety
 * `geometry` must be NULL or valid for reads; `out` NULL or valid for writes.
 */
CswStatus csw_derive_cavity(const CswCavityGeometry *geometry, CswCavityDerived *out);

/**
 * Reflectance at `len` probe offsets (MHz from the atomic resonance).
 *
 * # Safety
 * `probe_mhz` and `out` must each hold `len` elements; `params` must be valid.
 */
CswStatus csw_reflectance(const CswTwoLevelParams *params,
                          const double *probe_mhz,
                          double *out,
                          size_t len);

/**
 * # Safety
 * `out` must be NULL or valid for writes.
 */
CswStatus csw_reference_params(CswThreeLevelParams *out);

/**
 * # Safety
 * `out` must be NULL or valid for writes.
 */
CswStatus csw_reference_pulse(CswReadPulse *out);

/**
 * # Safety
 * `out` must be NULL or valid for writes.
 */
CswStatus csw_default_retrieval_options(CswRetrievalOptions *out);

/**
 * Integrates the read-out of a unit spin wave. On success `*out` owns a
 * handle to release with [`csw_retrieval_free`].
 *
 * # Safety
 * Input pointers must be NULL or valid for reads; `out` NULL or valid for writes.
 */
CswStatus csw_retrieval_run(const CswThreeLevelParams *params,
                            const CswReadPulse *pulse,
                            const CswRetrievalOptions *options,
                            CswRetrieval **out);

/**
 * Retrieval efficiency χ, or NaN for a NULL handle.
 *
 * # Safety
 * `handle` must be NULL or returned by [`csw_retrieval_run`] and not freed.
 */
double csw_retrieval_efficiency(const CswRetrieval *handle);

/**
 * # Safety
 * `handle` as for [`csw_retrieval_efficiency`]; `out` NULL or valid for writes.
 */
CswStatus csw_retrieval_budget(const CswRetrieval *handle, CswDecayBudget *out);

/**
 * Number of waveform samples held by the handle; 0 for NULL.
 *
 * # Safety
 * `handle` as for [`csw_retrieval_efficiency`].
 */
size_t csw_retrieval_sample_count(const CswRetrieval *handle);

/**
 * Copies the sampled waveform |a(t)|². `len` must equal the sample count.
 *
 * # Safety
 * `handle` as for [`csw_retrieval_efficiency`]; `times_us` and `intensity`
 * must each hold `len` writable elements.
 */
CswStatus csw_retrieval_samples(const CswRetrieval *handle,
                                double *times_us,
                                double *intensity,
                                size_t len);

/**
 * # Safety
 * `handle` must be NULL or returned by [`csw_retrieval_run`] and not yet freed.
 */
void csw_retrieval_free(CswRetrieval *handle);

/**
 * Efficiency over a (Δc, Δr) grid, written row-major as
 * `chi_out[i_dc * dr_len + i_dr]`. Axes are strictly monotone, in MHz.
 *
 * # Safety
 * Axis pointers must hold their lengths; `chi_out` must hold
 * `dr_len * dc_len` elements; the structs must be valid for reads.
 */
CswStatus csw_scan_efficiency(const CswThreeLevelParams *params,
                              const CswReadPulse *pulse,
                              const CswRetrievalOptions *options,
                              const double *dr_mhz,
                              size_t dr_len,
                              const double *dc_mhz,
                              size_t dc_len,
                              double *chi_out);

/**
 * Simulates `trials` write/read trials. Output depends only on the model,
 * `trials` and `seed`. On success `*out` owns a handle to release with
 * [`csw_detection_record_free`].
 *
 * # Safety
 * `model` must be NULL or valid for reads; `out` NULL or valid for writes.
 */
CswStatus csw_detection_simulate(const CswDetectionModel *model,
                                 uint64_t trials,
                                 uint64_t seed,
                                 CswDetectionRecord **out);

/**
 * Click-count histogram as `out[write_clicks * 3 + read_clicks]` (9 entries).
 *
 * # Safety
 * `handle` must be NULL or a live record handle; `out` must hold 9 elements.
 */
CswStatus csw_detection_histogram(const CswDetectionRecord *handle, uint64_t *out);

/**
 * # Safety
 * `handle` must be NULL or a live record handle; `chain` NULL or valid for
 * reads; `out` NULL or valid for writes.
 */
CswStatus csw_detection_summarize(const CswDetectionRecord *handle,
                                  const CswEfficiencyChain *chain,
                                  CswStatsSummary *out);

/**
 * # Safety
 * `handle` must be NULL or returned by [`csw_detection_simulate`] and not yet freed.
 */
void csw_detection_record_free(CswDetectionRecord *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAVITY_SPINWAVE_H */
