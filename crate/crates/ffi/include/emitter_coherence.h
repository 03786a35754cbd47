#ifndef EMITTER_COHERENCE_H
#define EMITTER_COHERENCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Damping regime of the driven population, as returned by [`emc_fit_g2`].
typedef enum EmcDamping {
  EMC_DAMPING_OSCILLATORY = 0,
  EMC_DAMPING_CRITICALLY_DAMPED = 1,
  EMC_DAMPING_OVERDAMPED = 2,
} EmcDamping;

// Coherent-driving class for a dephasing slope, see [`emc_regime_from_slope`].
typedef enum EmcRegime {
  EMC_REGIME_FULLY_COHERENT_PI_CAPABLE = 0,
  EMC_REGIME_COHERENT_PI2_ONLY = 1,
  EMC_REGIME_INCOHERENT_UNDERDAMPED = 2,
  EMC_REGIME_OVERDAMPED = 3,
} EmcRegime;

typedef enum EmcStatus {
  EMC_STATUS_OK = 0,
  EMC_STATUS_INVALID_ARGUMENT = 1,
  EMC_STATUS_NULL_POINTER = 2,
  EMC_STATUS_NUMERICAL = 3,
  EMC_STATUS_IO = 4,
  EMC_STATUS_PANIC = 5,
} EmcStatus;

// Coincidence histogram.
typedef struct EmcCurve EmcCurve;

// Emitter parameters.
typedef struct EmcEmitter EmcEmitter;

// Simulated photon arrival times.
typedef struct EmcStream EmcStream;

typedef struct EmcG2Fit {
  double omega;
  double omega_sigma;
  double gamma_perp;
  double gamma_perp_sigma;
  double gamma_c;
  double gamma_c_sigma;
  double reduced_chi2;
  int32_t damping;
  bool pinned_at_floor;
  bool converged;
} EmcG2Fit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *emc_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *emc_version(void);

// Creates an emitter handle. Release it with [`emc_emitter_free`].
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum EmcStatus emc_emitter_new(double gamma,
                               double gamma_c,
                               double omega,
                               double delta,
                               struct EmcEmitter **out);

// # Safety
// `emitter` must be NULL or a handle from [`emc_emitter_new`] not yet freed.
void emc_emitter_free(struct EmcEmitter *emitter);

// Resonant correlation function at delay `tau`.
//
// # Safety
// `emitter` must be a live handle and `out` writable.
enum EmcStatus emc_g2_resonant(const struct EmcEmitter *emitter, double tau, double *out);

// Steady-state excited-state population.
//
// # Safety
// `emitter` must be a live handle and `out` writable.
enum EmcStatus emc_emission_rate(const struct EmcEmitter *emitter, double *out);

// Correlation function averaged over a Gaussian detuning spread of standard
// deviation `sigma`, evaluated at `n` delays.
//
// # Safety
// `taus` and `out` must each point to `n` doubles; `emitter` must be live.
enum EmcStatus emc_g2_diffused(const struct EmcEmitter *emitter,
                               double sigma,
                               const double *taus,
                               size_t n,
                               double *out);

// Spectral diffusion rate bound from scan speed (Hz/s) and linewidths (Hz).
//
// # Safety
// `out` must be writable.
enum EmcStatus emc_diffusion_rate(double u_l, double dv_ftl, double dv_single, double *out);

// Coherent-driving class of a dephasing-versus-Rabi slope.
enum EmcRegime emc_regime_from_slope(double m);

// Simulates a detected photon stream without spectral diffusion.
//
// # Safety
// `emitter` must be live and `out` writable.
enum EmcStatus emc_stream_simulate(const struct EmcEmitter *emitter,
                                   double duration,
                                   double efficiency,
                                   uint64_t seed,
                                   struct EmcStream **out);

// Wraps caller-supplied arrival times (seconds, sorted) as a stream.
//
// # Safety
// `times` must point to `n` doubles and `out` be writable.
enum EmcStatus emc_stream_from_times(const double *times,
                                     size_t n,
                                     double duration,
                                     struct EmcStream **out);

// Number of photons in the stream; 0 for NULL.
//
// # Safety
// `stream` must be NULL or live.
size_t emc_stream_len(const struct EmcStream *stream);

// Copies up to `capacity` arrival times into `buf`; writes the count copied.
//
// # Safety
// `stream` must be live, `buf` hold `capacity` doubles, `written` be writable.
enum EmcStatus emc_stream_copy_times(const struct EmcStream *stream,
                                     double *buf,
                                     size_t capacity,
                                     size_t *written);

// # Safety
// `stream` must be NULL or a live handle, and not used afterwards.
void emc_stream_free(struct EmcStream *stream);

// Coincidence histogram of a stream over |tau| <= `max_tau`.
//
// # Safety
// `stream` must be live and `out` writable.
enum EmcStatus emc_correlate(const struct EmcStream *stream,
                             double bin_width,
                             double max_tau,
                             struct EmcCurve **out);

// Builds a histogram from bin centres and raw counts.
//
// # Safety
// `taus` and `counts` must each point to `n` doubles; `out` writable.
enum EmcStatus emc_curve_new(const double *taus,
                             const double *counts,
                             size_t n,
                             double bin_width,
                             struct EmcCurve **out);

// Number of bins; 0 for NULL.
//
// # Safety
// `curve` must be NULL or live.
size_t emc_curve_len(const struct EmcCurve *curve);

// Copies bin centres, raw counts and normalised g2 into arrays of length
// `emc_curve_len(curve)`. Any output pointer may be NULL to skip it.
//
// # Safety
// `curve` must be live; non-NULL outputs must hold `emc_curve_len` doubles.
enum EmcStatus emc_curve_copy(const struct EmcCurve *curve,
                              double *taus,
                              double *counts,
                              double *g2);

// # Safety
// `curve` must be NULL or a live handle, and not used afterwards.
void emc_curve_free(struct EmcCurve *curve);

// Fits Rabi frequency and dephasing to a histogram, starting from a guess
// read off the curve. `sigma` is the detuning spread held fixed (0 for none).
//
// # Safety
// `curve` must be live and `out` writable.
enum EmcStatus emc_fit_g2(const struct EmcCurve *curve,
                          double gamma,
                          double sigma,
                          struct EmcG2Fit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMITTER_COHERENCE_H */
