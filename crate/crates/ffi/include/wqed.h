#ifndef WQED_H
#define WQED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define WQ_MODE_MARKOVIAN 0

#define WQ_MODE_EXACT 1

#define WQ_INCIDENCE_LEFT 0

#define WQ_INCIDENCE_RIGHT 1

/**
 * Result of every fallible call.
 */
typedef enum WqStatus {
  WQ_STATUS_OK = 0,
  WQ_STATUS_NULL_POINTER = 1,
  WQ_STATUS_INVALID_ARGUMENT = 2,
  WQ_STATUS_NUMERIC_FAILURE = 3,
  WQ_STATUS_CALIBRATION_FAILURE = 4,
  /**
   * The requested quantity is undefined at this point (zero transmission, no flux).
   */
  WQ_STATUS_UNDEFINED = 5,
  WQ_STATUS_PANIC = 6,
} WqStatus;

/**
 * Opaque emitter chain.
 */
typedef struct WqChain WqChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Pair of two-level emitters at `-+ k0l / 2` with frequencies `omega0 +- delta / 2`.
 */
enum WqStatus wq_chain_new_pair(double omega0,
                                double delta,
                                double gamma,
                                double k0l,
                                double loss,
                                struct WqChain **out);

/**
 * Two-level / driven three-level / two-level chain. `k0l` is the phase between the outer
 * emitters; the driven emitter sits in the middle.
 */
enum WqStatus wq_chain_new_232(double omega0,
                               double delta,
                               double gamma,
                               double rabi,
                               double lambda_detuning,
                               double k0l,
                               double loss,
                               struct WqChain **out);

/**
 * Single driven three-level emitter at the origin.
 */
enum WqStatus wq_chain_new_lambda(double omega0,
                                  double detuning,
                                  double rabi,
                                  double gamma,
                                  double loss_excited,
                                  double loss_metastable,
                                  struct WqChain **out);

/**
 * Release a chain. Null is ignored.
 */
void wq_chain_free(struct WqChain *chain);

/**
 * Number of emitters, or 0 for a null handle.
 */
size_t wq_chain_len(const struct WqChain *chain);

/**
 * Single-photon transmission amplitude `t(k)`.
 */
enum WqStatus wq_transmission(const struct WqChain *chain,
                              double k,
                              int mode,
                              double *re,
                              double *im);

/**
 * Calibrated inelastic fluxes into the transmitted and reflected channels.
 */
enum WqStatus wq_inelastic_flux(const struct WqChain *chain,
                                double k,
                                int incidence,
                                double *transmitted,
                                double *reflected);

/**
 * Transmitted-channel g2 at `n` delays; `out` receives `n` values.
 */
enum WqStatus wq_g2(const struct WqChain *chain,
                    double k,
                    int incidence,
                    const double *times,
                    size_t n,
                    double *out);

/**
 * Group delay `d arg t / dk`.
 */
enum WqStatus wq_time_delay(const struct WqChain *chain, double k, int mode, double *out);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated, truncated to
 * `len`). Returns the full message length including the terminator, or 0 if there is none.
 */
size_t wq_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wq_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WQED_H */
