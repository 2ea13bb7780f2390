#ifndef PABF_H
#define PABF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every call.
 */
enum PabfStatus {
  PABF_STATUS_OK = 0,
  PABF_STATUS_NULL_POINTER = 1,
  PABF_STATUS_INVALID_UTF8 = 2,
  PABF_STATUS_CONFIG = 3,
  PABF_STATUS_PRECONDITION = 4,
  PABF_STATUS_BLOWUP = 5,
  PABF_STATUS_SOLVER_FAILURE = 6,
  PABF_STATUS_BUFFER_SIZE = 7,
  PABF_STATUS_INVALID_GRID = 8,
  PABF_STATUS_OTHER = 9,
  PABF_STATUS_PANIC = 10,
};
typedef int32_t PabfStatus;

/**
 * Opaque simulation handle.
 */
typedef struct PabfSimulation PabfSimulation;

/**
 * Create a simulation from configuration text (the `key = value` format of
 * the command-line tool). On success `*out` receives the handle.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a writable pointer.
 */
PabfStatus pabf_simulation_new(const char *config, struct PabfSimulation **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from [`pabf_simulation_new`] and not be used afterwards.
 */
void pabf_simulation_free(struct PabfSimulation *sim);

/**
 * Advance `n` sweeps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
PabfStatus pabf_simulation_run_sweeps(struct PabfSimulation *sim, size_t n);

/**
 * Grid shape, completed sweeps, simulated time and deposit count. Any
 * output pointer may be null.
 *
 * # Safety
 * `sim` must be a live handle; non-null outputs must be writable.
 */
PabfStatus pabf_simulation_info(const struct PabfSimulation *sim,
                                size_t *n1,
                                size_t *n2,
                                size_t *sweeps,
                                double *time,
                                uint64_t *deposits);

/**
 * Current estimate: mean force `F`, projected potential `A`, its gradient
 * and the histogram density. Each buffer holds `len` doubles and may be
 * null to skip that field; `len` must equal `n1 * n2`.
 *
 * # Safety
 * `sim` must be a live handle; non-null buffers must hold `len` doubles.
 */
PabfStatus pabf_simulation_fields(struct PabfSimulation *sim,
                                  size_t len,
                                  double *force1,
                                  double *force2,
                                  double *potential,
                                  double *grad1,
                                  double *grad2,
                                  double *density);

/**
 * Weighted Helmholtz projection of `(f1, f2)` with weight `psi` on an
 * `n1 × n2` periodic grid of size `l1 × l2`. Writes the mean-zero potential
 * and its gradient; `grad1`/`grad2` may be null. `max_iter = 0` selects the
 * default iteration cap.
 *
 * # Safety
 * Inputs must hold `n1 * n2` doubles; non-null outputs likewise.
 */
PabfStatus pabf_project(size_t n1,
                        size_t n2,
                        double l1,
                        double l2,
                        const double *f1,
                        const double *f2,
                        const double *psi,
                        double tol,
                        size_t max_iter,
                        double *potential,
                        double *grad1,
                        double *grad2);

/**
 * Description of the last failure on this thread, or null if none. The
 * string is owned by the caller and must be released with
 * [`pabf_string_free`].
 */
char *pabf_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from [`pabf_last_error`] and not be freed twice.
 */
void pabf_string_free(char *s);

#endif  /* PABF_H */
