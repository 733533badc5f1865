/* mosk — monotone-operator splitting kit.
 *
 * C interface to the experiment harness: load a JSON config, run it, inspect
 * or persist the iteration trace, fit empirical convergence rates, and check
 * the per-scheme residual bounds.  All objects are opaque handles; every call
 * returns a status code and the last error message is retrievable per thread.
 */
#ifndef MOSK_H
#define MOSK_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mosk_status {
  MOSK_OK = 0,
  MOSK_ERR_CONFIG = 1,
  MOSK_ERR_IO = 2,
  MOSK_ERR_DOMAIN = 3,   /* operator/schedule domain violations */
  MOSK_ERR_NUMERIC = 4,  /* non-finite iterates, failed subproblems */
  MOSK_ERR_INVALID_ARG = 5,
} mosk_status;

typedef struct mosk_trace mosk_trace;

typedef struct mosk_run_options {
  long max_iters;         /* < 0: use the config value */
  double tol;             /* < 0: use the config value */
  int store_iterates;     /* < 0: config value; 0/1 override */
  int experimental_eta0;  /* < 0: config value; 0/1 override */
  long seed;              /* < 0: config value */
} mosk_run_options;

typedef struct mosk_rate_fit {
  double slope;
  double intercept;
  double r_squared;
  long k_min;
  long k_max;
} mosk_rate_fit;

typedef struct mosk_bound_report {
  int passed;
  long checked;
  long violations;
  long worst_k;
  double max_rel_violation;
} mosk_bound_report;

/* Fills opts with "use config value" sentinels. */
void mosk_run_options_init(mosk_run_options* opts);

/* Runs the experiment described by the JSON config file.  The trace is also
 * written to the config's output path (resolved against out_dir) when one is
 * configured.  out_dir and opts may be NULL. */
mosk_status mosk_run_config_file(const char* config_path, const char* out_dir,
                                 const mosk_run_options* opts, mosk_trace** out_trace);
/* Same, from an in-memory JSON string. */
mosk_status mosk_run_config_string(const char* config_json, const char* out_dir,
                                   const mosk_run_options* opts, mosk_trace** out_trace);

mosk_status mosk_trace_open(const char* path, mosk_trace** out_trace);
mosk_status mosk_trace_write(const mosk_trace* trace, const char* path);
void mosk_trace_release(mosk_trace* trace);

long mosk_trace_num_rows(const mosk_trace* trace);
/* Any output pointer may be NULL.  lyapunov/bound_rhs read as NaN when the
 * trace has no value in that column. */
mosk_status mosk_trace_row(const mosk_trace* trace, long index, long* k, double* residual,
                           double* lyapunov, double* eta, double* bound_rhs);
/* Resolved constant from the trace header (e.g. "eta_star", "L", "gamma"). */
mosk_status mosk_trace_constant(const mosk_trace* trace, const char* name, double* value);

/* Least-squares slope of log10(residual) vs log10(k) over [k_min, k_max]. */
mosk_status mosk_fit_rate(const mosk_trace* trace, long k_min, long k_max, double floor,
                          mosk_rate_fit* out);

/* theorem_id: "scheme", "envelope90", or "split_popov_line2". */
mosk_status mosk_check_bound(const mosk_trace* trace, const char* theorem_id,
                             mosk_bound_report* out);

/* Runs every config and writes the comparison table as CSV. */
mosk_status mosk_compare(const char* const* config_paths, size_t n_configs,
                         const mosk_run_options* opts, const char* out_csv_path);

/* Newline-separated registered problem names.  Returns the required buffer
 * size (including the terminator); buffer may be NULL to query the size. */
size_t mosk_list_problems(char* buffer, size_t size);

/* Message for the last failing call on this thread; never NULL. */
const char* mosk_last_error(void);

const char* mosk_version(void);

#ifdef __cplusplus
}
#endif

#endif /* MOSK_H */
