#ifndef PLAP_H
#define PLAP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum PlapStatus {
  PLAP_STATUS_OK = 0,
  PLAP_STATUS_NULL_POINTER = 1,
  PLAP_STATUS_INVALID_ARGUMENT = 2,
  PLAP_STATUS_NOT_CONVERGED = 3,
  PLAP_STATUS_NUMERICAL = 4,
  PLAP_STATUS_IO = 5,
  PLAP_STATUS_PANIC = 6,
} PlapStatus;

/* Barenblatt source solution. */
typedef struct PlapBarenblatt PlapBarenblatt;

/* Nodal field on a box grid. */
typedef struct PlapField PlapField;

/* Message for the last failing call on this thread; empty after success.
 * Valid until the next call into the library from the same thread. */
const char *plap_last_error(void);

PlapStatus plap_barenblatt_new(size_t n, double p, double c, PlapBarenblatt **out);

void plap_barenblatt_free(PlapBarenblatt *h);

PlapStatus plap_barenblatt_eval(const PlapBarenblatt *h, const double *x, size_t len, double t, double *out);

/* Total mass, computed by adaptive quadrature with default settings. */
PlapStatus plap_barenblatt_mass(const PlapBarenblatt *h, double t, double *out);

PlapStatus plap_barenblatt_front_radius(const PlapBarenblatt *h, double t, double *out);

/* Giant profile on the box [lo, hi] with cells nodes per axis.
 * eps <= 0 selects the default regularisation. */
PlapStatus plap_giant_solve(size_t dim,
                            const double *lo,
                            const double *hi,
                            const size_t *cells,
                            double p,
                            double eps,
                            PlapField **out);

void plap_field_free(PlapField *h);

/* Node count, or 0 for a null handle. */
size_t plap_field_len(const PlapField *h);

/* Copies the nodal values (lexicographic, first axis fastest) into buf. */
PlapStatus plap_field_values(const PlapField *h, double *buf, size_t len);

/* Runs an experiment by name with TOML config text (may be NULL or empty)
 * and returns the report as JSON through out_json, to be released with
 * plap_string_free. passed (nullable) receives 1 when every verdict
 * passes. No artifacts are written. */
PlapStatus plap_run_experiment(const char *name, const char *config_toml, char **out_json, int32_t *passed);

void plap_string_free(char *s);

#ifdef __cplusplus
}  /* extern "C" */
#endif

#endif  /* PLAP_H */
