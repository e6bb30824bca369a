#ifndef AALEN_H
#define AALEN_H

/* Generated from the aalen-capi crate by cbindgen; regenerate with: AALEN_REGEN_HEADER=1 cargo test -p aalen-capi --test header_sync */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call in this ABI.
typedef enum AalenStatus {
  // The call succeeded.
  AALEN_STATUS_OK = 0,
  // A required pointer argument was `NULL`.
  AALEN_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  AALEN_STATUS_INVALID_UTF8 = 2,
  // A JSON document failed to parse or serialize.
  AALEN_STATUS_JSON = 3,
  // A model, record, or configuration failed structural validation.
  AALEN_STATUS_INVALID_SPEC = 4,
  // An argument violated a documented precondition.
  AALEN_STATUS_PRECONDITION = 5,
  // An MCMC run failed a health check.
  AALEN_STATUS_CHAIN_DIAGNOSTIC = 6,
  // An input/output error was encountered.
  AALEN_STATUS_IO = 7,
  // A panic was caught at the ABI boundary.
  AALEN_STATUS_PANIC = 8,
} AalenStatus;

// Opaque handle over a posterior sample (the kept MCMC draws and their
// per-move acceptance statistics).
typedef struct AalenChain AalenChain;

// Opaque handle over an intensity model.
typedef struct AalenModel AalenModel;

// Opaque handle over a simulated counting-process record.
typedef struct AalenRecord AalenRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the library as a static NUL-terminated string.
//
// The returned pointer is borrowed; do not free it.
const char *aalen_version(void);

// Message of the most recent failure on the calling thread, or an empty
// string if none occurred.
//
// The returned pointer is borrowed and stays valid until the next failing
// call on the same thread; do not free it.
const char *aalen_last_error(void);

// Release a string returned through a `char **` out-pointer.
//
// # Safety
//
// `ptr` must be a pointer previously returned by this library through a
// `char **` out-pointer (or `NULL`), and must not be used afterwards.
void aalen_string_free(char *ptr);

// Parse an intensity model from its JSON representation and validate it.
//
// On success `*out` owns the new handle.
//
// # Safety
//
// `json` must be a NUL-terminated string and `out` a valid pointer; the
// handle written to `*out` must be released with [`aalen_model_free`].
enum AalenStatus aalen_model_from_json(const char *json, struct AalenModel **out);

// Serialize a model back to JSON.
//
// # Safety
//
// `model` must be a live handle and `out` a valid pointer; release the
// string written to `*out` with [`aalen_string_free`].
enum AalenStatus aalen_model_to_json(const struct AalenModel *model, char **out);

// Evaluate the model's intensity at time `t` (zero outside its domain).
//
// # Safety
//
// `model` must be a live handle and `out` a valid pointer.
enum AalenStatus aalen_model_eval(const struct AalenModel *model, double t, double *out);

// Total mass `\int lambda dt` of the model over its domain.
//
// # Safety
//
// `model` must be a live handle and `out` a valid pointer.
enum AalenStatus aalen_model_mass(const struct AalenModel *model, double *out);

// Release a model handle.
//
// # Safety
//
// `model` must be a handle returned by this library (or `NULL`) and must
// not be used afterwards.
void aalen_model_free(struct AalenModel *model);

// Simulate one record from a model specification given as JSON (the same
// schema the CLI `simulate` subcommand accepts).
//
// # Safety
//
// `spec_json` must be a NUL-terminated string and `out` a valid pointer;
// release the handle written to `*out` with [`aalen_record_free`].
enum AalenStatus aalen_simulate(const char *spec_json, uint64_t seed, struct AalenRecord **out);

// Parse a previously serialized record and validate it.
//
// # Safety
//
// `json` must be a NUL-terminated string and `out` a valid pointer;
// release the handle written to `*out` with [`aalen_record_free`].
enum AalenStatus aalen_record_from_json(const char *json, struct AalenRecord **out);

// Serialize a record back to JSON.
//
// # Safety
//
// `record` must be a live handle and `out` a valid pointer; release the
// string written to `*out` with [`aalen_string_free`].
enum AalenStatus aalen_record_to_json(const struct AalenRecord *record, char **out);

// Number of events in the record.
//
// # Safety
//
// `record` must be a live handle and `out` a valid pointer.
enum AalenStatus aalen_record_event_count(const struct AalenRecord *record, size_t *out);

// Release a record handle.
//
// # Safety
//
// `record` must be a handle returned by this library (or `NULL`) and must
// not be used afterwards.
void aalen_record_free(struct AalenRecord *record);

// Exact log-likelihood of `model` against `record`: the total, the event
// term `sum_i log lambda(t_i)`, and the integral term `\int lambda Y dt`.
// Any of the three out-pointers may be `NULL` to skip that component.
//
// # Safety
//
// `model` and `record` must be live handles; non-`NULL` out-pointers must
// be valid.
enum AalenStatus aalen_log_likelihood(const struct AalenModel *model,
                                      const struct AalenRecord *record,
                                      double *value,
                                      double *event_term,
                                      double *integral_term);

// L1 distance between two models over the hull of their domains.
//
// # Safety
//
// `a` and `b` must be live handles and `out` a valid pointer.
enum AalenStatus aalen_l1_distance(const struct AalenModel *a,
                                   const struct AalenModel *b,
                                   double *out);

// Hellinger distance between two normalized densities (errors unless both
// models have unit mass).
//
// # Safety
//
// `a` and `b` must be live handles and `out` a valid pointer.
enum AalenStatus aalen_hellinger(const struct AalenModel *a,
                                 const struct AalenModel *b,
                                 double *out);

// The explicit constant `kappa0(m1, m2, m0_mass)` bounding the working
// model's KL divergence over the standard neighborhoods.
//
// # Safety
//
// `out` must be a valid pointer.
enum AalenStatus aalen_kappa0(double m1, double m2, double m0_mass, double *out);

// KL divergence of the event process between `lambda0` and `lambda`
// under the observation environment of `spec_json` (a model
// specification) with concentration tolerance `alpha`.  `+inf` is
// returned when the divergence diverges.
//
// # Safety
//
// `spec_json` must be a NUL-terminated string, `lambda0` and `lambda`
// live handles, and `out` a valid pointer.
enum AalenStatus aalen_kl_divergence(const char *spec_json,
                                     double alpha,
                                     const struct AalenModel *lambda0,
                                     const struct AalenModel *lambda,
                                     double *out);

// Run the posterior sampler selected by `prior_json` (a prior
// specification tagged by `family`) on `record`.  `mcmc_json` configures
// the chain; pass `NULL` for the default settings.
//
// # Safety
//
// `record` must be a live handle, `prior_json` a NUL-terminated string,
// `mcmc_json` a NUL-terminated string or `NULL`, and `out` a valid
// pointer; release the handle written to `*out` with
// [`aalen_chain_free`].
enum AalenStatus aalen_fit(const struct AalenRecord *record,
                           const char *prior_json,
                           const char *mcmc_json,
                           uint64_t seed,
                           struct AalenChain **out);

// Number of kept draws in the chain.
//
// # Safety
//
// `chain` must be a live handle and `out` a valid pointer.
enum AalenStatus aalen_chain_len(const struct AalenChain *chain, size_t *out);

// Serialize the draw at `index` (zero-based) to model JSON.
//
// # Safety
//
// `chain` must be a live handle and `out` a valid pointer; release the
// string written to `*out` with [`aalen_string_free`].
enum AalenStatus aalen_chain_draw_json(const struct AalenChain *chain, size_t index, char **out);

// Summarize the chain against a reference model: mean/median L1 error,
// the posterior mass outside the L1 ball of the given radius, and
// pointwise 5%/95% bands on a fixed grid, serialized as JSON.
//
// # Safety
//
// `chain` and `reference` must be live handles and `out` a valid
// pointer; release the string written to `*out` with
// [`aalen_string_free`].
enum AalenStatus aalen_chain_summary_json(const struct AalenChain *chain,
                                          const struct AalenModel *reference,
                                          double radius,
                                          char **out);

// Release a chain handle.
//
// # Safety
//
// `chain` must be a handle returned by this library (or `NULL`) and must
// not be used afterwards.
void aalen_chain_free(struct AalenChain *chain);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AALEN_H */
