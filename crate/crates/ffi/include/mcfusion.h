#ifndef MCFUSION_H
#define MCFUSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum McfStatus {
  MCF_STATUS_OK = 0,
  MCF_STATUS_NULL_POINTER = 1,
  MCF_STATUS_INVALID_INPUT = 2,
  /**
   * Results were written but the optimizer hit its sweep limit.
   */
  MCF_STATUS_NOT_CONVERGED = 3,
  MCF_STATUS_INTERNAL = 4,
} McfStatus;

typedef enum McfTrial {
  MCF_TRIAL_GAUSSIAN = 0,
  MCF_TRIAL_MIXTURE = 1,
} McfTrial;

typedef struct McfBank McfBank;

typedef struct McfLabels McfLabels;

typedef struct McfRule McfRule;

typedef struct McfScenario McfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next `mcf_*` call on the same thread.
 */
const char *mcf_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *mcf_version(void);

/**
 * Parses a TOML scenario file.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out_scenario` a valid pointer.
 */
enum McfStatus mcf_scenario_from_toml(const char *toml, struct McfScenario **out_scenario);

/**
 * Built-in scenario: 1 is ten sensors with a common signal, 2 is one hundred
 * sensors on fifty paths.
 *
 * # Safety
 * `out_scenario` must be a valid pointer.
 */
enum McfStatus mcf_scenario_example(uint32_t id, struct McfScenario **out_scenario);

/**
 * # Safety
 * `scenario` must come from an `mcf_scenario_*` constructor or be null.
 */
void mcf_scenario_free(struct McfScenario *scenario);

/**
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_scenario_num_sensors(const struct McfScenario *scenario, size_t *out_sensors);

/**
 * The constants `a`, `b`, `c` of the simplified Bayes cost.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_scenario_constants(const struct McfScenario *scenario,
                                      double *out_a,
                                      double *out_b,
                                      double *out_c);

/**
 * Draws `n` importance samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_bank_draw(const struct McfScenario *scenario,
                             enum McfTrial trial,
                             size_t n,
                             uint64_t seed,
                             struct McfBank **out_bank);

/**
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_bank_len(const struct McfBank *bank, size_t *out_len);

/**
 * # Safety
 * `bank` must come from `mcf_bank_draw` or be null.
 */
void mcf_bank_free(struct McfBank *bank);

/**
 * Parses a fusion rule such as `"and"`, `"k-of-l:4"`, `"paths:50"` or
 * `"truth-table:e8"` for `sensors` sensors.
 *
 * # Safety
 * `spec` must be NUL-terminated and `out_rule` valid.
 */
enum McfStatus mcf_rule_parse(const char *spec, size_t sensors, struct McfRule **out_rule);

/**
 * # Safety
 * `rule` must come from `mcf_rule_parse` or be null.
 */
void mcf_rule_free(struct McfRule *rule);

/**
 * Gauss-Seidel optimization from the labels `I[lhat]`. Returns
 * `NotConverged` when `max_sweeps` ran out; the outputs are written either way.
 *
 * # Safety
 * Pointers must be valid; `out_sweeps` and `out_cost` may be null.
 */
enum McfStatus mcf_optimize(const struct McfBank *bank,
                            const struct McfRule *rule,
                            size_t max_sweeps,
                            struct McfLabels **out_labels,
                            size_t *out_sweeps,
                            double *out_cost);

/**
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_labels_get(const struct McfLabels *labels,
                              size_t sensor,
                              size_t sample,
                              uint8_t *out_bit);

/**
 * # Safety
 * `labels` must come from `mcf_optimize` or be null.
 */
void mcf_labels_free(struct McfLabels *labels);

/**
 * Monte Carlo cost of `labels` on `bank` under `rule`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_cost_mc(const struct McfBank *bank,
                           const struct McfLabels *labels,
                           const struct McfRule *rule,
                           double *out_cost);

/**
 * Deploys `labels` by nearest training sample and estimates `pf`, `pd` on
 * `m` fresh draws per hypothesis.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McfStatus mcf_evaluate(const struct McfScenario *scenario,
                            const struct McfBank *bank,
                            const struct McfLabels *labels,
                            const struct McfRule *rule,
                            size_t m,
                            uint64_t seed,
                            double *out_pf,
                            double *out_pd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCFUSION_H */
