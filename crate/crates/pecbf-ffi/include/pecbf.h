#ifndef PECBF_H
#define PECBF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PecbfStatus {
  PecbfOk = 0,
  /**
   * A required pointer was null.
   */
  PecbfNullArgument = 1,
  /**
   * A parameter failed validation; the handle is unchanged.
   */
  PecbfInvalidArgument = 2,
  /**
   * Internal failure while solving.
   */
  PecbfSolverFailure = 3,
} PecbfStatus;

/**
 * Opaque safety filter: controller settings plus the ego vehicle model.
 */
typedef struct PecbfFilter PecbfFilter;

/**
 * Planar vehicle state.
 */
typedef struct PecbfState {
  double x;
  double y;
  /**
   * Heading (rad).
   */
  double psi;
  /**
   * Speed (m/s).
   */
  double v;
} PecbfState;

/**
 * Longitudinal gap constraint against one surrounding vehicle, with the
 * ego-relative velocity noise acting on it.
 */
typedef struct PecbfGapBarrier {
  struct PecbfState other;
  /**
   * Other vehicle's current acceleration input.
   */
  double other_a;
  /**
   * Other vehicle's current steering input.
   */
  double other_beta;
  /**
   * Required longitudinal clearance (m), > 0.
   */
  double r_margin;
  /**
   * Mean of the relative velocity noise (m/s).
   */
  double noise_mean;
  /**
   * Standard deviation of the relative velocity noise (m/s), >= 0.
   */
  double noise_sd;
} PecbfGapBarrier;

/**
 * Planar box-separation constraint against one crossing vehicle, with
 * per-axis ego-relative velocity noise.
 */
typedef struct PecbfBoxBarrier {
  struct PecbfState other;
  double other_a;
  double other_beta;
  /**
   * Extra separation margin (m), >= 0.
   */
  double r_extra;
  /**
   * Nonzero inflates the boxes for the current headings; zero keeps the
   * raw axis-aligned half-extents.
   */
  uint8_t heading_inflated;
  double noise_mean_x;
  double noise_mean_y;
  double noise_sd_x;
  double noise_sd_y;
} PecbfBoxBarrier;

/**
 * Filtered control and solve diagnostics.
 */
typedef struct PecbfDecision {
  /**
   * Acceleration command (m/s^2).
   */
  double a;
  /**
   * Steering command (rad).
   */
  double beta;
  /**
   * Zero when no constraint set was satisfiable and the decision is the
   * full-braking fallback.
   */
  uint8_t feasible;
  /**
   * Attained objective; infinity when infeasible.
   */
  double objective;
  /**
   * Index of the winning constraint-branch combination.
   */
  uint64_t branch_id;
} PecbfDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying library as a static NUL-terminated string.
 */
const char *pecbf_version(void);

/**
 * Inverse standard normal CDF. `p` must lie strictly inside (0, 1).
 */
enum PecbfStatus pecbf_inv_norm_cdf(double p, double *out);

/**
 * Creates a filter with the given desired poles and confidence level.
 * `probabilistic` selects chance-constraint tightening, `gain_search`
 * the per-step pole optimization; zero/zero reproduces the classical
 * deterministic filter. Returns null if the settings are invalid.
 */
struct PecbfFilter *pecbf_filter_new(double desired_p1,
                                     double desired_p2,
                                     double eta,
                                     uint8_t probabilistic,
                                     uint8_t gain_search);

/**
 * Frees a filter created by `pecbf_filter_new`. Null is a no-op.
 */
void pecbf_filter_free(struct PecbfFilter *filter);

/**
 * Sets the objective weights: `c1` prices input deviation, `c2` pole
 * deviation.
 */
enum PecbfStatus pecbf_filter_set_weights(struct PecbfFilter *filter, double c1, double c2);

/**
 * Replaces the pole candidate grid. Values must be positive, at most the
 * pole cap, and include both desired poles.
 */
enum PecbfStatus pecbf_filter_set_pole_grid(struct PecbfFilter *filter,
                                            const double *values,
                                            uintptr_t len);

/**
 * Sets the stability cap on pole candidates, typically just below the
 * reciprocal of the integration step.
 */
enum PecbfStatus pecbf_filter_set_pole_cap(struct PecbfFilter *filter, double cap);

/**
 * Sets the ego vehicle model: rear-axle distance, box half-extents, and
 * input bounds.
 */
enum PecbfStatus pecbf_filter_set_vehicle(struct PecbfFilter *filter,
                                          double l_r,
                                          double b_x,
                                          double b_y,
                                          double a_min,
                                          double a_max,
                                          double beta_min,
                                          double beta_max);

/**
 * Filters one desired control against the supplied constraints. Either
 * barrier array may be null when its count is zero. Infeasibility is not
 * an error: the decision then carries the full-braking fallback with
 * `feasible` zero.
 */
enum PecbfStatus pecbf_filter_solve(struct PecbfFilter *filter,
                                    const struct PecbfState *ego,
                                    double desired_a,
                                    double desired_beta,
                                    const struct PecbfGapBarrier *gap_barriers,
                                    uintptr_t n_gap,
                                    const struct PecbfBoxBarrier *box_barriers,
                                    uintptr_t n_box,
                                    struct PecbfDecision *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PECBF_H */
