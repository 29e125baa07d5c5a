#pragma once

#include "reirl/knn_policy.hpp"
#include "reirl/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reirl {

/// Recovered reward weights with provenance.
struct ThetaVector {
  Vec weights;
  int iteration = 0;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  int horizon = 0;
};

/// Slack widths for the feature-count matching constraints.
struct ToleranceVector {
  Vec eps;  // nonnegative, one per feature
  double delta = 0.05;
  std::int64_t N = 0;
  double gamma = 1.0;
  int horizon = 0;
  bool standard_hoeffding = false;
};

struct AscentConfig {
  double alpha = 1e-3;
  int max_iters = 50000;
  double grad_tol = 1e-4;
  std::uint64_t seed = 0;
  int uniform_action_count = kActionCount;
  double theta_cap = 1e3;  // divergence detector on the sup-norm
};

struct AscentIterate {
  Vec theta;
  double grad_norm = 0.0;  // sup-norm of the estimated gradient
  double z = 0.0;          // same-batch partition estimate
};

struct AscentTrace {
  std::vector<AscentIterate> iterates;
  ThetaVector final_theta;
  bool converged = false;
  std::int64_t included_trajectories = 0;
  std::int64_t excluded_trajectories = 0;
  ToleranceVector tolerances;
  Vec mean_counts;
};

/// Concentration width for the count-matching constraints:
///   eps_k = radius(N, delta) * (1 + gamma + ... + gamma^H) * (u_k - l_k)
/// with radius = sqrt(-ln(1 - delta) / 2N), or sqrt(ln(2/delta) / 2N) when
/// `standard_hoeffding` is set (the two-sided Hoeffding radius).
ToleranceVector epsilon_bounds(std::int64_t N, double delta, double gamma, int horizon,
                               const FeatureBounds& bounds,
                               bool standard_hoeffding = false);

/// Dual objective g(theta) = theta . shat - ln Z - sum_k |theta_k| eps_k.
double surrogate_objective(const Vec& theta, const Vec& shat, double Z,
                           const ToleranceVector& eps);

/// Demonstration batch reduced to the quantities the estimator needs:
/// per-trajectory feature counts and log importance ratios
/// log[(1/|A|)^H / pi(tau)]. Both are independent of theta, so one
/// preparation serves a whole ascent.
struct PreparedBatch {
  Mat counts;     // N_included x K
  Vec log_ratio;  // N_included
  std::int64_t included = 0;
  std::int64_t excluded = 0;
  int horizon = 0;
  double gamma = 1.0;

  Vec mean_counts() const;
};

PreparedBatch prepare_batch(const TrajectorySet& set, const PolicyTable& table,
                            int uniform_action_count,
                            std::vector<std::string>* warnings = nullptr);

/// One theta evaluation over a batch, computed with a shared max-shift so the
/// exponentials never overflow. Z = exp(shift) * mean_weight.
struct BatchEval {
  double shift = 0.0;
  double mean_weight = 0.0;   // (1/N) sum_tau exp(log_ratio + theta.s - shift)
  Vec weighted_counts;        // (1/N) sum_tau exp(...) * s_tau
  double partition() const;
};

BatchEval evaluate_batch(const Vec& theta, const PreparedBatch& batch);

/// Importance-sampling estimate of the partition function:
///   Z(theta) ~= (1/N) sum_tau [pi_Q(tau) / pi(tau)] exp(theta . s_tau)
/// with pi_Q(tau) = (1/|A|)^H. Trajectories without a policy likelihood are
/// excluded with a warning and N adjusted.
double partition_estimate(const Vec& theta, const TrajectorySet& set,
                          const PolicyTable& table, int uniform_action_count);

/// Sample estimate of the gradient of the surrogate objective:
///   shat_k - (1/(N Z)) sum_tau w_tau s_k exp(theta . s) - a_k eps_k,
/// where a_k = +1 if theta_k >= 0 and -1 otherwise, and Z is the same-batch
/// partition estimate.
Vec gradient_estimate(const Vec& theta, const TrajectorySet& set,
                      const PolicyTable& table, const Vec& shat,
                      const ToleranceVector& eps, int uniform_action_count);

/// Fixed-step gradient ascent from theta = 0. Stops when the estimated
/// gradient sup-norm falls to grad_tol or after max_iters. Aborts with a
/// diagnostic if the iterate sup-norm exceeds the configured cap. Fully
/// deterministic: the batch is fixed, so two runs with equal inputs and
/// config produce identical traces.
AscentTrace ascend(const TrajectorySet& set, const PolicyTable& table,
                   const AscentConfig& config, double delta);

/// Linear reward theta . s; missing entries contribute 0 (standardized
/// space). Throws DataError on dimension mismatch.
double reward(const Vec& theta, const Vec& state);

}  // namespace reirl
