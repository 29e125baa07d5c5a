#include "reirl/estimator.hpp"

#include "reirl/errors.hpp"
#include "reirl/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reirl {

ToleranceVector epsilon_bounds(std::int64_t N, double delta, double gamma, int horizon,
                               const FeatureBounds& bounds, bool standard_hoeffding) {
  if (N < 1) throw ConfigError("N must be at least 1");
  if (delta <= 0.0 || delta >= 1.0) throw ConfigError("delta must be in (0, 1)");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");

  const double radius = standard_hoeffding
                            ? std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(N)))
                            : std::sqrt(-std::log1p(-delta) / (2.0 * static_cast<double>(N)));
  const double geom = geometric_sum(gamma, horizon);

  ToleranceVector tol;
  tol.delta = delta;
  tol.N = N;
  tol.gamma = gamma;
  tol.horizon = horizon;
  tol.standard_hoeffding = standard_hoeffding;
  tol.eps = Vec(bounds.upper.size());
  for (Eigen::Index k = 0; k < tol.eps.size(); ++k) {
    tol.eps[k] = radius * geom * (bounds.upper[k] - bounds.lower[k]);
  }
  return tol;
}

double surrogate_objective(const Vec& theta, const Vec& shat, double Z,
                           const ToleranceVector& eps) {
  if (!(Z > 0.0)) throw NumericalError("partition estimate must be positive");
  double value = theta.dot(shat) - std::log(Z);
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    value -= std::abs(theta[k]) * eps.eps[k];
  }
  return value;
}

Vec PreparedBatch::mean_counts() const {
  Vec sum = Vec::Zero(counts.cols());
  for (Eigen::Index i = 0; i < counts.rows(); ++i) sum += counts.row(i).transpose();
  return sum / static_cast<double>(counts.rows());
}

PreparedBatch prepare_batch(const TrajectorySet& set, const PolicyTable& table,
                            int uniform_action_count, std::vector<std::string>* warnings) {
  if (set.trajectories.empty()) throw DataError("empty trajectory set");
  if (uniform_action_count < 1) throw ConfigError("uniform action count must be positive");

  const double log_uniform_step = std::log(1.0 / uniform_action_count);

  PreparedBatch batch;
  batch.horizon = set.horizon;
  batch.gamma = set.gamma;

  std::vector<Vec> counts;
  std::vector<double> ratios;
  counts.reserve(set.trajectories.size());
  ratios.reserve(set.trajectories.size());
  for (const auto& traj : set.trajectories) {
    // Per-step difference so an exactly uniform table yields a log ratio of
    // exactly zero, whatever the horizon.
    double log_ratio = 0.0;
    bool available = true;
    for (int t = 0; t < traj.horizon(); ++t) {
      const auto it = table.entries.find({traj.entity, traj.start_period + t});
      if (it == table.entries.end()) {
        available = false;
        break;
      }
      const double p = it->second.p[action_slot(traj.actions[t])];
      if (!(p > 0.0)) {
        throw DataError("policy table has nonpositive probability for (" + traj.entity +
                        ", " + std::to_string(traj.start_period + t) + ")");
      }
      log_ratio += log_uniform_step - std::log(p);
    }
    if (!available) {
      ++batch.excluded;
      if (warnings) {
        warnings->push_back("trajectory " + traj.id +
                            " dropped: no policy likelihood for every step");
      }
      continue;
    }
    counts.push_back(feature_counts(traj, set.gamma));
    ratios.push_back(log_ratio);
  }
  if (counts.empty()) throw DataError("no trajectory has a policy likelihood");

  batch.included = static_cast<std::int64_t>(counts.size());
  batch.counts.resize(batch.included, set.K);
  batch.log_ratio.resize(batch.included);
  for (std::int64_t i = 0; i < batch.included; ++i) {
    batch.counts.row(i) = counts[i].transpose();
    batch.log_ratio[i] = ratios[i];
  }
  return batch;
}

double BatchEval::partition() const { return std::exp(shift) * mean_weight; }

BatchEval evaluate_batch(const Vec& theta, const PreparedBatch& batch) {
  const std::int64_t n = batch.included;
  const auto K = batch.counts.cols();

  BatchEval eval;
  eval.weighted_counts = Vec::Zero(K);

  // Shared shift keeps every exponential in range; it cancels in the
  // gradient ratio and multiplies back into Z.
  double shift = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> exponents;
  exponents.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double e = batch.log_ratio[i] + batch.counts.row(i).dot(theta);
    exponents[static_cast<std::size_t>(i)] = e;
    shift = std::max(shift, e);
  }
  eval.shift = shift;

  double sum_w = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = std::exp(exponents[static_cast<std::size_t>(i)] - shift);
    sum_w += w;
    eval.weighted_counts += w * batch.counts.row(i).transpose();
  }
  eval.mean_weight = sum_w / static_cast<double>(n);
  eval.weighted_counts /= static_cast<double>(n);
  return eval;
}

double partition_estimate(const Vec& theta, const TrajectorySet& set, const PolicyTable& table,
                          int uniform_action_count) {
  const auto batch = prepare_batch(set, table, uniform_action_count);
  return evaluate_batch(theta, batch).partition();
}

namespace {

Vec gradient_from_eval(const Vec& theta, const BatchEval& eval, const Vec& shat,
                       const ToleranceVector& eps) {
  Vec grad(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double a_k = theta[k] >= 0.0 ? 1.0 : -1.0;
    grad[k] = shat[k] - eval.weighted_counts[k] / eval.mean_weight - a_k * eps.eps[k];
  }
  return grad;
}

}  // namespace

Vec gradient_estimate(const Vec& theta, const TrajectorySet& set, const PolicyTable& table,
                      const Vec& shat, const ToleranceVector& eps, int uniform_action_count) {
  const auto batch = prepare_batch(set, table, uniform_action_count);
  return gradient_from_eval(theta, evaluate_batch(theta, batch), shat, eps);
}

AscentTrace ascend(const TrajectorySet& set, const PolicyTable& table,
                   const AscentConfig& config, double delta) {
  if (config.alpha < 0.0) throw ConfigError("alpha must be nonnegative");
  if (config.max_iters < 1) throw ConfigError("max_iters must be at least 1");

  std::vector<std::string> warnings;
  const auto batch = prepare_batch(set, table, config.uniform_action_count, &warnings);

  // Tolerances use the included subset so shat and eps describe the same N.
  TrajectorySet included;
  if (batch.excluded == 0) {
    included = set;
  } else {
    included.horizon = set.horizon;
    included.K = set.K;
    included.gamma = set.gamma;
    for (const auto& traj : set.trajectories) {
      if (policy_log_likelihood(traj, table).has_value()) {
        included.trajectories.push_back(traj);
      }
    }
  }
  const Vec shat = batch.mean_counts();
  const FeatureBounds bounds = feature_bounds(included, set.gamma);
  const ToleranceVector eps = epsilon_bounds(batch.included, delta, set.gamma, set.horizon,
                                             bounds, false);

  AscentTrace trace;
  trace.included_trajectories = batch.included;
  trace.excluded_trajectories = batch.excluded;
  trace.tolerances = eps;
  trace.mean_counts = shat;

  Vec theta = Vec::Zero(set.K);
  int iterations = 0;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const BatchEval eval = evaluate_batch(theta, batch);
    const Vec grad = gradient_from_eval(theta, eval, shat, eps);
    const double grad_norm = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    trace.iterates.push_back({theta, grad_norm, eval.partition()});
    iterations = iter + 1;
    if (grad_norm <= config.grad_tol) {
      trace.converged = true;
      break;
    }
    theta += config.alpha * grad;
    if (theta.cwiseAbs().maxCoeff() > config.theta_cap) {
      throw NumericalError("ascent diverged: |theta|_inf = " +
                           std::to_string(theta.cwiseAbs().maxCoeff()) + " exceeds cap " +
                           std::to_string(config.theta_cap) + " at iteration " +
                           std::to_string(iter + 1) + "; reduce alpha");
    }
  }

  trace.final_theta.weights = trace.iterates.back().theta;
  trace.final_theta.iteration = iterations;
  trace.final_theta.seed = config.seed;
  trace.final_theta.gamma = set.gamma;
  trace.final_theta.horizon = set.horizon;
  return trace;
}

double reward(const Vec& theta, const Vec& state) {
  if (theta.size() != state.size()) {
    throw DataError("reward: theta has " + std::to_string(theta.size()) +
                    " entries, state has " + std::to_string(state.size()));
  }
  double r = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (!is_missing(state[k])) r += theta[k] * state[k];
  }
  return r;
}

}  // namespace reirl
