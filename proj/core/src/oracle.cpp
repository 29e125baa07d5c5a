#include "reirl/oracle.hpp"

#include "reirl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reirl {

void FiniteMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw DataError("MDP needs at least one state and action");
  if (initial_state < 0 || initial_state >= n_states) throw DataError("initial state out of range");
  if (static_cast<std::int64_t>(transition.size()) !=
      static_cast<std::int64_t>(n_states) * n_actions * n_states) {
    throw DataError("transition tensor has wrong size");
  }
  if (state_features.rows() != n_states) throw DataError("feature matrix has wrong row count");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = p(s, a, s2);
        if (v < 0.0) throw DataError("negative transition probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw DataError("transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                        ") sums to " + std::to_string(sum));
      }
    }
  }
}

namespace {

/// Number of positive-probability (action, state) paths, computed by a
/// forward pass so oversized requests are refused before any enumeration.
double count_paths(const FiniteMDP& mdp, int horizon) {
  std::vector<double> paths(mdp.n_states, 0.0);
  paths[mdp.initial_state] = 1.0;
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> next(mdp.n_states, 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (paths[s] == 0.0) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          if (mdp.p(s, a, s2) > 0.0) next[s2] += paths[s];
        }
      }
    }
    paths.swap(next);
  }
  double total = 0.0;
  for (double v : paths) total += v;
  return total;
}

}  // namespace

EnumeratedSpace enumerate_trajectories(const FiniteMDP& mdp, int horizon, double gamma,
                                       std::int64_t cap) {
  mdp.validate();
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (mdp.n_states > std::numeric_limits<std::int16_t>::max()) {
    throw ConfigError("too many states for enumeration storage");
  }
  const double total = count_paths(mdp, horizon);
  if (total > static_cast<double>(cap)) {
    throw NumericalError("enumeration would produce about " + std::to_string(total) +
                         " trajectories, above the cap of " + std::to_string(cap));
  }
  const auto L = static_cast<std::int64_t>(total);

  EnumeratedSpace space;
  space.horizon = horizon;
  space.gamma = gamma;
  space.K = mdp.K();
  space.state_paths.resize(L, horizon + 1);
  space.action_paths.resize(L, horizon);
  space.q.resize(L);
  space.counts.resize(L, space.K);

  std::vector<std::int16_t> state_path(horizon + 1);
  std::vector<std::int16_t> action_path(horizon);
  std::vector<double> discount(horizon + 1);
  double w = 1.0;
  for (int t = 0; t <= horizon; ++t) {
    discount[t] = w;
    w *= gamma;
  }

  const double inv_actions = 1.0 / mdp.n_actions;
  std::int64_t emitted = 0;
  state_path[0] = static_cast<std::int16_t>(mdp.initial_state);

  // Depth-first over (action, next state) in lexicographic order.
  struct Frame {
    int a = 0;
    int s2 = 0;
    double q = 1.0;
  };
  std::vector<Frame> stack(horizon + 1);
  stack[0].q = 1.0;
  int depth = 0;
  while (depth >= 0) {
    if (depth == horizon) {
      space.q[emitted] = stack[depth].q;
      for (int t = 0; t <= horizon; ++t) space.state_paths(emitted, t) = state_path[t];
      for (int t = 0; t < horizon; ++t) space.action_paths(emitted, t) = action_path[t];
      for (int k = 0; k < space.K; ++k) {
        double c = 0.0;
        for (int t = 0; t <= horizon; ++t) c += discount[t] * mdp.state_features(state_path[t], k);
        space.counts(emitted, k) = c;
      }
      ++emitted;
      --depth;
      continue;
    }
    auto& frame = stack[depth];
    bool advanced = false;
    while (frame.a < mdp.n_actions) {
      while (frame.s2 < mdp.n_states) {
        const double pr = mdp.p(state_path[depth], frame.a, frame.s2);
        const int s2 = frame.s2++;
        if (pr > 0.0) {
          action_path[depth] = static_cast<std::int16_t>(frame.a);
          state_path[depth + 1] = static_cast<std::int16_t>(s2);
          stack[depth + 1].a = 0;
          stack[depth + 1].s2 = 0;
          stack[depth + 1].q = frame.q * inv_actions * pr;
          ++depth;
          advanced = true;
          break;
        }
      }
      if (advanced) break;
      ++frame.a;
      frame.s2 = 0;
    }
    if (!advanced) --depth;
  }
  if (emitted != L) throw NumericalError("enumeration count mismatch");
  return space;
}

double log_exact_partition(const Vec& theta, const EnumeratedSpace& space) {
  const auto L = space.size();
  double shift = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> exponents;
  exponents.resize(static_cast<std::size_t>(L));
  for (std::int64_t l = 0; l < L; ++l) {
    const double e = std::log(space.q[l]) + space.counts.row(l).dot(theta);
    exponents[static_cast<std::size_t>(l)] = e;
    shift = std::max(shift, e);
  }
  double sum = 0.0;
  for (std::int64_t l = 0; l < L; ++l) {
    sum += std::exp(exponents[static_cast<std::size_t>(l)] - shift);
  }
  return shift + std::log(sum);
}

double exact_partition(const Vec& theta, const EnumeratedSpace& space) {
  // Direct sum: exact for theta = 0 and plenty for verification-size spaces.
  double max_dot = 0.0;
  for (std::int64_t l = 0; l < space.size(); ++l) {
    max_dot = std::max(max_dot, space.counts.row(l).dot(theta));
  }
  if (max_dot < 500.0) {
    double z = 0.0;
    for (std::int64_t l = 0; l < space.size(); ++l) {
      z += space.q[l] * std::exp(space.counts.row(l).dot(theta));
    }
    return z;
  }
  return std::exp(log_exact_partition(theta, space));
}

Vec trajectory_distribution(const Vec& theta, const EnumeratedSpace& space) {
  const auto L = space.size();
  Vec logw(L);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::int64_t l = 0; l < L; ++l) {
    logw[l] = std::log(space.q[l]) + space.counts.row(l).dot(theta);
    shift = std::max(shift, logw[l]);
  }
  Vec p(L);
  double sum = 0.0;
  for (std::int64_t l = 0; l < L; ++l) {
    p[l] = std::exp(logw[l] - shift);
    sum += p[l];
  }
  p /= sum;
  return p;
}

Vec exact_gradient(const Vec& theta, const EnumeratedSpace& space, const Vec& shat,
                   const ToleranceVector& eps) {
  const Vec p = trajectory_distribution(theta, space);
  const Vec mean = space.counts.transpose() * p;
  Vec grad(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double a_k = theta[k] >= 0.0 ? 1.0 : -1.0;
    grad[k] = shat[k] - mean[k] - a_k * eps.eps[k];
  }
  return grad;
}

double exact_surrogate(const Vec& theta, const EnumeratedSpace& space, const Vec& shat,
                       const ToleranceVector& eps) {
  double value = theta.dot(shat) - log_exact_partition(theta, space);
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    value -= std::abs(theta[k]) * eps.eps[k];
  }
  return value;
}

namespace {

/// Minimal-norm subgradient of the dual objective. Away from zero this is
/// the plain gradient; at theta_k = 0 the eps interval absorbs small raw
/// gradients, so the soft-thresholded value is the steepest feasible ascent
/// and vanishes exactly at a kink optimum.
Vec ascent_direction(const Vec& theta, const Vec& raw, const ToleranceVector& eps) {
  Vec d(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double e = eps.eps[k];
    if (theta[k] > 0.0) {
      d[k] = raw[k] - e;
    } else if (theta[k] < 0.0) {
      d[k] = raw[k] + e;
    } else if (raw[k] > e) {
      d[k] = raw[k] - e;
    } else if (raw[k] < -e) {
      d[k] = raw[k] + e;
    } else {
      d[k] = 0.0;
    }
  }
  return d;
}

/// Step that never crosses a sign boundary: coordinates flipping sign are
/// parked at exactly zero.
Vec orthant_step(const Vec& theta, const Vec& direction, double step) {
  Vec next = theta + step * direction;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (theta[k] > 0.0 && next[k] < 0.0) next[k] = 0.0;
    if (theta[k] < 0.0 && next[k] > 0.0) next[k] = 0.0;
  }
  return next;
}

}  // namespace

PrimalSolution solve_primal(const EnumeratedSpace& space, const Vec& shat,
                            const ToleranceVector& eps, const PrimalOptions& options) {
  const auto K = shat.size();
  if (eps.eps.size() != K) throw DataError("eps dimension mismatch");

  // Feasibility: the achievable mean of each count coordinate spans the
  // convex hull projection [min, max]; a box face outside it can never bind.
  std::vector<int> violated;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double lo = space.counts.col(k).minCoeff();
    const double hi = space.counts.col(k).maxCoeff();
    if (shat[k] + eps.eps[k] < lo || shat[k] - eps.eps[k] > hi) {
      violated.push_back(static_cast<int>(k));
    }
  }
  if (!violated.empty()) {
    std::string msg = "constraint box infeasible in components:";
    for (int k : violated) msg += " " + std::to_string(k);
    throw InfeasibleError(msg, violated);
  }

  Vec theta = Vec::Zero(K);
  double g = exact_surrogate(theta, space, shat, eps);
  constexpr double kArmijo = 1e-4;
  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    const Vec p = trajectory_distribution(theta, space);
    const Vec mean = space.counts.transpose() * p;
    const Vec raw = shat - mean;
    const Vec grad_dir = ascent_direction(theta, raw, eps);
    const double grad_norm = grad_dir.size() > 0 ? grad_dir.cwiseAbs().maxCoeff() : 0.0;
    if (grad_norm <= options.tol) break;

    // Curvature of ln Z is the count covariance under p; scaling the ascent
    // direction by its inverse keeps convergence fast when the counts are
    // poorly conditioned. Coordinates parked at a kink stay out of the
    // Newton system, and components that disagree in sign with the
    // subgradient direction at a kink are zeroed, since the penalty
    // derivative flips there and the quadratic model is invalid.
    Vec d = grad_dir;
    double slope = grad_dir.squaredNorm();
    {
      std::vector<Eigen::Index> active;
      for (Eigen::Index k = 0; k < K; ++k) {
        if (theta[k] != 0.0 || grad_dir[k] != 0.0) active.push_back(k);
      }
      if (!active.empty()) {
        const auto m = static_cast<Eigen::Index>(active.size());
        Mat cov_full = space.counts.transpose() * p.asDiagonal() * space.counts -
                       mean * mean.transpose();
        Mat cov(m, m);
        Vec rhs(m);
        for (Eigen::Index i = 0; i < m; ++i) {
          rhs[i] = grad_dir[active[i]];
          for (Eigen::Index j = 0; j < m; ++j) cov(i, j) = cov_full(active[i], active[j]);
        }
        cov.diagonal().array() += 1e-12 + 1e-9 * cov.diagonal().maxCoeff();
        const Vec x = cov.ldlt().solve(rhs);
        Vec candidate = Vec::Zero(K);
        for (Eigen::Index i = 0; i < m; ++i) candidate[active[i]] = x[i];
        for (Eigen::Index k = 0; k < K; ++k) {
          if (theta[k] == 0.0 && candidate[k] * grad_dir[k] <= 0.0) candidate[k] = 0.0;
        }
        const double candidate_slope = candidate.dot(grad_dir);
        if (candidate.allFinite() && candidate_slope > 0.0) {
          d = candidate;
          slope = candidate_slope;
        }
      }
    }

    // Backtracking line search on the objective itself; kinks need no
    // gradient at the acceptance test.
    double s = 1.0;
    bool accepted = false;
    while (s > 1e-18) {
      const Vec candidate = orthant_step(theta, d, s);
      const double g_candidate = exact_surrogate(candidate, space, shat, eps);
      // Strict increase required: once kArmijo * s * slope rounds away
      // against g, a zero-sized step would otherwise be "accepted" forever.
      if (g_candidate > g && g_candidate >= g + kArmijo * s * slope) {
        theta = candidate;
        g = g_candidate;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // Objective improvements below |g| * machine epsilon are invisible to
      // the Armijo test, which strands the subgradient around 1e-8. Polish
      // with the same direction, accepting on subgradient-norm decrease;
      // Newton contraction takes it the rest of the way.
      auto norm_at = [&](const Vec& candidate) {
        const Vec pc = trajectory_distribution(candidate, space);
        const Vec raw_c = shat - space.counts.transpose() * pc;
        return ascent_direction(candidate, raw_c, eps).cwiseAbs().maxCoeff();
      };
      double s_polish = 1.0;
      while (s_polish > 1e-12 && !accepted) {
        const Vec candidate = orthant_step(theta, d, s_polish);
        if (norm_at(candidate) < grad_norm) {
          theta = candidate;
          g = exact_surrogate(theta, space, shat, eps);
          accepted = true;
        }
        s_polish *= 0.5;
      }
      if (!accepted) break;  // no direction reduces the subgradient: at the optimum
    }
    if (theta.cwiseAbs().maxCoeff() > options.theta_cap) {
      throw InfeasibleError(
          "dual ascent diverged; the constraint box is likely infeasible jointly", {});
    }
  }
  if (iter >= options.max_iters) {
    throw NumericalError("dual ascent did not reach tolerance within " +
                         std::to_string(options.max_iters) + " iterations");
  }

  PrimalSolution sol;
  sol.theta = theta;
  sol.p = trajectory_distribution(theta, space);
  sol.lambda = theta.cwiseMax(0.0);
  sol.nu = (-theta).cwiseMax(0.0);
  sol.eta = log_exact_partition(theta, space) - 1.0;
  sol.g_value = g;
  sol.iterations = iter;
  sol.residual = shat - space.counts.transpose() * sol.p;

  double kl = 0.0;
  for (std::int64_t l = 0; l < space.size(); ++l) {
    kl += sol.p[l] * std::log(sol.p[l] / space.q[l]);
  }
  sol.kl_value = kl;
  return sol;
}

}  // namespace reirl
