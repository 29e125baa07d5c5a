#pragma once

#include "reirl/estimator.hpp"
#include "reirl/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace reirl {

/// Explicit small MDP used only for verification and synthetic data. The
/// transition kernel is a stochastic tensor p(s' | s, a) and trajectories
/// start from a single fixed state.
struct FiniteMDP {
  int n_states = 0;
  int n_actions = 0;
  int initial_state = 0;
  std::vector<double> transition;  // [s][a][s'] row-major
  Mat state_features;              // n_states x K

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double& p(int s, int a, int s2) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  int K() const { return static_cast<int>(state_features.cols()); }

  /// Checks shape, nonnegativity and that each (s, a) row sums to 1 within
  /// 1e-12. Throws DataError otherwise.
  void validate() const;
};

constexpr std::int64_t kDefaultEnumerationCap = 1000000;

/// The full trajectory space of an MDP at one horizon. q is the trajectory
/// law under the uniform action policy; counts holds the discounted feature
/// counts per trajectory.
struct EnumeratedSpace {
  int horizon = 0;
  double gamma = 1.0;
  int K = 0;
  Eigen::Matrix<std::int16_t, Eigen::Dynamic, Eigen::Dynamic> state_paths;   // L x (H+1)
  Eigen::Matrix<std::int16_t, Eigen::Dynamic, Eigen::Dynamic> action_paths;  // L x H
  Vec q;       // sums to 1
  Mat counts;  // L x K

  std::int64_t size() const { return q.size(); }
};

/// Enumerates every positive-probability path (a_0, s_1, ..., a_{H-1}, s_H)
/// from the fixed initial state, with
///   q(tau) = prod_t (1/n_actions) p(s_{t+1} | s_t, a_t).
/// Refuses with a size estimate when the space exceeds `cap`.
EnumeratedSpace enumerate_trajectories(const FiniteMDP& mdp, int horizon, double gamma,
                                       std::int64_t cap = kDefaultEnumerationCap);

/// Exact partition function Z(theta) = sum_tau q(tau) exp(theta . s_tau).
double exact_partition(const Vec& theta, const EnumeratedSpace& space);

/// ln Z(theta), computed with a max shift.
double log_exact_partition(const Vec& theta, const EnumeratedSpace& space);

/// Exponential-family law p(tau) = q(tau) exp(theta . s_tau) / Z(theta).
Vec trajectory_distribution(const Vec& theta, const EnumeratedSpace& space);

/// Exact gradient of the surrogate objective:
///   shat_k - E_{p_theta}[s_k] - a_k eps_k, a_k = sign convention of
/// gradient_estimate (+1 at theta_k = 0).
Vec exact_gradient(const Vec& theta, const EnumeratedSpace& space, const Vec& shat,
                   const ToleranceVector& eps);

/// Surrogate objective with the exact partition function.
double exact_surrogate(const Vec& theta, const EnumeratedSpace& space, const Vec& shat,
                       const ToleranceVector& eps);

/// Solution of the constrained KL projection
///   min_x sum_l x_l ln(x_l / q_l)
///   s.t. |shat_k - sum_l x_l s_k(tau_l)| <= eps_k for all k, sum_l x_l = 1,
/// together with the dual multipliers that produce it.
struct PrimalSolution {
  Vec p;                  // optimal trajectory distribution, > 0 elementwise
  Vec theta;              // dual weights, lambda - nu
  Vec lambda;             // multipliers of the upper constraint faces
  Vec nu;                 // multipliers of the lower constraint faces
  double eta = 0.0;       // multiplier of the normalization constraint
  double kl_value = 0.0;  // primal objective at p
  double g_value = 0.0;   // dual objective at theta
  Vec residual;           // h_k = shat_k - E_p[s_k]
  int iterations = 0;
};

struct PrimalOptions {
  double tol = 1e-10;       // sup-norm of the minimal-norm subgradient
  int max_iters = 10000;
  double theta_cap = 1e6;   // divergence guard
};

/// Solves the KL projection by maximizing the concave dual with a monotone
/// backtracking line search (halving, Armijo constant 1e-4), then recovers
/// the primal point through the exponential-family form. The |theta_k| kinks
/// are handled by parking coordinates at zero when a step would cross sign
/// and by measuring convergence with the minimal-norm subgradient. Throws
/// InfeasibleError when the constraint box is unattainable.
PrimalSolution solve_primal(const EnumeratedSpace& space, const Vec& shat,
                            const ToleranceVector& eps, const PrimalOptions& options = {});

}  // namespace reirl
