#pragma once

#include "reirl/types.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reirl {

/// Ridge-regularized precision matrix for one as-of period.
struct CovarianceEstimate {
  Mat sigma;                       // pairwise-deletion covariance
  Mat omega;                       // (sigma + lambda I)^{-1}, symmetric PD
  double lambda = 0.0;             // effective ridge after any escalation
  std::int64_t asof_period = 0;
  Eigen::MatrixXi joint_counts;    // rows jointly observed per feature pair
  std::vector<std::string> warnings;
};

/// Covariance with pairwise deletion: entry (k,l) uses only rows where both
/// features are observed, with means taken over that same row set. Pairs with
/// fewer than 2 joint observations get 0 and a warning.
Mat pairwise_covariance(const Mat& states, Eigen::MatrixXi* joint_counts = nullptr,
                        std::vector<std::string>* warnings = nullptr);

/// omega = (sigma + lambda I)^{-1} via Cholesky. Throws NumericalError if the
/// ridged matrix is not positive-definite, suggesting a larger lambda.
Mat regularized_precision(const Mat& sigma, double lambda);

/// Full covariance step for one as-of period: pairwise-deletion covariance,
/// then the ridged inverse, escalating lambda by x10 up to `max_escalations`
/// times when the ridge fails (pairwise deletion can produce indefinite
/// matrices). Throws NumericalError when every escalation fails.
CovarianceEstimate covariance_estimate(const Mat& states, double lambda,
                                       std::int64_t asof_period, int max_escalations = 2);

/// Missing-value-robust Mahalanobis distance over the jointly observed index
/// set J, using the submatrix omega[J,J]. Returns +infinity when fewer than
/// `min_overlap` coordinates are jointly observed; such pairs are never
/// selected as neighbors.
double nan_mahalanobis(Eigen::Ref<const Vec> a, Eigen::Ref<const Vec> b,
                       const Mat& omega, int min_overlap);

/// Observations available for neighbor search, in stable (period, entity)
/// order. No observation may postdate the as-of period of the precision
/// matrix used to query it.
struct HistoricalPool {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> states;
  std::vector<int> actions;  // labels -3..3
  std::vector<std::string> entities;
  std::vector<std::int64_t> periods;

  std::int64_t size() const { return static_cast<std::int64_t>(actions.size()); }
};

struct KnnResult {
  std::optional<std::array<double, kActionCount>> probs;  // absent = excluded
  int n_valid_neighbors = 0;  // finite-distance candidates found
};

/// Local action frequencies among the k nearest pool observations (smallest
/// finite distances, ties broken by pool order). A query with fewer than k
/// finite-distance candidates is excluded, which is an outcome, not an error.
/// `skip_index` removes one pool row from consideration (leave-one-out).
KnnResult knn_probs(Eigen::Ref<const Vec> query, const HistoricalPool& pool,
                    const Mat& omega, int k, int min_overlap,
                    std::int64_t skip_index = -1);

/// Laplace smoothing toward the uniform distribution:
/// p~(a) = (1 - eps) p(a) + eps/7. Strictly positive, sums to 1.
std::array<double, kActionCount> smooth(const std::array<double, kActionCount>& p,
                                        double eps);

struct PolicyKey {
  std::string entity;
  std::int64_t period = 0;
  auto operator<=>(const PolicyKey&) const = default;
};

struct PolicyEntry {
  std::array<double, kActionCount> p{};  // smoothed, sums to 1
  int n_valid_neighbors = 0;
};

/// Estimated behavior policy, keyed by (entity, period). Excluded queries
/// have no entry; they are listed separately so serialization can flag them.
struct PolicyTable {
  std::map<PolicyKey, PolicyEntry> entries;
  double smoothing_eps = 0.0;
  int k_neighbors = 0;
  int min_overlap = 0;
  std::vector<PolicyKey> excluded;
  std::vector<std::int64_t> skipped_periods;
  std::vector<std::string> warnings;
  // Populated only in debug mode: neighbor keys per estimated entry, for
  // auditing the no-look-ahead property.
  std::map<PolicyKey, std::vector<PolicyKey>> debug_neighbors;
};

struct KnnConfig {
  int k = 50;
  int min_overlap = 0;       // 0 = ceil(K/2)
  double lambda = 1e-3;
  double smoothing_eps = 0.05;
  std::optional<std::int64_t> start_period;  // absent = earliest period
  bool debug_neighbors = false;
};

/// Rolling estimation: for each period t >= start, recompute the
/// pairwise-deletion covariance and ridge precision from observations with
/// period <= t, then estimate every period-t query against that same pool
/// (leave-one-out). Periods whose covariance cannot be made positive-definite
/// after escalating lambda twice (x10 each) are skipped with a warning.
/// Features are standardized with the panel's transform before any distance
/// or covariance computation.
PolicyTable rolling_estimate(const PanelDataset& panel, const KnnConfig& config);

/// Product of the table's conditional probabilities along the trajectory,
/// i.e. prod_{t=0}^{H-1} p(a_t | entity, start_period + t). Returns nullopt
/// when any step has no table entry; callers drop such trajectories.
std::optional<double> policy_likelihood(const Trajectory& traj, const PolicyTable& table);

/// Log of policy_likelihood, for products of many small factors.
std::optional<double> policy_log_likelihood(const Trajectory& traj, const PolicyTable& table);

}  // namespace reirl
