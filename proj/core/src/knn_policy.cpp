#include "reirl/knn_policy.hpp"

#include "reirl/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace reirl {

Mat pairwise_covariance(const Mat& states, Eigen::MatrixXi* joint_counts,
                        std::vector<std::string>* warnings) {
  const auto n = states.rows();
  const auto K = states.cols();
  Mat sigma = Mat::Zero(K, K);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(K, K);

  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index l = k; l < K; ++l) {
      double sum_k = 0.0, sum_l = 0.0;
      Eigen::Index m = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = states(i, k), b = states(i, l);
        if (is_missing(a) || is_missing(b)) continue;
        sum_k += a;
        sum_l += b;
        ++m;
      }
      counts(k, l) = counts(l, k) = static_cast<int>(m);
      if (m < 2) {
        sigma(k, l) = sigma(l, k) = 0.0;
        if (warnings) {
          warnings->push_back("feature pair (" + std::to_string(k) + ", " + std::to_string(l) +
                              ") has fewer than 2 joint observations; covariance set to 0");
        }
        continue;
      }
      const double mean_k = sum_k / static_cast<double>(m);
      const double mean_l = sum_l / static_cast<double>(m);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = states(i, k), b = states(i, l);
        if (is_missing(a) || is_missing(b)) continue;
        acc += (a - mean_k) * (b - mean_l);
      }
      sigma(k, l) = sigma(l, k) = acc / static_cast<double>(m);
    }
  }
  if (joint_counts) *joint_counts = counts;
  return sigma;
}

Mat regularized_precision(const Mat& sigma, double lambda) {
  if (lambda <= 0.0) throw ConfigError("ridge lambda must be positive");
  if (sigma.rows() != sigma.cols()) throw DataError("covariance matrix must be square");
  const auto K = sigma.rows();
  Mat ridged = sigma + lambda * Mat::Identity(K, K);
  Eigen::LLT<Mat> llt(ridged);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("ridged covariance is not positive-definite; increase lambda (" +
                         std::to_string(lambda) + ")");
  }
  Mat omega = llt.solve(Mat::Identity(K, K));
  omega = 0.5 * (omega + omega.transpose()).eval();
  return omega;
}

CovarianceEstimate covariance_estimate(const Mat& states, double lambda,
                                       std::int64_t asof_period, int max_escalations) {
  CovarianceEstimate estimate;
  estimate.asof_period = asof_period;
  estimate.sigma = pairwise_covariance(states, &estimate.joint_counts, &estimate.warnings);
  double effective = lambda;
  for (int attempt = 0; attempt <= max_escalations; ++attempt) {
    try {
      estimate.omega = regularized_precision(estimate.sigma, effective);
      estimate.lambda = effective;
      if (attempt > 0) {
        estimate.warnings.push_back("ridge escalated to " + std::to_string(effective) +
                                    " at period " + std::to_string(asof_period));
      }
      return estimate;
    } catch (const NumericalError&) {
      effective *= 10.0;
    }
  }
  throw NumericalError("covariance at period " + std::to_string(asof_period) +
                       " not invertible after escalating the ridge to " +
                       std::to_string(effective / 10.0));
}

double nan_mahalanobis(Eigen::Ref<const Vec> a, Eigen::Ref<const Vec> b, const Mat& omega,
                       int min_overlap) {
  const auto K = a.size();
  if (b.size() != K || omega.rows() != K || omega.cols() != K) {
    throw DataError("nan_mahalanobis: dimension mismatch");
  }
  if (min_overlap < 1) throw ConfigError("min_overlap must be at least 1");

  thread_local std::vector<double> diff;
  thread_local std::vector<int> idx;
  diff.clear();
  idx.clear();
  for (Eigen::Index i = 0; i < K; ++i) {
    const double ai = a[i], bi = b[i];
    if (is_missing(ai) || is_missing(bi)) continue;
    diff.push_back(ai - bi);
    idx.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(idx.size()) < min_overlap) {
    return std::numeric_limits<double>::infinity();
  }
  double d2 = 0.0;
  const std::size_t m = idx.size();
  for (std::size_t r = 0; r < m; ++r) {
    const double dr = diff[r];
    const double* row = omega.data() + static_cast<std::size_t>(idx[r]) * K;
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += row[idx[c]] * diff[c];
    d2 += dr * acc;
  }
  // Principal submatrices of a PD matrix are PD; tiny negatives are roundoff.
  if (d2 < 0.0) {
    if (d2 < -1e-9) throw NumericalError("negative Mahalanobis square: precision not PD");
    d2 = 0.0;
  }
  return std::sqrt(d2);
}

namespace {

/// Shared neighbor scan over the first `visible` pool rows. `skip_index`
/// implements leave-one-out; `neighbors` (optional) receives the selected
/// pool rows for debug auditing.
KnnResult scan_neighbors(Eigen::Ref<const Vec> query, const HistoricalPool& pool,
                         std::int64_t visible, const Mat& omega, int k, int min_overlap,
                         std::int64_t skip_index, std::vector<std::int64_t>* neighbors) {
  KnnResult result;
  thread_local std::vector<std::pair<double, std::int64_t>> candidates;
  candidates.clear();
  for (std::int64_t i = 0; i < visible; ++i) {
    if (i == skip_index) continue;
    const double d = nan_mahalanobis(query, pool.states.row(i), omega, min_overlap);
    if (std::isfinite(d)) candidates.emplace_back(d, i);
  }
  result.n_valid_neighbors = static_cast<int>(candidates.size());
  if (static_cast<int>(candidates.size()) < k) return result;  // excluded

  // k smallest by (distance, pool index): ties resolve by stable pool order.
  std::nth_element(candidates.begin(), candidates.begin() + (k - 1), candidates.end());
  std::array<double, kActionCount> probs{};
  for (int j = 0; j < k; ++j) {
    probs[action_slot(pool.actions[candidates[j].second])] += 1.0;
    if (neighbors) neighbors->push_back(candidates[j].second);
  }
  for (auto& p : probs) p /= static_cast<double>(k);
  result.probs = probs;
  return result;
}

}  // namespace

KnnResult knn_probs(Eigen::Ref<const Vec> query, const HistoricalPool& pool, const Mat& omega,
                    int k, int min_overlap, std::int64_t skip_index) {
  if (k < 1) throw ConfigError("k must be at least 1");
  return scan_neighbors(query, pool, pool.size(), omega, k, min_overlap, skip_index, nullptr);
}

std::array<double, kActionCount> smooth(const std::array<double, kActionCount>& p, double eps) {
  if (eps <= 0.0 || eps >= 1.0) throw ConfigError("smoothing eps must be in (0, 1)");
  double sum = 0.0;
  for (double v : p) sum += v;
  if (std::abs(sum - 1.0) > 1e-9) throw DataError("probability vector does not sum to 1");
  std::array<double, kActionCount> out{};
  for (int i = 0; i < kActionCount; ++i) {
    out[i] = (1.0 - eps) * p[i] + eps / kActionCount;
  }
  return out;
}

PolicyTable rolling_estimate(const PanelDataset& panel, const KnnConfig& config) {
  if (panel.rows.empty()) throw DataError("empty panel");
  if (config.k < 1) throw ConfigError("knn.k must be at least 1");
  if (config.lambda <= 0.0) throw ConfigError("knn.lambda must be positive");
  if (config.smoothing_eps <= 0.0 || config.smoothing_eps >= 1.0) {
    throw ConfigError("knn.eps must be in (0, 1)");
  }
  const int K = panel.K;
  const int m = config.min_overlap > 0 ? config.min_overlap : (K + 1) / 2;

  PolicyTable table;
  table.smoothing_eps = config.smoothing_eps;
  table.k_neighbors = config.k;
  table.min_overlap = m;

  // Row indices grouped by period; within a period, ordered by entity. The
  // panel is sorted by (entity, period), so collecting per period preserves
  // entity order and the pool grows in stable (period, entity) order.
  std::map<std::int64_t, std::vector<std::size_t>> by_period;
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    by_period[panel.rows[i].period].push_back(i);
  }
  const std::int64_t start_period = config.start_period.value_or(by_period.begin()->first);

  HistoricalPool pool;
  pool.states.resize(static_cast<Eigen::Index>(panel.rows.size()), K);
  pool.actions.reserve(panel.rows.size());
  pool.entities.reserve(panel.rows.size());
  pool.periods.reserve(panel.rows.size());

  struct QueryRef {
    std::int64_t pool_index;
    std::size_t row_index;
  };

  std::int64_t pool_size = 0;
  for (const auto& [period, indices] : by_period) {
    std::vector<QueryRef> queries;
    queries.reserve(indices.size());
    for (auto i : indices) {
      const auto& row = panel.rows[i];
      if (!row.action_label.has_value()) {
        throw DataError("rolling_estimate requires discretized actions");
      }
      pool.states.row(pool_size) = panel.standardization.apply(row.features);
      pool.actions.push_back(*row.action_label);
      pool.entities.push_back(row.entity);
      pool.periods.push_back(row.period);
      queries.push_back({pool_size, i});
      ++pool_size;
    }
    if (period < start_period) continue;

    // Covariance over everything up to and including this period, with the
    // ridge escalated twice before giving up on the period.
    Mat omega;
    try {
      auto estimate =
          covariance_estimate(pool.states.topRows(pool_size), config.lambda, period);
      for (auto& warning : estimate.warnings) table.warnings.push_back(std::move(warning));
      omega = std::move(estimate.omega);
    } catch (const NumericalError&) {
      table.skipped_periods.push_back(period);
      table.warnings.push_back("period " + std::to_string(period) +
                               " skipped: covariance not invertible after ridge escalation");
      continue;
    }

    const std::int64_t n_queries = static_cast<std::int64_t>(queries.size());
    std::vector<KnnResult> results(queries.size());
    std::vector<std::vector<std::int64_t>> neighbor_rows(
        config.debug_neighbors ? queries.size() : 0);

#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t qi = 0; qi < n_queries; ++qi) {
      const auto& q = queries[qi];
      results[qi] = scan_neighbors(pool.states.row(q.pool_index), pool, pool_size, omega,
                                   config.k, m, q.pool_index,
                                   config.debug_neighbors ? &neighbor_rows[qi] : nullptr);
    }

    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      const auto& row = panel.rows[queries[qi].row_index];
      PolicyKey key{row.entity, row.period};
      if (!results[qi].probs.has_value()) {
        table.excluded.push_back(key);
        continue;
      }
      PolicyEntry entry;
      entry.p = smooth(*results[qi].probs, config.smoothing_eps);
      entry.n_valid_neighbors = results[qi].n_valid_neighbors;
      if (config.debug_neighbors) {
        auto& keys = table.debug_neighbors[key];
        keys.reserve(neighbor_rows[qi].size());
        for (auto r : neighbor_rows[qi]) {
          keys.push_back({pool.entities[r], pool.periods[r]});
        }
      }
      table.entries.emplace(std::move(key), entry);
    }
  }
  return table;
}

std::optional<double> policy_log_likelihood(const Trajectory& traj, const PolicyTable& table) {
  double log_lik = 0.0;
  for (int t = 0; t < traj.horizon(); ++t) {
    const PolicyKey key{traj.entity, traj.start_period + t};
    const auto it = table.entries.find(key);
    if (it == table.entries.end()) return std::nullopt;
    const double p = it->second.p[action_slot(traj.actions[t])];
    if (!(p > 0.0)) {
      throw DataError("policy table has nonpositive probability for (" + traj.entity + ", " +
                      std::to_string(key.period) + ")");
    }
    log_lik += std::log(p);
  }
  return log_lik;
}

std::optional<double> policy_likelihood(const Trajectory& traj, const PolicyTable& table) {
  const auto log_lik = policy_log_likelihood(traj, table);
  if (!log_lik.has_value()) return std::nullopt;
  return std::exp(*log_lik);
}

}  // namespace reirl
