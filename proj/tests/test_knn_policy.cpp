#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "reirl/errors.hpp"
#include "reirl/knn_policy.hpp"
#include "reirl/panel.hpp"
#include "reirl/rng.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace reirl;
using namespace reirl::test;

namespace {

Mat random_psd(SeedStream& stream, int K) {
  Mat a(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) a(i, j) = stream.next_normal();
  }
  return a * a.transpose() / K;
}

HistoricalPool make_pool(const std::vector<std::vector<double>>& states,
                         const std::vector<int>& actions) {
  HistoricalPool pool;
  const int K = static_cast<int>(states.front().size());
  pool.states.resize(static_cast<Eigen::Index>(states.size()), K);
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (int k = 0; k < K; ++k) pool.states(static_cast<Eigen::Index>(i), k) = states[i][k];
  }
  pool.actions = actions;
  for (std::size_t i = 0; i < states.size(); ++i) {
    pool.entities.push_back("p" + std::to_string(i));
    pool.periods.push_back(0);
  }
  return pool;
}

PanelDataset synthetic_panel(int n_periods, int per_period, int K,
                             const std::function<Vec(SeedStream&)>& draw_state,
                             const std::function<int(const Vec&, SeedStream&)>& draw_action,
                             std::uint64_t seed = 99) {
  PanelDataset panel;
  panel.K = K;
  for (int k = 0; k < K; ++k) panel.feature_names.push_back("f" + std::to_string(k + 1));
  panel.standardization = Standardization::identity(K);
  SeedStream stream(seed, "panel");
  for (int t = 0; t < n_periods; ++t) {
    for (int i = 0; i < per_period; ++i) {
      PanelRow row;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "e%05d", i);
      row.entity = buf;
      row.period = t;
      row.features = draw_state(stream);
      row.action_label = draw_action(row.features, stream);
      row.raw_action = static_cast<double>(*row.action_label);
      panel.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(panel.rows.begin(), panel.rows.end(),
                   [](const PanelRow& a, const PanelRow& b) {
                     return std::tie(a.entity, a.period) < std::tie(b.entity, b.period);
                   });
  return panel;
}

}  // namespace

TEST_CASE("pairwise covariance matches the direct formula on complete data") {
  SeedStream stream(21, "cov");
  const int n = 40, K = 3;
  Mat X(n, K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) X(i, k) = stream.next_normal();
  }
  const Mat sigma = pairwise_covariance(X);
  const Mat centered = X.rowwise() - X.colwise().mean();
  const Mat expected = centered.transpose() * centered / n;
  CHECK((sigma - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pairwise covariance zeroes a constant column") {
  Mat X(5, 2);
  X.col(0).setConstant(3.0);
  X.col(1) << 1, 2, 3, 4, 5;
  const Mat sigma = pairwise_covariance(X);
  CHECK(sigma(0, 0) == 0.0);
  CHECK(sigma(0, 1) == 0.0);
  CHECK(sigma(1, 1) > 0.0);
}

TEST_CASE("pairwise covariance flags pairs that are never jointly observed") {
  Mat X(6, 2);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = i < 3 ? static_cast<double>(i) : missing_value();
    X(i, 1) = i < 3 ? missing_value() : static_cast<double>(i);
  }
  Eigen::MatrixXi counts;
  std::vector<std::string> warnings;
  const Mat sigma = pairwise_covariance(X, &counts, &warnings);
  CHECK(sigma(0, 1) == 0.0);
  CHECK(counts(0, 1) == 0);
  CHECK(counts(0, 0) == 3);
  CHECK(!warnings.empty());
}

TEST_CASE("pairwise covariance uses pair-specific means") {
  // Feature 0 fully observed; feature 1 observed on a subset whose feature-0
  // values are shifted. The (0,1) entry must center both columns on the
  // jointly observed rows only.
  Mat X(4, 2);
  X << 0, 1,
       2, 3,
       10, missing_value(),
       12, missing_value();
  const Mat sigma = pairwise_covariance(X);
  // Joint rows are {0, 1}: means (1, 2), covariance = ((0-1)(1-2)+(2-1)(3-2))/2 = 1.
  CHECK(sigma(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("regularized_precision identities") {
  CHECK((regularized_precision(Mat::Zero(3, 3), 1.0) - Mat::Identity(3, 3)).norm() < 1e-14);
  CHECK((regularized_precision(Mat::Identity(3, 3), 1.0) - 0.5 * Mat::Identity(3, 3)).norm() <
        1e-14);
}

TEST_CASE("regularized_precision inverts back to the identity") {
  SeedStream stream(22, "prec");
  for (int trial = 0; trial < 10; ++trial) {
    const int K = 2 + static_cast<int>(stream.next_u64() % 5);
    const Mat sigma = random_psd(stream, K);
    const double lambda = 1e-3;
    const Mat omega = regularized_precision(sigma, lambda);
    const Mat residual = omega * (sigma + lambda * Mat::Identity(K, K)) - Mat::Identity(K, K);
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((omega - omega.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("regularized_precision rejects an indefinite ridged matrix") {
  Mat sigma = -Mat::Identity(2, 2);  // eigenvalues -1; ridge 1e-3 cannot fix it
  CHECK_THROWS_AS(regularized_precision(sigma, 1e-3), NumericalError);
}

TEST_CASE("covariance_estimate bundles sigma, omega and the effective ridge") {
  SeedStream stream(25, "covest");
  const int n = 60, K = 4;
  Mat X(n, K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      X(i, k) = stream.next_u64() % 5 == 0 ? missing_value() : stream.next_normal();
    }
  }
  const auto estimate = covariance_estimate(X, 1e-3, 42);
  CHECK(estimate.asof_period == 42);
  CHECK(estimate.lambda == 1e-3);
  const Mat residual = estimate.omega * (estimate.sigma + estimate.lambda * Mat::Identity(K, K)) -
                       Mat::Identity(K, K);
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((estimate.omega - estimate.omega.transpose()).cwiseAbs().maxCoeff() == 0.0);
  // Eigenvalues strictly positive.
  Eigen::SelfAdjointEigenSolver<Mat> eigen(estimate.omega);
  CHECK(eigen.eigenvalues().minCoeff() > 0.0);
  CHECK(estimate.joint_counts.minCoeff() >= 2);
}

TEST_CASE("covariance_estimate escalates the ridge on indefinite input") {
  // Mutually inconsistent pairwise correlations produce an eigenvalue near
  // -1 at unit scale: lambda 0.02 fails, 0.2 fails, 2.0 succeeds.
  SeedStream stream(26, "covesc");
  const int per_block = 30;
  Mat X(3 * per_block, 3);
  X.setConstant(missing_value());
  for (int i = 0; i < per_block; ++i) {
    const double v = stream.next_normal();
    X(i, 0) = v;
    X(i, 1) = v;
    const double w = stream.next_normal();
    X(per_block + i, 0) = w;
    X(per_block + i, 2) = w;
    const double u = stream.next_normal();
    X(2 * per_block + i, 1) = u;
    X(2 * per_block + i, 2) = -u;
  }
  const auto estimate = covariance_estimate(X, 0.02, 5);
  CHECK(estimate.lambda == doctest::Approx(2.0));
  CHECK_THROWS_AS(covariance_estimate(X, 1e-8, 5), NumericalError);
}

TEST_CASE("nan_mahalanobis is Euclidean under the identity precision") {
  const Mat omega = Mat::Identity(3, 3);
  const Vec a = vec({1, 2, 3});
  const Vec b = vec({4, 6, 3});
  CHECK(nan_mahalanobis(a, b, omega, 1) == doctest::Approx(5.0));
  CHECK(nan_mahalanobis(a, a, omega, 1) == 0.0);
}

TEST_CASE("nan_mahalanobis returns infinity below the overlap threshold") {
  const Mat omega = Mat::Identity(3, 3);
  Vec a = vec({1, 2, 3});
  Vec b = vec({1, 2, 3});
  b[0] = missing_value();
  a[1] = missing_value();
  // Overlap is {2}: |J| = 1.
  CHECK(std::isinf(nan_mahalanobis(a, b, omega, 2)));
  CHECK(nan_mahalanobis(a, b, omega, 1) == 0.0);
}

TEST_CASE("nan_mahalanobis is symmetric and positive") {
  SeedStream stream(23, "maha");
  const int K = 5;
  const Mat omega = regularized_precision(random_psd(stream, K), 1e-2);
  for (int trial = 0; trial < 50; ++trial) {
    Vec a(K), b(K);
    for (int k = 0; k < K; ++k) {
      a[k] = stream.next_u64() % 4 == 0 ? missing_value() : stream.next_normal();
      b[k] = stream.next_u64() % 4 == 0 ? missing_value() : stream.next_normal();
    }
    const double dab = nan_mahalanobis(a, b, omega, 1);
    const double dba = nan_mahalanobis(b, a, omega, 1);
    if (std::isinf(dab)) {
      CHECK(std::isinf(dba));
    } else {
      CHECK(dab == doctest::Approx(dba).epsilon(1e-14));
      CHECK(dab >= 0.0);
    }
  }
}

TEST_CASE("knn_probs returns local frequencies") {
  const Mat omega = Mat::Identity(1, 1);
  auto pool = make_pool({{0.0}, {0.1}, {0.2}, {0.3}, {9.0}}, {2, 2, 2, 2, -3});
  const auto all_two = knn_probs(vec({0.05}), pool, omega, 4, 1);
  REQUIRE(all_two.probs.has_value());
  CHECK((*all_two.probs)[action_slot(2)] == 1.0);

  auto pool2 = make_pool({{0.0}, {0.1}, {0.2}, {0.3}, {9.0}}, {1, 1, 0, -1, 3});
  const auto mixed = knn_probs(vec({0.05}), pool2, omega, 4, 1);
  REQUIRE(mixed.probs.has_value());
  CHECK((*mixed.probs)[action_slot(1)] == doctest::Approx(0.5));
  CHECK((*mixed.probs)[action_slot(0)] == doctest::Approx(0.25));
  CHECK((*mixed.probs)[action_slot(-1)] == doctest::Approx(0.25));
  CHECK((*mixed.probs)[action_slot(3)] == 0.0);
}

TEST_CASE("knn_probs excludes queries with fewer than k valid neighbors") {
  const Mat omega = Mat::Identity(2, 2);
  // Two pool rows have no overlap with the query.
  auto pool = make_pool({{0.0, 0.0}, {0.1, 0.1}, {0.2, 0.2}}, {1, 1, 1});
  pool.states(1, 0) = missing_value();
  pool.states(1, 1) = missing_value();
  pool.states(2, 0) = missing_value();
  pool.states(2, 1) = missing_value();
  const auto result = knn_probs(vec({0.0, 0.0}), pool, omega, 2, 1);
  CHECK(!result.probs.has_value());
  CHECK(result.n_valid_neighbors == 1);
}

TEST_CASE("knn_probs selection ignores appended undefined-distance rows") {
  const Mat omega = Mat::Identity(1, 1);
  auto base = make_pool({{0.0}, {0.2}, {0.4}, {0.6}}, {1, 2, 3, 0});
  const auto before = knn_probs(vec({0.0}), base, omega, 3, 1);

  auto extended = make_pool({{0.0}, {0.2}, {0.4}, {0.6}, {missing_value()}, {missing_value()}},
                            {1, 2, 3, 0, -3, -3});
  const auto after = knn_probs(vec({0.0}), extended, omega, 3, 1);
  REQUIRE(before.probs.has_value());
  REQUIRE(after.probs.has_value());
  CHECK(*before.probs == *after.probs);
}

TEST_CASE("knn_probs breaks distance ties by stable pool order") {
  const Mat omega = Mat::Identity(1, 1);
  // All distances equal; the first k rows must win.
  auto pool = make_pool({{1.0}, {1.0}, {1.0}, {1.0}}, {3, 3, -2, -2});
  const auto result = knn_probs(vec({0.0}), pool, omega, 2, 1);
  REQUIRE(result.probs.has_value());
  CHECK((*result.probs)[action_slot(3)] == 1.0);
}

TEST_CASE("smooth mixes toward uniform and keeps normalization") {
  std::array<double, kActionCount> delta{};
  delta[action_slot(0)] = 1.0;
  const auto smoothed = smooth(delta, 0.07);
  CHECK(smoothed[action_slot(0)] == doctest::Approx(0.94));
  for (int a = kActionMin; a <= kActionMax; ++a) {
    if (a != 0) CHECK(smoothed[action_slot(a)] == doctest::Approx(0.01));
  }

  const auto barely = smooth(delta, 1e-12);
  CHECK(barely[action_slot(0)] == doctest::Approx(1.0));

  std::array<double, kActionCount> uniform{};
  uniform.fill(1.0 / kActionCount);
  const auto fixed = smooth(uniform, 0.3);
  for (double v : fixed) CHECK(v == doctest::Approx(1.0 / kActionCount));
}

TEST_CASE("smooth output sums to one with floor eps/7") {
  SeedStream stream(31, "smooth");
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, kActionCount> p{};
    double sum = 0.0;
    for (auto& v : p) {
      v = stream.next_unit();
      sum += v;
    }
    for (auto& v : p) v /= sum;
    const double eps = 0.01 + 0.98 * stream.next_unit();
    const auto smoothed = smooth(p, eps);
    double total = 0.0;
    double min_v = 1.0;
    for (double v : smoothed) {
      total += v;
      min_v = std::min(min_v, v);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(min_v >= eps / kActionCount - 1e-15);
  }
}

TEST_CASE("rolling_estimate never looks ahead of the query period") {
  auto panel = synthetic_panel(
      6, 30, 2, [](SeedStream& s) { return vec({s.next_normal(), s.next_normal()}); },
      [](const Vec&, SeedStream& s) { return static_cast<int>(s.next_u64() % 7) - 3; });
  KnnConfig config;
  config.k = 10;
  config.debug_neighbors = true;
  const auto table = rolling_estimate(panel, config);
  REQUIRE(!table.entries.empty());
  REQUIRE(!table.debug_neighbors.empty());
  for (const auto& [key, neighbors] : table.debug_neighbors) {
    CHECK(neighbors.size() == 10);
    for (const auto& n : neighbors) {
      CHECK(n.period <= key.period);
      CHECK(!(n.period == key.period && n.entity == key.entity));  // leave-one-out
    }
  }
}

TEST_CASE("rolling_estimate converges to the marginal for a state-free policy") {
  // pi(a | s) independent of s: estimates approach the pool marginal.
  const std::array<double, kActionCount> marginal{0.05, 0.1, 0.15, 0.3, 0.2, 0.15, 0.05};
  auto draw_action = [&marginal](const Vec&, SeedStream& s) {
    double u = s.next_unit();
    for (int i = 0; i < kActionCount; ++i) {
      if (u < marginal[i]) return slot_action(i);
      u -= marginal[i];
    }
    return kActionMax;
  };
  auto panel = synthetic_panel(
      8, 150, 2, [](SeedStream& s) { return vec({s.next_normal(), s.next_normal()}); },
      draw_action);

  KnnConfig config;
  config.k = 200;
  config.smoothing_eps = 0.05;
  const auto table = rolling_estimate(panel, config);

  // Empirical marginal over the pool (all observations).
  std::array<double, kActionCount> pool_freq{};
  for (const auto& row : panel.rows) pool_freq[action_slot(*row.action_label)] += 1.0;
  for (auto& v : pool_freq) v /= static_cast<double>(panel.rows.size());
  const auto target = smooth(pool_freq, config.smoothing_eps);

  // Average the estimates at the last period, where the pool is largest.
  std::array<double, kActionCount> mean_est{};
  int n = 0;
  for (const auto& [key, entry] : table.entries) {
    if (key.period != 7) continue;
    for (int i = 0; i < kActionCount; ++i) mean_est[i] += entry.p[i];
    ++n;
  }
  REQUIRE(n > 0);
  double tv = 0.0;
  for (int i = 0; i < kActionCount; ++i) tv += std::abs(mean_est[i] / n - target[i]);
  CHECK(tv / 2.0 < 0.03);
}

TEST_CASE("rolling_estimate pins deterministic bucket policies after smoothing") {
  // Three well-separated state buckets, each with a deterministic action.
  auto draw_state = [](SeedStream& s) {
    const int bucket = static_cast<int>(s.next_u64() % 3);
    return vec({bucket * 20.0 + 0.01 * s.next_normal(), 0.01 * s.next_normal()});
  };
  auto draw_action = [](const Vec& state, SeedStream&) {
    const int bucket = static_cast<int>(std::lround(state[0] / 20.0));
    return bucket - 1;  // actions -1, 0, 1
  };
  auto panel = synthetic_panel(5, 120, 2, draw_state, draw_action);

  KnnConfig config;
  config.k = 25;
  config.smoothing_eps = 0.05;
  const auto table = rolling_estimate(panel, config);
  REQUIRE(!table.entries.empty());

  const double floor = (1.0 - config.smoothing_eps) + config.smoothing_eps / kActionCount;
  std::size_t checked = 0;
  for (const auto& row : panel.rows) {
    if (row.period < 2) continue;  // let every bucket accumulate pool mass
    const auto it = table.entries.find({row.entity, row.period});
    if (it == table.entries.end()) continue;
    CHECK(it->second.p[action_slot(*row.action_label)] >= floor - 1e-12);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("rolling_estimate skips periods whose covariance resists the ridge") {
  // Pairwise deletion can produce an indefinite matrix: three features whose
  // pairwise correlations are mutually inconsistent.
  PanelDataset panel;
  panel.K = 3;
  panel.feature_names = {"f1", "f2", "f3"};
  panel.standardization = Standardization::identity(3);
  SeedStream stream(77, "skip");
  int id = 0;
  auto add_row = [&](double a, double b, double c) {
    PanelRow row;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "e%05d", id++);
    row.entity = buf;
    row.period = 0;
    row.features = vec({a, b, c});
    row.action_label = 0;
    panel.rows.push_back(std::move(row));
  };
  // Pairs (0,1) and (0,2) perfectly correlated, pair (1,2) perfectly
  // anticorrelated, each observed on separate rows; scale 3 so that even the
  // escalated ridge (0.1) cannot make the matrix positive-definite.
  for (int i = 0; i < 20; ++i) {
    const double v = 3.0 * stream.next_normal();
    add_row(v, v, missing_value());
    const double w = 3.0 * stream.next_normal();
    add_row(w, missing_value(), w);
    const double u = 3.0 * stream.next_normal();
    add_row(missing_value(), u, -u);
  }
  KnnConfig config;
  config.k = 5;
  config.lambda = 1e-3;
  const auto table = rolling_estimate(panel, config);
  CHECK(table.entries.empty());
  CHECK(table.skipped_periods == std::vector<std::int64_t>{0});
  CHECK(!table.warnings.empty());
}

TEST_CASE("policy_likelihood multiplies table probabilities along the trajectory") {
  auto traj = make_trajectory({{0, 0}, {0, 0}, {0, 0}}, {1, -2}, "e1", 5);
  auto set = make_set({traj});
  const auto table = uniform_table(set);
  const auto lik = policy_likelihood(traj, table);
  REQUIRE(lik.has_value());
  CHECK(*lik == doctest::Approx(1.0 / 49.0));
}

TEST_CASE("policy_likelihood of a single matched step is that probability") {
  auto traj = make_trajectory({{0.0}, {0.0}}, {2}, "e1", 0);
  auto set = make_set({traj});
  const double eps = 0.05;
  std::array<double, kActionCount> p{};
  p.fill(eps / kActionCount);
  p[action_slot(2)] = (1.0 - eps) + eps / kActionCount;
  const auto table = constant_table(set, p, eps);
  const auto lik = policy_likelihood(traj, table);
  REQUIRE(lik.has_value());
  CHECK(*lik == doctest::Approx((1.0 - eps) + eps / kActionCount));
}

TEST_CASE("policy_likelihood is floored by the smoothing mass") {
  SeedStream stream(41, "floor");
  const double eps = 0.05;
  for (int trial = 0; trial < 20; ++trial) {
    const int H = 1 + static_cast<int>(stream.next_u64() % 5);
    std::vector<std::vector<double>> states(H + 1, {0.0});
    std::vector<int> actions;
    for (int t = 0; t < H; ++t) actions.push_back(static_cast<int>(stream.next_u64() % 7) - 3);
    auto traj = make_trajectory(states, actions, "e1", 0);
    auto set = make_set({traj});

    std::array<double, kActionCount> p{};
    double sum = 0.0;
    for (auto& v : p) {
      v = stream.next_unit();
      sum += v;
    }
    for (auto& v : p) v /= sum;
    const auto table = constant_table(set, smooth(p, eps), eps);
    const auto lik = policy_likelihood(traj, table);
    REQUIRE(lik.has_value());
    CHECK(*lik >= std::pow(eps / kActionCount, H) * (1.0 - 1e-12));
  }
}

TEST_CASE("policy_likelihood reports missing table entries") {
  auto traj = make_trajectory({{0.0}, {0.0}, {0.0}}, {0, 0}, "e1", 0);
  auto set = make_set({traj});
  auto table = uniform_table(set);
  table.entries.erase({"e1", 1});
  CHECK(!policy_likelihood(traj, table).has_value());
}
