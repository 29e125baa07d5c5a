#include "reirl/stats.hpp"

#include "reirl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reirl {
namespace {

/// Continued fraction for the incomplete beta function, modified Lentz
/// evaluation. Converges for x < (a + 1) / (a + b + 2).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ConfigError("beta parameters must be positive");
  if (x < 0.0 || x > 1.0) throw ConfigError("beta argument must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw ConfigError("degrees of freedom must be positive");
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0.0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

WeightedTTestReport weighted_ttest(const ThetaPanel& panel) {
  std::int64_t total_weight = 0;
  std::size_t effective_rows = 0;
  Eigen::Index K = -1;
  for (const auto& row : panel.rows) {
    if (row.weight < 0) throw DataError("negative weight in theta panel");
    if (row.weight == 0) continue;
    if (K < 0) {
      K = row.theta.size();
    } else if (row.theta.size() != K) {
      throw DataError("theta panel rows disagree on K");
    }
    total_weight += row.weight;
    ++effective_rows;
  }
  if (effective_rows < 2 || total_weight < 2) {
    throw DataError("weighted t-test needs at least 2 effective observations");
  }

  const double W = static_cast<double>(total_weight);
  const double df = W - 1.0;

  WeightedTTestReport report;
  report.total_weight = total_weight;
  report.degrees_of_freedom = df;
  report.components.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    double wsum = 0.0;
    for (const auto& row : panel.rows) {
      if (row.weight == 0) continue;
      wsum += static_cast<double>(row.weight) * row.theta[k];
    }
    const double mean = wsum / W;
    double ss = 0.0;
    for (const auto& row : panel.rows) {
      if (row.weight == 0) continue;
      const double d = row.theta[k] - mean;
      ss += static_cast<double>(row.weight) * d * d;
    }
    // Frequency-weight semantics: weight w counts as w identical rows.
    const double variance = ss / df;

    ComponentTest test;
    test.mean = mean;
    test.variance = variance;
    if (variance > 0.0) {
      test.t_statistic = mean / std::sqrt(variance / W);
    } else {
      test.t_statistic = mean == 0.0 ? 0.0 : std::copysign(
          std::numeric_limits<double>::infinity(), mean);
    }
    const double cdf = student_t_cdf(test.t_statistic, df);
    test.p_two_sided = 2.0 * std::min(cdf, 1.0 - cdf);
    test.p_greater = 1.0 - cdf;
    test.p_less = cdf;
    test.significant_10 = test.p_two_sided < 0.10;
    test.significant_05 = test.p_two_sided < 0.05;
    test.significant_01 = test.p_two_sided < 0.01;
    report.components[static_cast<std::size_t>(k)] = test;
  }
  return report;
}

RegressionReport reward_regression(const std::vector<double>& rewards,
                                   const std::vector<double>& holdings_changes) {
  const std::size_t n = rewards.size();
  if (holdings_changes.size() != n) throw DataError("regression inputs have different lengths");
  if (n < 3) throw DataError("regression needs at least 3 observations");

  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += rewards[i];
    mean_y += holdings_changes[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0, syy = 0.0, max_dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rewards[i] - mean_x;
    const double dy = holdings_changes[i] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
    max_dev = std::max(max_dev, std::abs(dx));
  }
  if (max_dev <= 1e-12 * (1.0 + std::abs(mean_x))) {
    throw DataError("degenerate design: rewards are constant");
  }

  RegressionReport report;
  report.n = static_cast<std::int64_t>(n);
  report.slope = sxy / sxx;
  report.intercept = mean_y - report.slope * mean_x;
  const double ssr = syy - report.slope * sxy;  // residual sum of squares
  const double df = static_cast<double>(n) - 2.0;
  const double sigma2 = std::max(ssr, 0.0) / df;
  const double se = std::sqrt(sigma2 / sxx);
  if (se > 0.0) {
    report.t_statistic = report.slope / se;
  } else {
    report.t_statistic = report.slope == 0.0 ? 0.0 : std::copysign(
        std::numeric_limits<double>::infinity(), report.slope);
  }
  const double cdf = student_t_cdf(report.t_statistic, df);
  report.p_two_sided = 2.0 * std::min(cdf, 1.0 - cdf);
  report.r_squared = syy > 0.0 ? 1.0 - std::max(ssr, 0.0) / syy : 0.0;
  return report;
}

}  // namespace reirl
