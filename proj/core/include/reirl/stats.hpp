#pragma once

#include "reirl/types.hpp"

#include <cstdint>
#include <vector>

namespace reirl {

/// Regularized incomplete beta function I_x(a, b), continued-fraction
/// evaluation, absolute accuracy better than 1e-10 over the tested range.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// One estimate per horizon group with its trajectory count as weight.
struct ThetaPanelRow {
  int horizon = 0;
  Vec theta;
  std::int64_t weight = 1;
};

struct ThetaPanel {
  std::vector<ThetaPanelRow> rows;
};

struct ComponentTest {
  double mean = 0.0;
  double variance = 0.0;  // frequency-weighted, denominator sum(w) - 1
  double t_statistic = 0.0;
  double p_two_sided = 1.0;
  double p_greater = 0.5;  // H1: mean > 0
  double p_less = 0.5;     // H1: mean < 0
  bool significant_10 = false;
  bool significant_05 = false;
  bool significant_01 = false;
};

struct WeightedTTestReport {
  std::vector<ComponentTest> components;
  std::int64_t total_weight = 0;
  double degrees_of_freedom = 0.0;
};

/// One-sample two-sided t-test of each component against 0, with frequency
/// weights: a row of weight w counts exactly as w identical unweighted rows.
/// Throws DataError with fewer than 2 effective observations.
WeightedTTestReport weighted_ttest(const ThetaPanel& panel);

struct RegressionReport {
  double slope = 0.0;
  double intercept = 0.0;
  double t_statistic = 0.0;
  double p_two_sided = 1.0;
  double r_squared = 0.0;
  std::int64_t n = 0;
};

/// OLS of y on x with intercept; two-sided t-test of the slope. Throws
/// DataError for length mismatch, n < 3, or a constant regressor.
RegressionReport reward_regression(const std::vector<double>& rewards,
                                   const std::vector<double>& holdings_changes);

}  // namespace reirl
