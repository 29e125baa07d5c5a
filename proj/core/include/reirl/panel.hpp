#pragma once

#include "reirl/types.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace reirl {

/// Column names expected in the delimited-text input. Any columns that are
/// not the entity/period/action columns are treated as features, in header
/// order.
struct PanelSchema {
  std::string entity_column = "entity";
  std::string period_column = "period";
  std::string action_column = "action_raw";
  char delimiter = ',';
};

/// Parses a delimited-text panel. Header row required; empty feature cells
/// mark missing values and are kept, not imputed. Rows are returned sorted by
/// (entity, period).
///
/// Throws DataError for malformed numeric cells (naming row and column) and
/// for duplicate (entity, period) keys.
PanelDataset load_panel(std::istream& in, const PanelSchema& schema = {});

/// Quantile with linear interpolation between order statistics, p in [0, 1].
double interpolated_quantile(std::vector<double> values, double p);

/// Cross-sectional percentile cuts used at one period.
struct PeriodCuts {
  std::int64_t period = 0;
  std::size_t n_nonnegative = 0;
  std::size_t n_negative = 0;
  double pos_p1 = 0, pos_p2 = 0, pos_p3 = 0;  // 1st/30th/70th of nonnegative values
  double neg_p1 = 0, neg_p2 = 0, neg_p3 = 0;  // same, of |negative values|
};

struct DiscretizeReport {
  std::vector<PeriodCuts> cuts;
};

/// Maps raw actions to labels in {-3..3} using cross-sectional quantiles at
/// each period. Nonnegative values x (zero included) bin against the
/// 1st/30th/70th percentiles of the period's nonnegative subsample:
///   0 <= x < p1 -> 0,  p1 <= x < p2 -> 1,  p2 <= x < p3 -> 2,  x >= p3 -> 3.
/// Strictly negative values bin |y| against percentiles of the absolute
/// negative subsample, with labels 0, -1, -2, -3 in the same pattern.
DiscretizeReport discretize_actions(PanelDataset& panel);

/// Per-feature mean and standard deviation over observed entries. Constant
/// features get stddev 1 so standardization maps them to 0.
Standardization compute_standardization(const PanelDataset& panel);

struct BuildResult {
  std::vector<TrajectorySet> sets;  // ascending horizon
  std::size_t dropped_rows = 0;     // rows in runs too short to form H >= 1
};

/// Cuts each entity's row sequence into maximal runs of consecutive periods
/// and groups the resulting trajectories by horizon. A run of L rows yields
/// states from all L rows and actions from the first L-1. States are
/// standardized with the panel's transform; missing entries become 0 in
/// standardized space. Requires discretized actions.
BuildResult build_trajectories(const PanelDataset& panel, double gamma);

/// Discounted feature count: sum_t gamma^t * s_{t,k}. Missing entries
/// contribute 0.
Vec feature_counts(const Trajectory& traj, double gamma);

/// Sample mean of the feature counts over the set (uses the set's gamma).
Vec empirical_mean_counts(const TrajectorySet& set);

/// Empirical per-step bounds of each feature over all states in the set
/// (not bounds of the counts), plus the geometric sum for the given gamma.
FeatureBounds feature_bounds(const TrajectorySet& set, double gamma);

}  // namespace reirl
