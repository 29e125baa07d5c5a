#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reirl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Discrete action alphabet: integer labels -3..3 (7 values).
constexpr int kActionMin = -3;
constexpr int kActionMax = 3;
constexpr int kActionCount = 7;

inline bool valid_action_label(int label) {
  return label >= kActionMin && label <= kActionMax;
}

/// Slot of a label inside a 7-vector of probabilities (label -3 -> 0).
inline int action_slot(int label) { return label - kActionMin; }
inline int slot_action(int slot) { return slot + kActionMin; }

/// Missing feature entries are carried as NaN.
inline bool is_missing(double x) { return std::isnan(x); }
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

/// Per-feature z-score transform. `identity()` passes data through unchanged
/// (used for synthetic inputs that are already on a unit scale).
struct Standardization {
  Vec mean;
  Vec stddev;
  std::string provenance;

  static Standardization identity(int K) {
    Standardization s;
    s.mean = Vec::Zero(K);
    s.stddev = Vec::Ones(K);
    s.provenance = "identity";
    return s;
  }

  bool is_identity() const { return provenance == "identity"; }

  /// Missing entries stay NaN.
  Vec apply(const Vec& raw) const {
    Vec out(raw.size());
    for (Eigen::Index k = 0; k < raw.size(); ++k) {
      out[k] = is_missing(raw[k]) ? raw[k] : (raw[k] - mean[k]) / stddev[k];
    }
    return out;
  }
};

/// One (entity, period) observation of a panel.
struct PanelRow {
  std::string entity;
  std::int64_t period = 0;
  Vec features;                     // K entries, NaN = missing
  double raw_action = 0.0;          // change in hold ratio, dimensionless
  std::optional<int> action_label;  // set by discretize_actions
};

/// Panel sorted by (entity, period); periods strictly increase within an
/// entity and K is identical across rows.
struct PanelDataset {
  int K = 0;
  std::vector<std::string> feature_names;
  std::vector<PanelRow> rows;
  Standardization standardization;  // identity until ingest computes z-scores
};

/// Alternating state/action sequence: H+1 states, H actions. States are
/// standardized feature vectors with missing entries imputed to 0.
struct Trajectory {
  std::string id;
  std::string entity;
  std::int64_t start_period = 0;
  std::vector<Vec> states;
  std::vector<int> actions;  // labels in -3..3

  int horizon() const { return static_cast<int>(actions.size()); }
};

/// Trajectories sharing one horizon H.
struct TrajectorySet {
  int horizon = 0;
  int K = 0;
  double gamma = 1.0;
  std::vector<Trajectory> trajectories;

  std::int64_t size() const { return static_cast<std::int64_t>(trajectories.size()); }
};

/// Per-step feature bounds u_k >= l_k, with the geometric discount sum
/// (1 + gamma + ... + gamma^H) they are reported alongside.
struct FeatureBounds {
  Vec upper;
  Vec lower;
  double geom_factor = 1.0;
};

/// Sum of the discount series: 1 + gamma + ... + gamma^H.
inline double geometric_sum(double gamma, int horizon) {
  if (gamma == 1.0) return static_cast<double>(horizon + 1);
  return (std::pow(gamma, horizon + 1) - 1.0) / (gamma - 1.0);
}

}  // namespace reirl
