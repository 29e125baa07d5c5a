#include "reirl/panel.hpp"

#include "reirl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

namespace reirl {
namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delimiter)) cells.push_back(cell);
  if (!line.empty() && line.back() == delimiter) cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string s = trim(raw);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("malformed numeric cell at row " + std::to_string(row) + " column '" +
                    column + "': '" + s + "'");
  }
  return value;
}

std::int64_t parse_period(const std::string& raw, std::size_t row) {
  const std::string s = trim(raw);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("malformed period at row " + std::to_string(row) + ": '" + s + "'");
  }
  return value;
}

}  // namespace

PanelDataset load_panel(std::istream& in, const PanelSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty panel stream: no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line, schema.delimiter);
  int entity_col = -1, period_col = -1, action_col = -1;
  std::vector<int> feature_cols;
  std::vector<std::string> feature_names;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const std::string name = trim(header[i]);
    if (name == schema.entity_column) {
      entity_col = i;
    } else if (name == schema.period_column) {
      period_col = i;
    } else if (name == schema.action_column) {
      action_col = i;
    } else {
      feature_cols.push_back(i);
      feature_names.push_back(name);
    }
  }
  if (entity_col < 0 || period_col < 0 || action_col < 0) {
    throw DataError("panel header must contain columns '" + schema.entity_column + "', '" +
                    schema.period_column + "', '" + schema.action_column + "'");
  }

  PanelDataset panel;
  panel.K = static_cast<int>(feature_cols.size());
  panel.feature_names = feature_names;
  panel.standardization = Standardization::identity(panel.K);

  std::size_t row_number = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row_number) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    PanelRow row;
    row.entity = trim(cells[entity_col]);
    if (row.entity.empty()) {
      throw DataError("empty entity at row " + std::to_string(row_number));
    }
    row.period = parse_period(cells[period_col], row_number);
    row.raw_action = parse_cell(cells[action_col], row_number, schema.action_column);
    row.features = Vec(panel.K);
    for (int k = 0; k < panel.K; ++k) {
      const std::string& cell = cells[feature_cols[k]];
      if (trim(cell).empty()) {
        row.features[k] = missing_value();
      } else {
        row.features[k] = parse_cell(cell, row_number, feature_names[k]);
      }
    }
    panel.rows.push_back(std::move(row));
  }

  std::stable_sort(panel.rows.begin(), panel.rows.end(),
                   [](const PanelRow& a, const PanelRow& b) {
                     return std::tie(a.entity, a.period) < std::tie(b.entity, b.period);
                   });
  for (std::size_t i = 1; i < panel.rows.size(); ++i) {
    if (panel.rows[i].entity == panel.rows[i - 1].entity &&
        panel.rows[i].period == panel.rows[i - 1].period) {
      throw DataError("duplicate (entity, period) key: (" + panel.rows[i].entity + ", " +
                      std::to_string(panel.rows[i].period) + ")");
    }
  }
  return panel;
}

double interpolated_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

int bin_by_cuts(double x, double p1, double p2, double p3) {
  if (x >= p3) return 3;
  if (x >= p2) return 2;
  if (x >= p1) return 1;
  return 0;
}

}  // namespace

DiscretizeReport discretize_actions(PanelDataset& panel) {
  std::map<std::int64_t, std::vector<std::size_t>> by_period;
  for (std::size_t i = 0; i < panel.rows.size(); ++i) {
    by_period[panel.rows[i].period].push_back(i);
  }

  DiscretizeReport report;
  for (auto& [period, indices] : by_period) {
    if (indices.empty()) {
      throw DataError("empty cross-section at period " + std::to_string(period));
    }
    std::vector<double> nonneg, neg_abs;
    for (auto i : indices) {
      const double x = panel.rows[i].raw_action;
      if (x >= 0.0) {
        nonneg.push_back(x);
      } else {
        neg_abs.push_back(-x);
      }
    }

    PeriodCuts cuts;
    cuts.period = period;
    cuts.n_nonnegative = nonneg.size();
    cuts.n_negative = neg_abs.size();
    if (!nonneg.empty()) {
      cuts.pos_p1 = interpolated_quantile(nonneg, 0.01);
      cuts.pos_p2 = interpolated_quantile(nonneg, 0.30);
      cuts.pos_p3 = interpolated_quantile(nonneg, 0.70);
    }
    if (!neg_abs.empty()) {
      cuts.neg_p1 = interpolated_quantile(neg_abs, 0.01);
      cuts.neg_p2 = interpolated_quantile(neg_abs, 0.30);
      cuts.neg_p3 = interpolated_quantile(neg_abs, 0.70);
    }

    for (auto i : indices) {
      const double x = panel.rows[i].raw_action;
      if (x >= 0.0) {
        panel.rows[i].action_label = bin_by_cuts(x, cuts.pos_p1, cuts.pos_p2, cuts.pos_p3);
      } else {
        panel.rows[i].action_label = -bin_by_cuts(-x, cuts.neg_p1, cuts.neg_p2, cuts.neg_p3);
      }
    }
    report.cuts.push_back(cuts);
  }
  return report;
}

Standardization compute_standardization(const PanelDataset& panel) {
  Standardization s;
  s.mean = Vec::Zero(panel.K);
  s.stddev = Vec::Ones(panel.K);
  std::size_t observed_total = 0;
  for (int k = 0; k < panel.K; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : panel.rows) {
      if (!is_missing(row.features[k])) {
        sum += row.features[k];
        ++n;
      }
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& row : panel.rows) {
      if (!is_missing(row.features[k])) {
        const double d = row.features[k] - mean;
        ss += d * d;
      }
    }
    s.mean[k] = mean;
    // Constant features standardize to 0; unit stddev keeps them harmless.
    s.stddev[k] = (n > 1 && ss > 0.0) ? std::sqrt(ss / static_cast<double>(n - 1)) : 1.0;
    observed_total += n;
  }
  s.provenance = "zscore:" + std::to_string(panel.rows.size()) + "x" +
                 std::to_string(panel.K) + ":observed=" + std::to_string(observed_total);
  return s;
}

BuildResult build_trajectories(const PanelDataset& panel, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
  BuildResult result;
  std::map<int, TrajectorySet> by_horizon;

  std::size_t i = 0;
  while (i < panel.rows.size()) {
    // Maximal run of consecutive periods within one entity.
    std::size_t j = i + 1;
    while (j < panel.rows.size() && panel.rows[j].entity == panel.rows[i].entity &&
           panel.rows[j].period == panel.rows[j - 1].period + 1) {
      ++j;
    }
    const std::size_t run_len = j - i;
    if (run_len < 2) {
      result.dropped_rows += run_len;
      i = j;
      continue;
    }
    Trajectory traj;
    traj.entity = panel.rows[i].entity;
    traj.start_period = panel.rows[i].period;
    traj.id = traj.entity + ":" + std::to_string(panel.rows[i].period) + "-" +
              std::to_string(panel.rows[j - 1].period);
    traj.states.reserve(run_len);
    traj.actions.reserve(run_len - 1);
    for (std::size_t r = i; r < j; ++r) {
      Vec st = panel.standardization.apply(panel.rows[r].features);
      for (Eigen::Index k = 0; k < st.size(); ++k) {
        if (is_missing(st[k])) st[k] = 0.0;
      }
      traj.states.push_back(std::move(st));
      if (r + 1 < j) {
        if (!panel.rows[r].action_label.has_value()) {
          throw DataError("build_trajectories requires discretized actions (entity " +
                          traj.entity + ", period " + std::to_string(panel.rows[r].period) +
                          ")");
        }
        traj.actions.push_back(*panel.rows[r].action_label);
      }
    }
    const int H = traj.horizon();
    auto& set = by_horizon[H];
    set.horizon = H;
    set.K = panel.K;
    set.gamma = gamma;
    set.trajectories.push_back(std::move(traj));
    i = j;
  }

  for (auto& [h, set] : by_horizon) result.sets.push_back(std::move(set));
  return result;
}

Vec feature_counts(const Trajectory& traj, double gamma) {
  if (traj.states.empty()) throw DataError("trajectory has no states");
  const auto K = traj.states.front().size();
  Vec counts = Vec::Zero(K);
  double w = 1.0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const Vec& s = traj.states[t];
    for (Eigen::Index k = 0; k < K; ++k) {
      if (!is_missing(s[k])) counts[k] += w * s[k];
    }
    w *= gamma;
  }
  return counts;
}

Vec empirical_mean_counts(const TrajectorySet& set) {
  if (set.trajectories.empty()) throw DataError("empty trajectory set");
  Vec sum = Vec::Zero(set.K);
  for (const auto& traj : set.trajectories) {
    sum += feature_counts(traj, set.gamma);
  }
  return sum / static_cast<double>(set.trajectories.size());
}

FeatureBounds feature_bounds(const TrajectorySet& set, double gamma) {
  if (set.trajectories.empty()) throw DataError("empty trajectory set");
  FeatureBounds bounds;
  bounds.upper = Vec::Zero(set.K);
  bounds.lower = Vec::Zero(set.K);
  bounds.geom_factor = geometric_sum(gamma, set.horizon);
  std::vector<bool> seen(set.K, false);
  for (const auto& traj : set.trajectories) {
    for (const auto& s : traj.states) {
      for (int k = 0; k < set.K; ++k) {
        if (is_missing(s[k])) continue;
        if (!seen[k]) {
          bounds.upper[k] = bounds.lower[k] = s[k];
          seen[k] = true;
        } else {
          bounds.upper[k] = std::max(bounds.upper[k], s[k]);
          bounds.lower[k] = std::min(bounds.lower[k], s[k]);
        }
      }
    }
  }
  return bounds;
}

}  // namespace reirl
