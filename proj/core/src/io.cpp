#include "reirl/io.hpp"

#include "reirl/errors.hpp"
#include "reirl/version.hpp"

#include <json.hpp>

#include <fstream>

namespace reirl {
namespace {

using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
  return j;
}

void save_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (is_missing(v[i])) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(v[i]);
    }
  }
  return arr;
}

Vec vec_from_json(const json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = arr[i].is_null() ? missing_value() : arr[i].get<double>();
  }
  return v;
}

json meta_to_json(const ArtifactMeta& meta) {
  return json{{"config_hash", meta.config_hash}, {"seed", meta.seed}};
}

ArtifactMeta meta_from_json(const json& j) {
  ArtifactMeta meta;
  if (j.contains("meta")) {
    meta.config_hash = j["meta"].value("config_hash", "");
    meta.seed = j["meta"].value("seed", 0ULL);
  }
  return meta;
}

}  // namespace

void write_panel(const std::filesystem::path& path, const PanelDataset& panel,
                 const ArtifactMeta& meta) {
  json rows = json::array();
  for (const auto& row : panel.rows) {
    json r{{"entity", row.entity},
           {"period", row.period},
           {"features", vec_to_json(row.features)},
           {"action_raw", row.raw_action}};
    if (row.action_label.has_value()) r["action_label"] = *row.action_label;
    rows.push_back(std::move(r));
  }
  json j{{"kind", "panel"},
         {"meta", meta_to_json(meta)},
         {"K", panel.K},
         {"feature_names", panel.feature_names},
         {"standardization",
          json{{"mean", vec_to_json(panel.standardization.mean)},
               {"stddev", vec_to_json(panel.standardization.stddev)},
               {"provenance", panel.standardization.provenance}}},
         {"rows", std::move(rows)}};
  save_json(path, j);
}

PanelDataset read_panel(const std::filesystem::path& path, ArtifactMeta* meta) {
  const json j = load_json(path);
  if (j.value("kind", "") != "panel") throw DataError("'" + path.string() + "' is not a panel");
  if (meta) *meta = meta_from_json(j);
  PanelDataset panel;
  panel.K = j.at("K").get<int>();
  panel.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  panel.standardization.mean = vec_from_json(j.at("standardization").at("mean"));
  panel.standardization.stddev = vec_from_json(j.at("standardization").at("stddev"));
  panel.standardization.provenance = j.at("standardization").at("provenance").get<std::string>();
  for (const auto& r : j.at("rows")) {
    PanelRow row;
    row.entity = r.at("entity").get<std::string>();
    row.period = r.at("period").get<std::int64_t>();
    row.features = vec_from_json(r.at("features"));
    row.raw_action = r.at("action_raw").get<double>();
    if (r.contains("action_label")) row.action_label = r.at("action_label").get<int>();
    panel.rows.push_back(std::move(row));
  }
  return panel;
}

void write_trajectory_sets(const std::filesystem::path& path,
                           const std::vector<TrajectorySet>& sets, const ArtifactMeta& meta,
                           std::size_t dropped_rows) {
  json out_sets = json::array();
  for (const auto& set : sets) {
    json trajs = json::array();
    for (const auto& traj : set.trajectories) {
      json states = json::array();
      for (const auto& s : traj.states) states.push_back(vec_to_json(s));
      trajs.push_back(json{{"id", traj.id},
                           {"entity", traj.entity},
                           {"start_period", traj.start_period},
                           {"states", std::move(states)},
                           {"actions", traj.actions}});
    }
    out_sets.push_back(json{{"horizon", set.horizon},
                            {"K", set.K},
                            {"gamma", set.gamma},
                            {"n", set.trajectories.size()},
                            {"trajectories", std::move(trajs)}});
  }
  json j{{"kind", "trajectory_sets"},
         {"meta", meta_to_json(meta)},
         {"dropped_rows", dropped_rows},
         {"sets", std::move(out_sets)}};
  save_json(path, j);
}

std::vector<TrajectorySet> read_trajectory_sets(const std::filesystem::path& path,
                                                ArtifactMeta* meta) {
  const json j = load_json(path);
  if (j.value("kind", "") != "trajectory_sets") {
    throw DataError("'" + path.string() + "' is not a trajectory-set file");
  }
  if (meta) *meta = meta_from_json(j);
  std::vector<TrajectorySet> sets;
  for (const auto& s : j.at("sets")) {
    TrajectorySet set;
    set.horizon = s.at("horizon").get<int>();
    set.K = s.at("K").get<int>();
    set.gamma = s.at("gamma").get<double>();
    for (const auto& t : s.at("trajectories")) {
      Trajectory traj;
      traj.id = t.at("id").get<std::string>();
      traj.entity = t.at("entity").get<std::string>();
      traj.start_period = t.at("start_period").get<std::int64_t>();
      for (const auto& st : t.at("states")) traj.states.push_back(vec_from_json(st));
      traj.actions = t.at("actions").get<std::vector<int>>();
      set.trajectories.push_back(std::move(traj));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

void write_policy_table(const std::filesystem::path& path, const PolicyTable& table,
                        const ArtifactMeta& meta) {
  json entries = json::array();
  for (const auto& [key, entry] : table.entries) {
    json p = json::array();
    for (double v : entry.p) p.push_back(v);
    entries.push_back(json{{"entity", key.entity},
                           {"period", key.period},
                           {"p", std::move(p)},
                           {"n_valid_neighbors", entry.n_valid_neighbors},
                           {"excluded", false}});
  }
  for (const auto& key : table.excluded) {
    entries.push_back(json{{"entity", key.entity},
                           {"period", key.period},
                           {"p", nullptr},
                           {"n_valid_neighbors", 0},
                           {"excluded", true}});
  }
  json j{{"kind", "policy_table"},
         {"meta", meta_to_json(meta)},
         {"smoothing_eps", table.smoothing_eps},
         {"k_neighbors", table.k_neighbors},
         {"min_overlap", table.min_overlap},
         {"skipped_periods", table.skipped_periods},
         {"warnings", table.warnings},
         {"excluded_count", table.excluded.size()},
         {"entries", std::move(entries)}};
  save_json(path, j);
}

PolicyTable read_policy_table(const std::filesystem::path& path, ArtifactMeta* meta) {
  const json j = load_json(path);
  if (j.value("kind", "") != "policy_table") {
    throw DataError("'" + path.string() + "' is not a policy table");
  }
  if (meta) *meta = meta_from_json(j);
  PolicyTable table;
  table.smoothing_eps = j.at("smoothing_eps").get<double>();
  table.k_neighbors = j.at("k_neighbors").get<int>();
  table.min_overlap = j.at("min_overlap").get<int>();
  table.skipped_periods = j.at("skipped_periods").get<std::vector<std::int64_t>>();
  table.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& e : j.at("entries")) {
    PolicyKey key{e.at("entity").get<std::string>(), e.at("period").get<std::int64_t>()};
    if (e.at("excluded").get<bool>()) {
      table.excluded.push_back(std::move(key));
      continue;
    }
    PolicyEntry entry;
    const auto& p = e.at("p");
    if (p.size() != kActionCount) throw DataError("policy entry has wrong arity");
    for (int i = 0; i < kActionCount; ++i) entry.p[i] = p[i].get<double>();
    entry.n_valid_neighbors = e.at("n_valid_neighbors").get<int>();
    table.entries.emplace(std::move(key), entry);
  }
  return table;
}

void write_theta_record(const std::filesystem::path& path, const ThetaRecord& record) {
  json j{{"kind", "theta_record"},
         {"theta", vec_to_json(record.theta)},
         {"K", record.K},
         {"H", record.horizon},
         {"N", record.n_trajectories},
         {"gamma", record.gamma},
         {"delta", record.delta},
         {"eps", vec_to_json(record.eps)},
         {"iterations", record.iterations},
         {"final_grad_norm", record.final_grad_norm},
         {"converged", record.converged},
         {"seed", record.seed},
         {"uniform_actions", record.uniform_actions},
         {"standard_hoeffding", record.standard_hoeffding},
         {"config_hash", record.config_hash}};
  save_json(path, j);
}

ThetaRecord read_theta_record(const std::filesystem::path& path) {
  const json j = load_json(path);
  if (j.value("kind", "") != "theta_record") {
    throw DataError("'" + path.string() + "' is not a theta record");
  }
  ThetaRecord record;
  record.theta = vec_from_json(j.at("theta"));
  record.K = j.at("K").get<int>();
  record.horizon = j.at("H").get<int>();
  record.n_trajectories = j.at("N").get<std::int64_t>();
  record.gamma = j.at("gamma").get<double>();
  record.delta = j.at("delta").get<double>();
  record.eps = vec_from_json(j.at("eps"));
  record.iterations = j.at("iterations").get<int>();
  record.final_grad_norm = j.at("final_grad_norm").get<double>();
  record.converged = j.at("converged").get<bool>();
  record.seed = j.at("seed").get<std::uint64_t>();
  record.uniform_actions = j.at("uniform_actions").get<int>();
  record.standard_hoeffding = j.at("standard_hoeffding").get<bool>();
  record.config_hash = j.at("config_hash").get<std::string>();
  return record;
}

void write_weights_manifest(const std::filesystem::path& path,
                            const std::vector<WeightsEntry>& entries,
                            const ArtifactMeta& meta) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back(json{{"H", e.horizon}, {"weight", e.weight}, {"theta_file", e.theta_file}});
  }
  json j{{"kind", "weights_manifest"}, {"meta", meta_to_json(meta)}, {"groups", std::move(arr)}};
  save_json(path, j);
}

std::vector<WeightsEntry> read_weights_manifest(const std::filesystem::path& path,
                                                ArtifactMeta* meta) {
  const json j = load_json(path);
  if (j.value("kind", "") != "weights_manifest") {
    throw DataError("'" + path.string() + "' is not a weights manifest");
  }
  if (meta) *meta = meta_from_json(j);
  std::vector<WeightsEntry> entries;
  for (const auto& e : j.at("groups")) {
    WeightsEntry entry;
    entry.horizon = e.at("H").get<int>();
    entry.weight = e.at("weight").get<std::int64_t>();
    entry.theta_file = e.at("theta_file").get<std::string>();
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_mdp(const std::filesystem::path& path, const FiniteMDP& mdp) {
  json rows = json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      json row = json::array();
      for (int s2 = 0; s2 < mdp.n_states; ++s2) row.push_back(mdp.p(s, a, s2));
      rows.push_back(json{{"state", s}, {"action", a}, {"p", std::move(row)}});
    }
  }
  json features = json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    features.push_back(vec_to_json(mdp.state_features.row(s).transpose()));
  }
  json j{{"kind", "finite_mdp"},
         {"n_states", mdp.n_states},
         {"n_actions", mdp.n_actions},
         {"initial_state", mdp.initial_state},
         {"transition", std::move(rows)},
         {"state_features", std::move(features)}};
  save_json(path, j);
}

FiniteMDP read_mdp(const std::filesystem::path& path) {
  const json j = load_json(path);
  if (j.value("kind", "") != "finite_mdp") {
    throw DataError("'" + path.string() + "' is not an MDP spec");
  }
  FiniteMDP mdp;
  mdp.n_states = j.at("n_states").get<int>();
  mdp.n_actions = j.at("n_actions").get<int>();
  mdp.initial_state = j.at("initial_state").get<int>();
  mdp.transition.assign(
      static_cast<std::size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states, 0.0);
  for (const auto& row : j.at("transition")) {
    const int s = row.at("state").get<int>();
    const int a = row.at("action").get<int>();
    const auto& p = row.at("p");
    if (static_cast<int>(p.size()) != mdp.n_states) throw DataError("transition row arity");
    for (int s2 = 0; s2 < mdp.n_states; ++s2) mdp.p(s, a, s2) = p[s2].get<double>();
  }
  const auto& features = j.at("state_features");
  if (static_cast<int>(features.size()) != mdp.n_states) {
    throw DataError("state_features must list one vector per state");
  }
  const int K = static_cast<int>(features[0].size());
  mdp.state_features.resize(mdp.n_states, K);
  for (int s = 0; s < mdp.n_states; ++s) {
    mdp.state_features.row(s) = vec_from_json(features[s]).transpose();
  }
  mdp.validate();
  return mdp;
}

void write_generator_spec(const std::filesystem::path& path, const GeneratorSpec& spec) {
  json j{{"kind", "generator_spec"},
         {"n_states", spec.n_states},
         {"n_actions", spec.n_actions},
         {"K", spec.K},
         {"H", spec.horizon},
         {"N", spec.N},
         {"gamma", spec.gamma},
         {"theta_star", vec_to_json(spec.theta_star)},
         {"seed", spec.seed},
         {"transition_style", to_string(spec.transition_style)}};
  save_json(path, j);
}

GeneratorSpec read_generator_spec(const std::filesystem::path& path) {
  const json j = load_json(path);
  if (j.value("kind", "") != "generator_spec") {
    throw DataError("'" + path.string() + "' is not a generator spec");
  }
  GeneratorSpec spec;
  spec.n_states = j.at("n_states").get<int>();
  spec.n_actions = j.at("n_actions").get<int>();
  spec.K = j.at("K").get<int>();
  spec.horizon = j.at("H").get<int>();
  spec.N = j.at("N").get<std::int64_t>();
  spec.gamma = j.at("gamma").get<double>();
  spec.theta_star = vec_from_json(j.at("theta_star"));
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.transition_style = transition_style_from_string(j.at("transition_style").get<std::string>());
  spec.validate();
  return spec;
}

void write_oracle_report(const std::filesystem::path& path, const OracleReport& report,
                         const ArtifactMeta& meta) {
  json j{{"kind", "oracle_report"},
         {"meta", meta_to_json(meta)},
         {"theta_dual", vec_to_json(report.theta_dual)},
         {"kl_value", report.kl_value},
         {"g_value", report.g_value},
         {"duality_gap", report.duality_gap},
         {"tv_to_exponential_form", report.tv_to_exponential_form},
         {"upper_slack", vec_to_json(report.upper_slack)},
         {"lower_slack", vec_to_json(report.lower_slack)},
         {"pass", report.pass}};
  save_json(path, j);
}

void write_ttest_report(const std::filesystem::path& path, const WeightedTTestReport& report,
                        const ArtifactMeta& meta) {
  json comps = json::array();
  for (const auto& c : report.components) {
    comps.push_back(json{{"mean", c.mean},
                         {"variance", c.variance},
                         {"t", c.t_statistic},
                         {"p_two_sided", c.p_two_sided},
                         {"p_greater", c.p_greater},
                         {"p_less", c.p_less},
                         {"significant_10", c.significant_10},
                         {"significant_05", c.significant_05},
                         {"significant_01", c.significant_01}});
  }
  json j{{"kind", "ttest_report"},
         {"meta", meta_to_json(meta)},
         {"total_weight", report.total_weight},
         {"degrees_of_freedom", report.degrees_of_freedom},
         {"components", std::move(comps)}};
  save_json(path, j);
}

void write_regression_report(const std::filesystem::path& path, const RegressionReport& report,
                             const ArtifactMeta& meta) {
  json j{{"kind", "regression_report"},
         {"meta", meta_to_json(meta)},
         {"slope", report.slope},
         {"intercept", report.intercept},
         {"t", report.t_statistic},
         {"p_two_sided", report.p_two_sided},
         {"r_squared", report.r_squared},
         {"n", report.n}};
  save_json(path, j);
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  json j{{"kind", "run_manifest"},
         {"command", manifest.command},
         {"config_hash", manifest.config_hash},
         {"seed", manifest.seed},
         {"inputs", manifest.inputs},
         {"outputs", manifest.outputs},
         {"version", manifest.version.empty() ? kVersion : manifest.version},
         {"wall_ms", manifest.wall_ms}};
  save_json(path, j);
}

}  // namespace reirl
