#pragma once

#include "reirl/estimator.hpp"
#include "reirl/knn_policy.hpp"
#include "reirl/oracle.hpp"
#include "reirl/simgen.hpp"
#include "reirl/stats.hpp"
#include "reirl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace reirl {

/// All pipeline artifacts are JSON records; each embeds the config hash that
/// produced it so downstream stages can refuse mixed-hash inputs.

struct ArtifactMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
};

void write_panel(const std::filesystem::path& path, const PanelDataset& panel,
                 const ArtifactMeta& meta);
PanelDataset read_panel(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

void write_trajectory_sets(const std::filesystem::path& path,
                           const std::vector<TrajectorySet>& sets,
                           const ArtifactMeta& meta, std::size_t dropped_rows = 0);
std::vector<TrajectorySet> read_trajectory_sets(const std::filesystem::path& path,
                                                ArtifactMeta* meta = nullptr);

void write_policy_table(const std::filesystem::path& path, const PolicyTable& table,
                        const ArtifactMeta& meta);
PolicyTable read_policy_table(const std::filesystem::path& path,
                              ArtifactMeta* meta = nullptr);

/// Final estimate record: weights plus everything needed to reproduce them.
struct ThetaRecord {
  Vec theta;
  int K = 0;
  int horizon = 0;
  std::int64_t n_trajectories = 0;
  double gamma = 1.0;
  double delta = 0.05;
  Vec eps;
  int iterations = 0;
  double final_grad_norm = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
  int uniform_actions = 7;
  bool standard_hoeffding = false;
  std::string config_hash;
};

void write_theta_record(const std::filesystem::path& path, const ThetaRecord& record);
ThetaRecord read_theta_record(const std::filesystem::path& path);

/// Horizon-group weights manifest for the t-test stage.
struct WeightsEntry {
  int horizon = 0;
  std::int64_t weight = 0;
  std::string theta_file;
};

void write_weights_manifest(const std::filesystem::path& path,
                            const std::vector<WeightsEntry>& entries,
                            const ArtifactMeta& meta);
std::vector<WeightsEntry> read_weights_manifest(const std::filesystem::path& path,
                                                ArtifactMeta* meta = nullptr);

void write_mdp(const std::filesystem::path& path, const FiniteMDP& mdp);
FiniteMDP read_mdp(const std::filesystem::path& path);

void write_generator_spec(const std::filesystem::path& path, const GeneratorSpec& spec);
GeneratorSpec read_generator_spec(const std::filesystem::path& path);

/// Verification report of the exact-oracle duality check.
struct OracleReport {
  Vec theta_dual;
  double kl_value = 0.0;
  double g_value = 0.0;
  Vec upper_slack;  // eps_k - h_k
  Vec lower_slack;  // eps_k + h_k
  double tv_to_exponential_form = 0.0;
  double duality_gap = 0.0;
  bool pass = false;
};

void write_oracle_report(const std::filesystem::path& path, const OracleReport& report,
                         const ArtifactMeta& meta);

void write_ttest_report(const std::filesystem::path& path, const WeightedTTestReport& report,
                        const ArtifactMeta& meta);
void write_regression_report(const std::filesystem::path& path, const RegressionReport& report,
                             const ArtifactMeta& meta);

/// Run manifest: inputs, outputs, config hash, timing. The only artifact
/// that carries wall-clock time.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version;
  double wall_ms = 0.0;
};

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace reirl
