// Command-line front end for the pipeline:
//   ingest -> discretize -> policy -> estimate -> ttest / regress
// plus `simulate` (synthetic ground truth) and `oracle-check` (exact
// verification on a small MDP). One config file governs every stage; all
// artifacts embed the resolved config hash and stages refuse mixed-hash
// inputs unless --force is given.

#include "reirl/config.hpp"
#include "reirl/errors.hpp"
#include "reirl/estimator.hpp"
#include "reirl/io.hpp"
#include "reirl/knn_policy.hpp"
#include "reirl/oracle.hpp"
#include "reirl/panel.hpp"
#include "reirl/simgen.hpp"
#include "reirl/stats.hpp"
#include "reirl/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace reirl;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  bool force = false;
};

RunConfig resolve_config(const GlobalArgs& args) {
  RunConfig config;
  std::string path = args.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("REIRL_CONFIG")) path = env;
  }
  if (!path.empty()) config = parse_config_file(path);
  for (const auto& entry : args.overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + entry + "'");
    }
    std::string key = entry.substr(0, eq);
    std::string value = entry.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    apply_config_entry(config, key, value);
  }
  config.validate();
  return config;
}

void check_hash(const ArtifactMeta& meta, const RunConfig& config, bool force,
                const std::string& what) {
  if (meta.config_hash.empty() || meta.config_hash == config.stable_hash()) return;
  if (force) {
    std::cerr << "warning: " << what << " was produced under config hash " << meta.config_hash
              << ", current is " << config.stable_hash() << " (continuing due to --force)\n";
    return;
  }
  throw ConfigError(what + " was produced under config hash " + meta.config_hash +
                    " but the current config hashes to " + config.stable_hash() +
                    "; rerun the earlier stage or pass --force");
}

void require_artifact(const std::string& path, const std::string& stage) {
  if (path.empty() || !fs::exists(path)) {
    throw DataError("missing prerequisite artifact '" + path + "'; run the '" + stage +
                    "' stage first");
  }
}

class ManifestScope {
public:
  ManifestScope(std::string command, const RunConfig& config, std::uint64_t seed, fs::path out_dir)
      : start_(std::chrono::steady_clock::now()), out_dir_(std::move(out_dir)) {
    manifest_.command = std::move(command);
    manifest_.config_hash = config.stable_hash();
    manifest_.seed = seed;
    manifest_.version = kVersion;
  }
  void input(const std::string& path) { manifest_.inputs.push_back(path); }
  void output(const std::string& path) { manifest_.outputs.push_back(path); }
  void commit() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    manifest_.wall_ms = std::chrono::duration<double, std::milli>(elapsed).count();
    write_run_manifest(out_dir_ / (manifest_.command + "_manifest.json"), manifest_);
  }

private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
  fs::path out_dir_;
};

int cmd_ingest(const RunConfig& config, const std::string& input, const std::string& out_dir) {
  require_artifact(input, "data preparation");
  ManifestScope manifest("ingest", config, config.reirl.seed, out_dir);
  manifest.input(input);

  std::ifstream in(input);
  if (!in) throw DataError("cannot open '" + input + "'");
  PanelDataset panel = load_panel(in);
  panel.standardization = compute_standardization(panel);

  const fs::path out = fs::path(out_dir) / "panel.json";
  write_panel(out, panel, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();
  std::cout << "ingested " << panel.rows.size() << " rows, K=" << panel.K << " -> " << out
            << "\n";
  return 0;
}

int cmd_discretize(const RunConfig& config, const std::string& input, const std::string& out_dir,
                   bool force) {
  require_artifact(input, "ingest");
  ManifestScope manifest("discretize", config, config.reirl.seed, out_dir);
  manifest.input(input);

  ArtifactMeta meta;
  PanelDataset panel = read_panel(input, &meta);
  check_hash(meta, config, force, "panel");
  const auto report = discretize_actions(panel);

  const fs::path out = fs::path(out_dir) / "panel_discretized.json";
  write_panel(out, panel, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();
  std::cout << "discretized " << panel.rows.size() << " rows over " << report.cuts.size()
            << " periods -> " << out << "\n";
  return 0;
}

int cmd_policy(const RunConfig& config, const std::string& input, const std::string& out_dir,
               bool force) {
  require_artifact(input, "discretize");
  ManifestScope manifest("policy", config, config.reirl.seed, out_dir);
  manifest.input(input);

  ArtifactMeta meta;
  PanelDataset panel = read_panel(input, &meta);
  check_hash(meta, config, force, "panel");

  KnnConfig knn;
  knn.k = config.knn.k;
  knn.min_overlap = config.knn.m;
  knn.lambda = config.knn.lambda;
  knn.smoothing_eps = config.knn.eps;
  knn.start_period = config.knn.start_period;
  knn.debug_neighbors = config.knn.debug_neighbors;
  const PolicyTable table = rolling_estimate(panel, knn);

  const fs::path out = fs::path(out_dir) / "policy.json";
  write_policy_table(out, table, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();
  std::cout << "estimated " << table.entries.size() << " policy entries (" << table.excluded.size()
            << " excluded, " << table.skipped_periods.size() << " skipped periods) -> " << out
            << "\n";
  return 0;
}

int cmd_estimate(const RunConfig& config, const std::string& trajectories_path,
                 const std::string& panel_path, const std::string& policy_path,
                 const std::string& out_dir, bool force) {
  require_artifact(policy_path, "policy");
  ManifestScope manifest("estimate", config, config.reirl.seed, out_dir);
  manifest.input(policy_path);

  ArtifactMeta policy_meta;
  const PolicyTable table = read_policy_table(policy_path, &policy_meta);
  check_hash(policy_meta, config, force, "policy table");

  std::vector<TrajectorySet> sets;
  if (!trajectories_path.empty()) {
    require_artifact(trajectories_path, "simulate");
    manifest.input(trajectories_path);
    ArtifactMeta meta;
    sets = read_trajectory_sets(trajectories_path, &meta);
    check_hash(meta, config, force, "trajectory sets");
  } else {
    require_artifact(panel_path, "discretize");
    manifest.input(panel_path);
    ArtifactMeta meta;
    const PanelDataset panel = read_panel(panel_path, &meta);
    check_hash(meta, config, force, "panel");
    auto built = build_trajectories(panel, config.reirl.gamma);
    if (built.dropped_rows > 0) {
      std::cerr << "note: " << built.dropped_rows << " rows were in runs too short to use\n";
    }
    sets = std::move(built.sets);
  }

  AscentConfig ascent;
  ascent.alpha = config.reirl.alpha;
  ascent.max_iters = config.reirl.max_iters;
  ascent.grad_tol = config.reirl.grad_tol;
  ascent.seed = config.reirl.seed;
  ascent.uniform_action_count = config.reirl.uniform_actions;
  ascent.theta_cap = config.reirl.theta_cap;

  std::vector<WeightsEntry> weights;
  int estimated = 0;
  for (const auto& set : sets) {
    if (set.horizon < config.horizon.min || set.horizon > config.horizon.max) continue;
    const AscentTrace trace = ascend(set, table, ascent, config.reirl.delta);

    ThetaRecord record;
    record.theta = trace.final_theta.weights;
    record.K = set.K;
    record.horizon = set.horizon;
    record.n_trajectories = trace.included_trajectories;
    record.gamma = set.gamma;
    record.delta = config.reirl.delta;
    record.eps = trace.tolerances.eps;
    record.iterations = trace.final_theta.iteration;
    record.final_grad_norm = trace.iterates.back().grad_norm;
    record.converged = trace.converged;
    record.seed = config.reirl.seed;
    record.uniform_actions = config.reirl.uniform_actions;
    record.standard_hoeffding = config.reirl.standard_hoeffding;
    record.config_hash = config.stable_hash();

    const std::string name = "theta_H" + std::to_string(set.horizon) + ".json";
    const fs::path out = fs::path(out_dir) / name;
    write_theta_record(out, record);
    manifest.output(out.string());
    weights.push_back({set.horizon, trace.included_trajectories, name});
    ++estimated;
    std::cout << "H=" << set.horizon << ": N=" << trace.included_trajectories
              << (trace.excluded_trajectories > 0
                      ? " (+" + std::to_string(trace.excluded_trajectories) + " dropped)"
                      : "")
              << " iters=" << record.iterations << " |grad|=" << record.final_grad_norm
              << (record.converged ? "" : " [not converged]") << " -> " << out << "\n";
  }
  if (estimated == 0) {
    throw DataError("no trajectory group falls inside horizon range [" +
                    std::to_string(config.horizon.min) + ", " +
                    std::to_string(config.horizon.max) + "]");
  }

  const fs::path weights_path = fs::path(out_dir) / "weights.json";
  write_weights_manifest(weights_path, weights, {config.stable_hash(), config.reirl.seed});
  manifest.output(weights_path.string());
  manifest.commit();
  return 0;
}

int cmd_simulate(const RunConfig& config, const std::string& spec_path,
                 const std::string& out_dir) {
  require_artifact(spec_path, "generator-spec authoring");
  ManifestScope manifest("simulate", config, config.reirl.seed, out_dir);
  manifest.input(spec_path);

  const GeneratorSpec spec = read_generator_spec(spec_path);
  const FiniteMDP mdp = make_mdp(spec);
  const ExpertSample sample = sample_expert_set(mdp, spec.theta_star, spec.N, spec.horizon,
                                                spec.gamma, spec.seed, config.oracle.cap);

  const ArtifactMeta meta{config.stable_hash(), spec.seed};
  const fs::path traj_path = fs::path(out_dir) / "trajectories.json";
  write_trajectory_sets(traj_path, {sample.set}, meta);
  const fs::path policy_path = fs::path(out_dir) / "policy_exact.json";
  write_policy_table(policy_path, sample.exact_policy, meta);
  const fs::path panel_path = fs::path(out_dir) / "panel_discretized.json";
  write_panel(panel_path, expert_sample_to_panel(sample, mdp), meta);
  const fs::path mdp_path = fs::path(out_dir) / "mdp.json";
  write_mdp(mdp_path, mdp);

  for (const auto& p : {traj_path, policy_path, panel_path, mdp_path}) {
    manifest.output(p.string());
  }
  manifest.commit();
  std::cout << "simulated N=" << spec.N << " trajectories (H=" << spec.horizon << ", |T|="
            << sample.space.size() << ") -> " << out_dir << "\n";
  return 0;
}

int cmd_oracle_check(const RunConfig& config, const std::string& mdp_path, int horizon,
                     double gamma, const std::vector<double>& theta_star_raw, std::int64_t N,
                     const std::string& out_dir) {
  require_artifact(mdp_path, "MDP-spec authoring");
  ManifestScope manifest("oracle-check", config, config.reirl.seed, out_dir);
  manifest.input(mdp_path);

  const FiniteMDP mdp = read_mdp(mdp_path);
  Vec theta_star = Vec::Zero(mdp.K());
  if (!theta_star_raw.empty()) {
    if (static_cast<int>(theta_star_raw.size()) != mdp.K()) {
      throw ConfigError("--theta-star needs " + std::to_string(mdp.K()) + " entries");
    }
    for (int k = 0; k < mdp.K(); ++k) theta_star[k] = theta_star_raw[k];
  }

  const EnumeratedSpace space = enumerate_trajectories(mdp, horizon, gamma, config.oracle.cap);
  const Vec law = trajectory_distribution(theta_star, space);
  const Vec shat = space.counts.transpose() * law;
  const ToleranceVector eps = epsilon_bounds(N, config.reirl.delta, gamma, horizon,
                                             mdp_feature_bounds(mdp, gamma, horizon),
                                             config.reirl.standard_hoeffding);

  const PrimalSolution sol = solve_primal(space, shat, eps);
  const Vec exp_form = trajectory_distribution(sol.theta, space);

  OracleReport report;
  report.theta_dual = sol.theta;
  report.kl_value = sol.kl_value;
  report.g_value = sol.g_value;
  report.duality_gap = std::abs(sol.kl_value - sol.g_value);
  report.tv_to_exponential_form = 0.5 * (sol.p - exp_form).cwiseAbs().sum();
  report.upper_slack = eps.eps - sol.residual;
  report.lower_slack = eps.eps + sol.residual;
  report.pass = report.duality_gap <= 1e-8 && report.tv_to_exponential_form <= 1e-8 &&
                report.upper_slack.minCoeff() >= -1e-9 && report.lower_slack.minCoeff() >= -1e-9;

  const fs::path out = fs::path(out_dir) / "oracle_report.json";
  write_oracle_report(out, report, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();

  std::cout << "|T|=" << space.size() << " KL=" << report.kl_value << " g=" << report.g_value
            << " gap=" << report.duality_gap << " TV=" << report.tv_to_exponential_form
            << (report.pass ? " [ok]" : " [FAIL]") << " -> " << out << "\n";
  if (!report.pass) throw NumericalError("oracle verification failed; see " + out.string());
  return 0;
}

int cmd_ttest(const RunConfig& config, const std::string& weights_path,
              const std::string& out_dir, bool force) {
  require_artifact(weights_path, "estimate");
  ManifestScope manifest("ttest", config, config.reirl.seed, out_dir);
  manifest.input(weights_path);

  ArtifactMeta meta;
  const auto groups = read_weights_manifest(weights_path, &meta);
  check_hash(meta, config, force, "weights manifest");

  const fs::path base = fs::path(weights_path).parent_path();
  ThetaPanel panel;
  for (const auto& group : groups) {
    if (group.horizon < config.ttest.h_min || group.horizon > config.ttest.h_max) continue;
    const ThetaRecord record = read_theta_record(base / group.theta_file);
    panel.rows.push_back({group.horizon, record.theta, group.weight});
  }
  if (panel.rows.empty()) {
    throw DataError("no horizon group inside ttest range [" + std::to_string(config.ttest.h_min) +
                    ", " + std::to_string(config.ttest.h_max) + "]");
  }
  const WeightedTTestReport report = weighted_ttest(panel);

  const fs::path out = fs::path(out_dir) / "ttest_report.json";
  write_ttest_report(out, report, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();

  std::printf("%-4s %12s %12s %12s %12s %6s\n", "k", "mean", "t", "p(2-sided)", "p(mean>0)",
              "sig5%");
  for (std::size_t k = 0; k < report.components.size(); ++k) {
    const auto& c = report.components[k];
    std::printf("%-4zu %12.6f %12.4f %12.4g %12.4g %6s\n", k, c.mean, c.t_statistic,
                c.p_two_sided, c.p_greater, c.significant_05 ? "yes" : "no");
  }
  std::printf("groups=%zu  total weight=%lld  df=%.0f -> %s\n", panel.rows.size(),
              static_cast<long long>(report.total_weight), report.degrees_of_freedom,
              out.c_str());
  return 0;
}

int cmd_regress(const RunConfig& config, const std::string& panel_path,
                const std::string& theta_path, const std::string& out_dir, bool force) {
  require_artifact(panel_path, "discretize");
  require_artifact(theta_path, "estimate");
  ManifestScope manifest("regress", config, config.reirl.seed, out_dir);
  manifest.input(panel_path);
  manifest.input(theta_path);

  ArtifactMeta meta;
  const PanelDataset panel = read_panel(panel_path, &meta);
  check_hash(meta, config, force, "panel");
  const ThetaRecord record = read_theta_record(theta_path);
  if (record.K != panel.K) {
    throw DataError("theta record has K=" + std::to_string(record.K) + ", panel has K=" +
                    std::to_string(panel.K));
  }

  std::vector<double> rewards, changes;
  rewards.reserve(panel.rows.size());
  changes.reserve(panel.rows.size());
  for (const auto& row : panel.rows) {
    rewards.push_back(reward(record.theta, panel.standardization.apply(row.features)));
    changes.push_back(row.raw_action);
  }
  const RegressionReport report = reward_regression(rewards, changes);

  const fs::path out = fs::path(out_dir) / "regression_report.json";
  write_regression_report(out, report, {config.stable_hash(), config.reirl.seed});
  manifest.output(out.string());
  manifest.commit();

  std::printf("slope=%.6f  intercept=%.6f  t=%.4f  p=%.4g  R2=%.4f  n=%lld -> %s\n",
              report.slope, report.intercept, report.t_statistic, report.p_two_sided,
              report.r_squared, static_cast<long long>(report.n), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior-based reward-weight estimation pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path,
                 "Config file (default: $REIRL_CONFIG if set, else built-in defaults)");
  app.add_option("--set", global.overrides, "Override a config entry, key=value")
      ->take_all();
  app.add_flag("--force", global.force, "Allow mixed config hashes across stages");

  std::string input, out_dir, policy_path, trajectories_path, panel_path, theta_path;
  std::string spec_path, mdp_path, weights_path;
  int horizon = 3;
  double gamma_flag = -1.0;
  std::vector<double> theta_star;
  std::int64_t n_flag = 1000;

  auto* ingest = app.add_subcommand("ingest", "Parse a delimited-text panel");
  ingest->add_option("--in", input, "Input CSV")->required();
  ingest->add_option("--out", out_dir, "Output directory");

  auto* discretize = app.add_subcommand("discretize", "Assign quantile action labels");
  discretize->add_option("--in", input, "panel.json from ingest")->required();
  discretize->add_option("--out", out_dir, "Output directory");

  auto* policy = app.add_subcommand("policy", "Rolling KNN estimate of the behavior policy");
  policy->add_option("--in", input, "panel_discretized.json")->required();
  policy->add_option("--out", out_dir, "Output directory");

  auto* estimate = app.add_subcommand("estimate", "Recover reward weights per horizon group");
  estimate->add_option("--trajectories", trajectories_path, "trajectories.json (synthetic path)");
  estimate->add_option("--panel", panel_path, "panel_discretized.json (builds trajectories)");
  estimate->add_option("--policy", policy_path, "policy.json")->required();
  estimate->add_option("--out", out_dir, "Output directory");
  estimate->add_option("--alpha", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.alpha=" + v[0]);
    return true;
  }, "Step size");
  estimate->add_option("--max-iters", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.max_iters=" + v[0]);
    return true;
  }, "Iteration cap");
  estimate->add_option("--grad-tol", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.grad_tol=" + v[0]);
    return true;
  }, "Gradient sup-norm stopping tolerance");
  estimate->add_option("--delta", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.delta=" + v[0]);
    return true;
  }, "Concentration level for the tolerances");
  estimate->add_option("--gamma", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.gamma=" + v[0]);
    return true;
  }, "Discount factor");
  estimate->add_option("--seed", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.seed=" + v[0]);
    return true;
  }, "Root seed recorded in outputs");
  estimate->add_option("--uniform-actions", [&global](const std::vector<std::string>& v) {
    global.overrides.push_back("reirl.uniform_actions=" + v[0]);
    return true;
  }, "Action count of the uniform base policy (5 or 7)");

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic expert data");
  simulate->add_option("--spec", spec_path, "Generator spec JSON")->required();
  simulate->add_option("--out", out_dir, "Output directory");

  auto* oracle = app.add_subcommand("oracle-check", "Exact duality verification on a small MDP");
  oracle->add_option("--mdp", mdp_path, "MDP spec JSON")->required();
  oracle->add_option("--horizon", horizon, "Enumeration horizon");
  oracle->add_option("--gamma", gamma_flag, "Discount (default: config reirl.gamma)");
  oracle->add_option("--theta-star", theta_star, "Target weights defining shat")->expected(-1);
  oracle->add_option("--n", n_flag, "Sample size the tolerances assume");
  oracle->add_option("--out", out_dir, "Output directory");

  auto* ttest = app.add_subcommand("ttest", "Weighted t-test of weights across horizon groups");
  ttest->add_option("--weights", weights_path, "weights.json from estimate")->required();
  ttest->add_option("--out", out_dir, "Output directory");

  auto* regress = app.add_subcommand("regress", "Regress holdings changes on reward values");
  regress->add_option("--panel", panel_path, "panel_discretized.json")->required();
  regress->add_option("--theta", theta_path, "theta record")->required();
  regress->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = resolve_config(global);
    // Paths fall back to the config's data section.
    if (input.empty()) input = config.data.input;
    if (out_dir.empty()) out_dir = config.data.workdir;
    if (ingest->parsed()) return cmd_ingest(config, input, out_dir);
    if (discretize->parsed()) return cmd_discretize(config, input, out_dir, global.force);
    if (policy->parsed()) return cmd_policy(config, input, out_dir, global.force);
    if (estimate->parsed()) {
      if (trajectories_path.empty() && panel_path.empty()) {
        throw ConfigError("estimate needs --trajectories or --panel");
      }
      return cmd_estimate(config, trajectories_path, panel_path, policy_path, out_dir,
                          global.force);
    }
    if (simulate->parsed()) return cmd_simulate(config, spec_path, out_dir);
    if (oracle->parsed()) {
      const double gamma = gamma_flag >= 0.0 ? gamma_flag : config.reirl.gamma;
      return cmd_oracle_check(config, mdp_path, horizon, gamma, theta_star, n_flag, out_dir);
    }
    if (ttest->parsed()) return cmd_ttest(config, weights_path, out_dir, global.force);
    if (regress->parsed()) return cmd_regress(config, panel_path, theta_path, out_dir,
                                              global.force);
    throw ConfigError("no command given");
  } catch (const Error& e) {
    nlohmann::json record{{"error", true},
                          {"exit_code", static_cast<int>(e.code())},
                          {"message", e.what()}};
    std::cerr << record.dump() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    nlohmann::json record{{"error", true},
                          {"exit_code", static_cast<int>(ExitCode::Numerical)},
                          {"message", e.what()}};
    std::cerr << record.dump() << "\n";
    return static_cast<int>(ExitCode::Numerical);
  }
}
