#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "reirl/io.hpp"
#include "reirl/rng.hpp"
#include "reirl/simgen.hpp"
#include "testutil.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace reirl;
using namespace reirl::test;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("REIRL_CLI");
  REQUIRE_MESSAGE(env != nullptr, "REIRL_CLI must point at the reirl binary");
  return env;
}

int run(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("reirl_cli_" + std::to_string(SeedStream(::getpid(), "cli").next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("simulate, policy, estimate pipeline exits cleanly and writes records") {
  TempDir tmp;
  const auto spec = small_spec(404, 4, 7, 2, 3, TransitionStyle::DeterministicCycle,
                               vec({0.8, -0.4}));
  GeneratorSpec sized = spec;
  sized.N = 400;
  write_generator_spec(tmp.path / "spec.json", sized);

  const std::string cli = cli_path();
  const std::string out = (tmp.path / "run").string();
  CHECK(run(cli + " simulate --spec " + (tmp.path / "spec.json").string() + " --out " + out) ==
        0);
  CHECK(run(cli + " policy --in " + out + "/panel_discretized.json --out " + out) == 0);
  CHECK(run(cli + " estimate --trajectories " + out + "/trajectories.json --policy " + out +
            "/policy.json --out " + out) == 0);

  CHECK(fs::exists(out + "/theta_H3.json"));
  CHECK(fs::exists(out + "/weights.json"));
  CHECK(fs::exists(out + "/estimate_manifest.json"));
  const auto record = read_theta_record(out + "/theta_H3.json");
  CHECK(record.horizon == 3);
  CHECK(record.K == 2);
  CHECK(record.n_trajectories > 0);
}

TEST_CASE("estimate without a policy table is a prerequisite error (exit 3)") {
  TempDir tmp;
  const std::string cli = cli_path();
  CHECK(run(cli + " estimate --trajectories " + (tmp.path / "missing.json").string() +
            " --policy " + (tmp.path / "nope.json").string() + " --out " +
            (tmp.path / "o").string()) == 3);
}

TEST_CASE("config errors exit with code 2") {
  TempDir tmp;
  write_file(tmp.path / "bad.conf", "reirl.delta = 1.5\n");
  const std::string cli = cli_path();
  CHECK(run(cli + " --config " + (tmp.path / "bad.conf").string() + " simulate --spec x --out " +
            (tmp.path / "o").string()) == 2);

  write_file(tmp.path / "unknown.conf", "does.not.exist = 1\n");
  CHECK(run(cli + " --config " + (tmp.path / "unknown.conf").string() +
            " simulate --spec x --out " + (tmp.path / "o").string()) == 2);
}

TEST_CASE("oracle-check verifies the bundled 2-state MDP") {
  const char* data_dir = std::getenv("REIRL_DATA_DIR");
  REQUIRE_MESSAGE(data_dir != nullptr, "REIRL_DATA_DIR must point at the data directory");
  TempDir tmp;
  const std::string cli = cli_path();
  CHECK(run(cli + " oracle-check --mdp " + std::string(data_dir) +
            "/mdp_2state.json --horizon 4 --theta-star 0.6 -0.3 --out " +
            (tmp.path / "o").string()) == 0);
  CHECK(fs::exists(tmp.path / "o" / "oracle_report.json"));
}

TEST_CASE("mixed config hashes are refused unless forced") {
  TempDir tmp;
  GeneratorSpec spec = small_spec(405, 3, 7, 2, 2, TransitionStyle::DeterministicCycle,
                                  vec({0.5, 0.5}));
  spec.N = 50;
  write_generator_spec(tmp.path / "spec.json", spec);
  const std::string cli = cli_path();
  const std::string out = (tmp.path / "run").string();
  REQUIRE(run(cli + " simulate --spec " + (tmp.path / "spec.json").string() + " --out " + out) ==
          0);
  // A different knn.k changes the hash: policy over simulate's artifacts
  // must fail without --force and pass with it.
  CHECK(run(cli + " --set knn.k=5 policy --in " + out + "/panel_discretized.json --out " + out +
            "_b") == 2);
  CHECK(run(cli + " --force --set knn.k=5 policy --in " + out + "/panel_discretized.json" +
            " --out " + out + "_b") == 0);
}

TEST_CASE("ttest and regress commands produce reports") {
  TempDir tmp;
  // Hand-built records across horizons, weights manifest pointing at them.
  for (int h : {8, 9, 11}) {
    ThetaRecord record;
    record.theta = vec({0.3 + 0.01 * h, -0.1});
    record.K = 2;
    record.horizon = h;
    record.n_trajectories = 10 * h;
    record.eps = vec({0.0, 0.0});
    record.config_hash = "feedfacefeedface";
    write_theta_record(tmp.path / ("theta_H" + std::to_string(h) + ".json"), record);
  }
  std::vector<WeightsEntry> weights{{8, 80, "theta_H8.json"},
                                    {9, 90, "theta_H9.json"},
                                    {11, 110, "theta_H11.json"}};
  write_weights_manifest(tmp.path / "weights.json", weights, {});

  const std::string cli = cli_path();
  CHECK(run(cli + " ttest --weights " + (tmp.path / "weights.json").string() + " --out " +
            (tmp.path / "t").string()) == 0);
  CHECK(fs::exists(tmp.path / "t" / "ttest_report.json"));

  // Range excluding every record is a data error.
  CHECK(run(cli + " --set ttest.h_min=40 --set ttest.h_max=47 ttest --weights " +
            (tmp.path / "weights.json").string() + " --out " + (tmp.path / "t2").string()) == 3);

  // Regression needs a panel; reuse a tiny simulated one.
  GeneratorSpec spec = small_spec(406, 4, 7, 2, 2, TransitionStyle::RandomDirichlet,
                                  vec({0.9, -0.9}));
  spec.N = 300;
  write_generator_spec(tmp.path / "spec.json", spec);
  const std::string out = (tmp.path / "run").string();
  REQUIRE(run(cli + " simulate --spec " + (tmp.path / "spec.json").string() + " --out " + out) ==
          0);
  ThetaRecord for_regress;
  for_regress.theta = vec({0.5, -0.5});
  for_regress.K = 2;
  for_regress.horizon = 2;
  for_regress.eps = vec({0.0, 0.0});
  write_theta_record(tmp.path / "theta_reg.json", for_regress);
  CHECK(run(cli + " regress --panel " + out + "/panel_discretized.json --theta " +
            (tmp.path / "theta_reg.json").string() + " --out " + (tmp.path / "r").string()) ==
        0);
  CHECK(fs::exists(tmp.path / "r" / "regression_report.json"));
}

TEST_CASE("the delimited-text path runs ingest through estimate") {
  TempDir tmp;
  SeedStream stream(909, "csv");
  std::ostringstream csv;
  csv << "entity,period,f1,f2,action_raw\n";
  for (const std::string entity : {"aaa", "bbb", "ccc", "ddd", "eee", "fff"}) {
    for (int t = 1; t <= 8; ++t) {
      csv << entity << "," << t << ",";
      if (stream.next_u64() % 11 == 0) {
        csv << "";  // missing feature cell
      } else {
        csv << stream.next_normal();
      }
      csv << "," << stream.next_normal() << "," << (stream.next_normal() * 0.01) << "\n";
    }
  }
  write_file(tmp.path / "panel.csv", csv.str());

  const std::string cli = cli_path();
  const std::string out = (tmp.path / "work").string();
  const std::string overrides = " --set knn.k=3 --set horizon.min=1 ";
  CHECK(run(cli + overrides + "ingest --in " + (tmp.path / "panel.csv").string() + " --out " +
            out) == 0);
  CHECK(run(cli + overrides + "discretize --in " + out + "/panel.json --out " + out) == 0);
  CHECK(run(cli + overrides + "policy --in " + out + "/panel_discretized.json --out " + out) ==
        0);
  CHECK(run(cli + overrides + "estimate --panel " + out + "/panel_discretized.json --policy " +
            out + "/policy.json --out " + out) == 0);
  CHECK(fs::exists(out + "/theta_H7.json"));  // 8 contiguous periods -> H = 7
  const auto record = read_theta_record(out + "/theta_H7.json");
  CHECK(record.K == 2);
  CHECK(record.horizon == 7);
}

TEST_CASE("identical configs and seeds give byte-identical estimate records") {
  TempDir tmp;
  GeneratorSpec spec = small_spec(407, 4, 7, 2, 3, TransitionStyle::DeterministicCycle,
                                  vec({0.7, -0.2}));
  spec.N = 200;
  write_generator_spec(tmp.path / "spec.json", spec);
  const std::string cli = cli_path();

  for (const std::string run_dir : {"a", "b"}) {
    const std::string out = (tmp.path / run_dir).string();
    REQUIRE(run(cli + " simulate --spec " + (tmp.path / "spec.json").string() + " --out " +
                out) == 0);
    REQUIRE(run(cli + " policy --in " + out + "/panel_discretized.json --out " + out) == 0);
    REQUIRE(run(cli + " estimate --trajectories " + out + "/trajectories.json --policy " + out +
                "/policy.json --out " + out) == 0);
  }
  CHECK(read_file(tmp.path / "a" / "theta_H3.json") ==
        read_file(tmp.path / "b" / "theta_H3.json"));
  CHECK(read_file(tmp.path / "a" / "policy.json") == read_file(tmp.path / "b" / "policy.json"));
}
