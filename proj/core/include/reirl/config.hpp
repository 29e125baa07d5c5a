#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace reirl {

/// Resolved run configuration. Every numeric field is range-checked on parse;
/// unknown keys are rejected. The stable hash covers the algorithm-relevant
/// keys only (not data paths), so all stages of one pipeline share a hash.
struct RunConfig {
  struct Data {
    std::string input;
    std::string workdir = "out";
  } data;

  struct Knn {
    int k = 50;
    int m = 0;  // 0 = ceil(K/2), resolved against the dataset
    double lambda = 1e-3;
    double eps = 0.05;
    std::optional<std::int64_t> start_period;
    bool debug_neighbors = false;
  } knn;

  struct Reirl {
    double alpha = 1e-3;
    int max_iters = 50000;
    double grad_tol = 1e-4;
    double delta = 0.05;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    int uniform_actions = 7;  // 5 or 7
    double theta_cap = 1e3;
    bool standard_hoeffding = false;
  } reirl;

  struct Oracle {
    std::int64_t cap = 1000000;
  } oracle;

  struct Horizon {
    int min = 1;
    int max = 1000000000;  // effectively unbounded
  } horizon;

  struct TTest {
    int h_min = 8;
    int h_max = 47;
  } ttest;

  /// Canonical "key = value" rendering of the fully resolved config, sorted
  /// by key. Doubles use round-trip precision.
  std::string canonical() const;

  /// FNV-1a over the canonical rendering minus data paths, as 16 hex digits.
  std::string stable_hash() const;

  void validate() const;
};

/// Parses a plain-text key-value config ("key = value", '#' comments, blank
/// lines). Absent keys keep their defaults. Unknown keys and out-of-range
/// values throw ConfigError naming the key.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

/// Applies one "section.key=value" assignment; used for CLI overrides.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace reirl
