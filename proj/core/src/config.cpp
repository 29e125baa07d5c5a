#include "reirl/config.hpp"

#include "reirl/errors.hpp"
#include "reirl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace reirl {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + value +
                      "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

void check_range(const std::string& key, bool ok, const std::string& allowed) {
  if (!ok) throw ConfigError("config key '" + key + "' out of range; allowed: " + allowed);
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
  if (key == "data.input") {
    config.data.input = value;
  } else if (key == "data.workdir") {
    config.data.workdir = value;
  } else if (key == "knn.k") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.knn.k = static_cast<int>(v);
  } else if (key == "knn.m") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 0, ">= 0 (0 = ceil(K/2))");
    config.knn.m = static_cast<int>(v);
  } else if (key == "knn.lambda") {
    const auto v = parse_double(key, value);
    check_range(key, v > 0.0, "> 0");
    config.knn.lambda = v;
  } else if (key == "knn.eps") {
    const auto v = parse_double(key, value);
    check_range(key, v > 0.0 && v < 1.0, "(0, 1)");
    config.knn.eps = v;
  } else if (key == "knn.start_period") {
    if (value == "auto") {
      config.knn.start_period.reset();
    } else {
      config.knn.start_period = parse_int(key, value);
    }
  } else if (key == "knn.debug_neighbors") {
    config.knn.debug_neighbors = parse_bool(key, value);
  } else if (key == "reirl.alpha") {
    const auto v = parse_double(key, value);
    check_range(key, v > 0.0, "> 0");
    config.reirl.alpha = v;
  } else if (key == "reirl.max_iters") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.reirl.max_iters = static_cast<int>(v);
  } else if (key == "reirl.grad_tol") {
    const auto v = parse_double(key, value);
    check_range(key, v >= 0.0, ">= 0");
    config.reirl.grad_tol = v;
  } else if (key == "reirl.delta") {
    const auto v = parse_double(key, value);
    check_range(key, v > 0.0 && v < 1.0, "(0, 1)");
    config.reirl.delta = v;
  } else if (key == "reirl.gamma") {
    const auto v = parse_double(key, value);
    check_range(key, v >= 0.0 && v <= 1.0, "[0, 1]");
    config.reirl.gamma = v;
  } else if (key == "reirl.seed") {
    config.reirl.seed = parse_uint(key, value);
  } else if (key == "reirl.uniform_actions") {
    const auto v = parse_int(key, value);
    check_range(key, v == 5 || v == 7, "5 or 7");
    config.reirl.uniform_actions = static_cast<int>(v);
  } else if (key == "reirl.theta_cap") {
    const auto v = parse_double(key, value);
    check_range(key, v > 0.0, "> 0");
    config.reirl.theta_cap = v;
  } else if (key == "reirl.standard_hoeffding") {
    config.reirl.standard_hoeffding = parse_bool(key, value);
  } else if (key == "oracle.cap") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.oracle.cap = v;
  } else if (key == "horizon.min") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.horizon.min = static_cast<int>(v);
  } else if (key == "horizon.max") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.horizon.max = static_cast<int>(v);
  } else if (key == "ttest.h_min") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.ttest.h_min = static_cast<int>(v);
  } else if (key == "ttest.h_max") {
    const auto v = parse_int(key, value);
    check_range(key, v >= 1, ">= 1");
    config.ttest.h_max = static_cast<int>(v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::validate() const {
  if (horizon.max < horizon.min) throw ConfigError("horizon.max must be >= horizon.min");
  if (ttest.h_max < ttest.h_min) throw ConfigError("ttest.h_max must be >= ttest.h_min");
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["data.input"] = data.input;
  kv["data.workdir"] = data.workdir;
  kv["knn.k"] = std::to_string(knn.k);
  kv["knn.m"] = std::to_string(knn.m);
  kv["knn.lambda"] = format_double(knn.lambda);
  kv["knn.eps"] = format_double(knn.eps);
  kv["knn.start_period"] =
      knn.start_period.has_value() ? std::to_string(*knn.start_period) : "auto";
  kv["knn.debug_neighbors"] = knn.debug_neighbors ? "true" : "false";
  kv["reirl.alpha"] = format_double(reirl.alpha);
  kv["reirl.max_iters"] = std::to_string(reirl.max_iters);
  kv["reirl.grad_tol"] = format_double(reirl.grad_tol);
  kv["reirl.delta"] = format_double(reirl.delta);
  kv["reirl.gamma"] = format_double(reirl.gamma);
  kv["reirl.seed"] = std::to_string(reirl.seed);
  kv["reirl.uniform_actions"] = std::to_string(reirl.uniform_actions);
  kv["reirl.theta_cap"] = format_double(reirl.theta_cap);
  kv["reirl.standard_hoeffding"] = reirl.standard_hoeffding ? "true" : "false";
  kv["oracle.cap"] = std::to_string(oracle.cap);
  kv["horizon.min"] = std::to_string(horizon.min);
  kv["horizon.max"] = std::to_string(horizon.max);
  kv["ttest.h_min"] = std::to_string(ttest.h_min);
  kv["ttest.h_max"] = std::to_string(ttest.h_max);

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

std::string RunConfig::stable_hash() const {
  // Data paths vary across pipeline stages and must not change the hash.
  std::istringstream lines(canonical());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("data.", 0) == 0) continue;
    h = fnv1a64(line, h);
    h = fnv1a64("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_number) +
                        " is not 'key = value': '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_entry(config, key, value);
  }
  config.validate();
  return config;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace reirl
