#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairdiff/error.hpp"
#include "fairdiff/sde.hpp"

namespace fairdiff {

using Json = nlohmann::json;

/// Every tunable default in one place. `fairdiff report --write-defaults`
/// dumps this structure so a run directory documents its own settings.
struct Config {
  SdeRunConfig sde{};
  double lambda = 0.1;
  std::size_t min_bin_count = 5;
  double ball_radius = 0.01;
  double sweep_step = 0.1;
  double mean_tolerance = 1e-9;
  double ci_z = 2.576;
  double max_relative_ci = 0.1;
  double quadrature_slack = 2e-4;
  double quadrature_abs_tol = 1e-9;
  std::size_t lipschitz_probes = 10000;
  double epsilon = 0.05;
  int girsanov_pairs = 20;
  double tweedie_sigma = 0.8;
  int tweedie_trials = 50;
};

inline Json to_json(const Config& c) {
  Json j;
  j["sde"] = {{"horizon", c.sde.horizon},
              {"steps", c.sde.steps},
              {"paths", c.sde.paths},
              {"seed", c.sde.seed},
              {"threads", c.sde.threads},
              {"budget", c.sde.budget}};
  j["lambda"] = c.lambda;
  j["min_bin_count"] = c.min_bin_count;
  j["ball_radius"] = c.ball_radius;
  j["sweep_step"] = c.sweep_step;
  j["mean_tolerance"] = c.mean_tolerance;
  j["ci_z"] = c.ci_z;
  j["max_relative_ci"] = c.max_relative_ci;
  j["quadrature_slack"] = c.quadrature_slack;
  j["quadrature_abs_tol"] = c.quadrature_abs_tol;
  j["lipschitz_probes"] = c.lipschitz_probes;
  j["epsilon"] = c.epsilon;
  j["girsanov_pairs"] = c.girsanov_pairs;
  j["tweedie_sigma"] = c.tweedie_sigma;
  j["tweedie_trials"] = c.tweedie_trials;
  return j;
}

namespace detail {

template <class T>
void read_field(const Json& obj, const char* name, T& out, std::vector<std::string>& errors, const std::string& where) {
  if (!obj.contains(name)) return;
  try {
    out = obj.at(name).get<T>();
  } catch (const Json::exception&) {
    errors.push_back(where + name + ": wrong type");
  }
}

}  // namespace detail

/// Starts from the defaults and overrides whatever `j` sets. Unknown keys and
/// type errors are collected and reported together.
inline Config config_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  Config c;
  std::vector<std::string> errors;
  const Json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) errors.push_back("unknown config key '" + key + "'");
  }
  if (j.contains("sde")) {
    const auto& s = j.at("sde");
    if (!s.is_object()) {
      errors.push_back("sde: must be an object");
    } else {
      for (const auto& [key, value] : s.items()) {
        if (!defaults["sde"].contains(key)) errors.push_back("unknown config key 'sde." + key + "'");
      }
      detail::read_field(s, "horizon", c.sde.horizon, errors, "sde.");
      detail::read_field(s, "steps", c.sde.steps, errors, "sde.");
      detail::read_field(s, "paths", c.sde.paths, errors, "sde.");
      detail::read_field(s, "seed", c.sde.seed, errors, "sde.");
      detail::read_field(s, "threads", c.sde.threads, errors, "sde.");
      detail::read_field(s, "budget", c.sde.budget, errors, "sde.");
    }
  }
  detail::read_field(j, "lambda", c.lambda, errors, "");
  detail::read_field(j, "min_bin_count", c.min_bin_count, errors, "");
  detail::read_field(j, "ball_radius", c.ball_radius, errors, "");
  detail::read_field(j, "sweep_step", c.sweep_step, errors, "");
  detail::read_field(j, "mean_tolerance", c.mean_tolerance, errors, "");
  detail::read_field(j, "ci_z", c.ci_z, errors, "");
  detail::read_field(j, "max_relative_ci", c.max_relative_ci, errors, "");
  detail::read_field(j, "quadrature_slack", c.quadrature_slack, errors, "");
  detail::read_field(j, "quadrature_abs_tol", c.quadrature_abs_tol, errors, "");
  detail::read_field(j, "lipschitz_probes", c.lipschitz_probes, errors, "");
  detail::read_field(j, "epsilon", c.epsilon, errors, "");
  detail::read_field(j, "girsanov_pairs", c.girsanov_pairs, errors, "");
  detail::read_field(j, "tweedie_sigma", c.tweedie_sigma, errors, "");
  detail::read_field(j, "tweedie_trials", c.tweedie_trials, errors, "");
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InputError(msg);
  }
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline Config load_config(const std::string& path) {
  try {
    return config_from_json(read_json_file(path));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// 64-bit FNV-1a over the bytes of `s`, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the canonical dump (object keys sorted, no whitespace), so equal
/// configurations hash equally whatever their file layout.
inline std::string config_hash(const Config& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace fairdiff
