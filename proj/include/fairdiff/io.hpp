#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fairdiff/audit.hpp"
#include "fairdiff/conditional_model.hpp"
#include "fairdiff/config.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"

namespace fairdiff {

inline std::string resolve_relative(const std::string& base_file, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_file).parent_path() / p).lexically_normal().string();
}

namespace detail {

// Reads `key` of `obj` as T, recording a message instead of throwing so that
// a whole document can be checked in one pass.
template <class T>
std::optional<T> take(const Json& obj, const std::string& key, const std::string& where,
                      std::vector<std::string>& errors) {
  if (!obj.is_object() || !obj.contains(key)) {
    errors.push_back(where + ": missing '" + key + "'");
    return std::nullopt;
  }
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    errors.push_back(where + ": '" + key + "' has the wrong type");
    return std::nullopt;
  }
}

inline void raise_all(const std::vector<std::string>& errors, const std::string& what) {
  if (errors.empty()) return;
  std::string msg = what + " has " + std::to_string(errors.size()) + " problem(s):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw InputError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model file
//
// {
//   "prompt_dim": 2,
//   "components": [ {"attribute": "male", "mean": [-4], "variance": [0.25]}, ... ],
//   "A": [[6, 0], [0, 6]],
//   "c": [0, 0],
//   "prompt_store": "prompts.store",                 (optional)
//   "base": "doctor", "attributes": ["male", "female"], "v": [0.5, 0.5]   (optional)
// }

struct ModelSpec {
  ConditionalMixtureModel model;
  std::optional<std::string> prompt_store;
  std::optional<std::string> base;
  std::vector<std::string> attributes;
  std::vector<double> v;
};

inline ModelSpec parse_model_json(const Json& j, const std::string& source = "model") {
  std::vector<std::string> errors;
  if (!j.is_object()) throw InputError(source + ": model must be a JSON object");
  std::vector<ComponentShape> shapes;
  if (auto comps = detail::take<std::vector<Json>>(j, "components", source, errors)) {
    for (std::size_t i = 0; i < comps->size(); ++i) {
      const std::string where = source + ": components[" + std::to_string(i) + "]";
      auto attr = detail::take<std::string>((*comps)[i], "attribute", where, errors);
      auto mean = detail::take<std::vector<double>>((*comps)[i], "mean", where, errors);
      auto var = detail::take<std::vector<double>>((*comps)[i], "variance", where, errors);
      if (attr && mean && var) shapes.push_back({*attr, *mean, *var});
    }
  }
  auto a = detail::take<std::vector<std::vector<double>>>(j, "A", source, errors);
  auto c = detail::take<std::vector<double>>(j, "c", source, errors);
  auto m = detail::take<std::size_t>(j, "prompt_dim", source, errors);
  if (a && m) {
    for (std::size_t i = 0; i < a->size(); ++i) {
      if ((*a)[i].size() != *m) {
        errors.push_back(source + ": A row " + std::to_string(i) + " has length " + std::to_string((*a)[i].size()) +
                         ", prompt_dim is " + std::to_string(*m));
      }
    }
  }
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> known{"prompt_dim", "components", "A", "c", "prompt_store",
                                                "base", "attributes", "v"};
    if (std::find(known.begin(), known.end(), key) == known.end()) errors.push_back(source + ": unknown key '" + key + "'");
  }
  ModelSpec spec{ConditionalMixtureModel({{"_", {0.0}, {1.0}}}, {{0.0}}, {0.0}), {}, {}, {}, {}};
  if (j.contains("prompt_store")) {
    if (auto s = detail::take<std::string>(j, "prompt_store", source, errors)) spec.prompt_store = *s;
  }
  if (j.contains("base")) {
    if (auto s = detail::take<std::string>(j, "base", source, errors)) spec.base = *s;
  }
  if (j.contains("attributes")) {
    if (auto s = detail::take<std::vector<std::string>>(j, "attributes", source, errors)) spec.attributes = *s;
  }
  if (j.contains("v")) {
    if (auto s = detail::take<std::vector<double>>(j, "v", source, errors)) spec.v = *s;
  }
  detail::raise_all(errors, source);
  try {
    spec.model = ConditionalMixtureModel(std::move(shapes), std::move(*a), std::move(*c));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return spec;
}

inline Json model_to_json(const ConditionalMixtureModel& model) {
  Json j;
  j["prompt_dim"] = model.prompt_dimension();
  j["components"] = Json::array();
  for (const auto& s : model.shapes()) {
    j["components"].push_back({{"attribute", s.attribute}, {"mean", s.mean}, {"variance", s.variance}});
  }
  j["A"] = model.weight_matrix();
  j["c"] = model.weight_offset();
  return j;
}

inline ModelSpec load_model(const std::string& path) {
  auto spec = parse_model_json(read_json_file(path), path);
  if (spec.prompt_store) spec.prompt_store = resolve_relative(path, *spec.prompt_store);
  return spec;
}

// ---------------------------------------------------------------------------
// Audit input
//
// { "base": str, "prompt_store": path, "image_store": path, "alpha": num,
//   "subsets": [ { "attribute": str,
//                  "images": [ { "id": str, "key": str, "true_score": num } ] } ] }

struct AuditInput {
  AuditCollection collection;
  EmbeddingStore prompts{StoreKind::kPrompt, 1, false};
  EmbeddingStore images{StoreKind::kImage, 1, false};
  std::string prompt_store_path;
  std::string image_store_path;
};

/// Validates the whole document and reports every problem, not just the first.
inline AuditInput load_audit_input(const std::string& path) {
  const Json j = read_json_file(path);
  std::vector<std::string> errors;
  if (!j.is_object()) throw InputError(path + ": audit input must be a JSON object");
  auto base = detail::take<std::string>(j, "base", path, errors);
  auto pstore = detail::take<std::string>(j, "prompt_store", path, errors);
  auto istore = detail::take<std::string>(j, "image_store", path, errors);
  auto alpha = detail::take<double>(j, "alpha", path, errors);
  auto subsets = detail::take<std::vector<Json>>(j, "subsets", path, errors);
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) errors.push_back(path + ": alpha must lie in [0, 1]");
  if (subsets && subsets->empty()) errors.push_back(path + ": 'subsets' is empty");
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> known{"base", "prompt_store", "image_store", "alpha", "subsets"};
    if (std::find(known.begin(), known.end(), key) == known.end()) errors.push_back(path + ": unknown key '" + key + "'");
  }

  AuditInput out;
  if (pstore) {
    out.prompt_store_path = resolve_relative(path, *pstore);
    try {
      out.prompts = load_store(out.prompt_store_path, StoreKind::kPrompt);
    } catch (const InputError& e) {
      errors.push_back(e.what());
    }
  }
  bool have_images = false;
  if (istore) {
    out.image_store_path = resolve_relative(path, *istore);
    try {
      out.images = load_store(out.image_store_path, StoreKind::kImage);
      have_images = true;
    } catch (const InputError& e) {
      errors.push_back(e.what());
    }
  }
  if (base && pstore && out.prompts.size() > 0 && !out.prompts.contains(*base)) {
    errors.push_back(path + ": base prompt '" + *base + "' is not in the prompt store");
  }

  if (subsets) {
    for (std::size_t s = 0; s < subsets->size(); ++s) {
      const std::string where = path + ": subsets[" + std::to_string(s) + "]";
      const auto& sj = (*subsets)[s];
      ImageSubset subset;
      if (auto a = detail::take<std::string>(sj, "attribute", where, errors)) subset.attribute = *a;
      auto imgs = detail::take<std::vector<Json>>(sj, "images", where, errors);
      if (imgs && imgs->empty()) errors.push_back(where + ": 'images' is empty");
      if (imgs) {
        for (std::size_t i = 0; i < imgs->size(); ++i) {
          const std::string iw = where + ".images[" + std::to_string(i) + "]";
          auto id = detail::take<std::string>((*imgs)[i], "id", iw, errors);
          auto key = detail::take<std::string>((*imgs)[i], "key", iw, errors);
          auto score = detail::take<double>((*imgs)[i], "true_score", iw, errors);
          if (score && !(*score >= 0.0 && *score <= 1.0)) errors.push_back(iw + ": true_score outside [0, 1]");
          if (key && have_images && !out.images.contains(*key)) {
            errors.push_back(iw + ": key '" + *key + "' is not in the image store");
          }
          if (id && key && score && have_images && out.images.contains(*key)) {
            subset.images.push_back({*id, out.images.at(*key), *score});
          }
        }
      }
      out.collection.subsets.push_back(std::move(subset));
    }
  }
  detail::raise_all(errors, path);
  out.collection.base = PromptKey{*base, std::nullopt};
  out.collection.alpha = *alpha;
  out.collection.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> inputs;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version;
  double wall_seconds = 0.0;
};

inline constexpr const char* kToolVersion = "0.1.0";

inline Json to_json(const RunManifest& m) {
  return {{"subcommand", m.subcommand}, {"inputs", m.inputs},          {"config_hash", m.config_hash},
          {"seed", m.seed},             {"tool_version", m.tool_version}, {"wall_seconds", m.wall_seconds}};
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << content;
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

/// Fixed-point rendering with `decimals` digits (CSV tables).
inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);  // no "-0.000000"
  return s;
}

}  // namespace fairdiff
