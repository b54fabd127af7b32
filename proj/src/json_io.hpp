#pragma once

// Internal JSON helpers shared by the config and checkpoint readers.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <type_traits>
#include <string>
#include <vector>

#include "amix/config.hpp"
#include "amix/nets.hpp"
#include "amix/optim.hpp"
#include "json.hpp"

namespace amix::detail {

using json = nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

/// Strict reader over one JSON object: typed lookups with defaults, and
/// finish() rejects any key that was never looked up.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const std::string& path() const { return path_; }
  std::string at(const char* key) const { return join_path(path_, key); }

  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
  }
  static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seeds are read through the size_t overload");
  void get(const char* key, std::size_t& out) {
    if (const json* v = find(key)) out = static_cast<std::size_t>(unsigned_value(*v, key));
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(static_cast<std::size_t>(unsigned_value((*v)[i], key, i)));
      }
    }
  }

  /// Raw value for a nested section, or nullptr when absent.
  const json* object(const char* key) { return find(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(join_path(path_, it.key()), "unknown key");
    }
  }

 private:
  const json* find(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::uint64_t unsigned_value(const json& v, const char* key, std::optional<std::size_t> index = {}) const {
    const std::string where = index ? at(key) + "[" + std::to_string(*index) + "]" : at(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(where, v.is_number_integer() ? "must be non-negative" : "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline json spec_to_json(const MlpSpec& spec) {
  json hidden = json::array();
  double slope = 0.2;
  bool slope_set = false;
  for (const auto& a : spec.hidden) {
    hidden.push_back(to_string(a));
    if (a.kind == Activation::Kind::LeakyRelu && !slope_set) slope = a.slope, slope_set = true;
  }
  if (!slope_set && spec.output.kind == Activation::Kind::LeakyRelu) slope = spec.output.slope;
  return json{{"widths", spec.widths}, {"hidden", hidden}, {"output", to_string(spec.output)}, {"leaky_slope", slope}};
}

inline Activation activation_at(const json& v, const std::string& path, double slope) {
  if (!v.is_string()) throw ConfigError(path, "expected an activation name");
  try {
    Activation a = activation_from_string(v.get<std::string>());
    if (a.kind == Activation::Kind::LeakyRelu) a.slope = slope;
    return a;
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

inline MlpSpec spec_from_json(const json& j, const std::string& path, const MlpSpec& fallback) {
  Section s(j, path);
  MlpSpec spec = fallback;
  s.get("widths", spec.widths);
  double slope = 0.2;
  for (const auto& a : fallback.hidden)
    if (a.kind == Activation::Kind::LeakyRelu) slope = a.slope;
  s.get("leaky_slope", slope);
  const std::size_t n_hidden = spec.widths.size() >= 2 ? spec.widths.size() - 2 : 0;
  if (const json* h = s.object("hidden")) {
    spec.hidden.clear();
    if (h->is_string()) {
      spec.hidden.assign(n_hidden, activation_at(*h, s.at("hidden"), slope));
    } else if (h->is_array()) {
      for (std::size_t i = 0; i < h->size(); ++i) {
        spec.hidden.push_back(activation_at((*h)[i], s.at("hidden") + "[" + std::to_string(i) + "]", slope));
      }
    } else {
      throw ConfigError(s.at("hidden"), "expected an activation name or an array of names");
    }
  } else {
    // Keep the fallback activation, resized to the configured depth.
    const Activation act = fallback.hidden.empty() ? Activation::relu() : fallback.hidden.front();
    spec.hidden.assign(n_hidden, act);
  }
  for (auto& a : spec.hidden)
    if (a.kind == Activation::Kind::LeakyRelu) a.slope = slope;
  if (const json* o = s.object("output")) spec.output = activation_at(*o, s.at("output"), slope);
  s.finish();
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

}  // namespace amix::detail
