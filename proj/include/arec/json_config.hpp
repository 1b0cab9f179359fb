#pragma once

#include <set>
#include <string>

#include "arec/error.hpp"
#include "json.hpp"

namespace arec {

/// Reads optional fields out of one JSON object and remembers which keys were
/// consumed, so finish() can reject anything unrecognised.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected a JSON object");
  }

  template <typename T>
  JsonFields& get(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      dst = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError(section_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace arec
