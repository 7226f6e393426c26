#pragma once

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <type_traits>

#include "rfsep/error.hpp"

namespace rfsep {

using Json = nlohmann::json;

// Rejects keys in `j` that are not in `allowed`.
inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, where + ": expected a JSON object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw Error(ErrorCode::invalid_argument, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_optional(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, where + "." + key + ": " + e.what());
  }
  // Enum conversion maps unknown names to the first enumerator; refuse that.
  if constexpr (std::is_enum_v<T>) {
    if (Json(out) != j.at(key)) {
      throw Error(ErrorCode::invalid_argument, where + "." + key + ": unknown value " + j.at(key).dump());
    }
  }
}

inline Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, where + ": " + e.what());
  }
}

}  // namespace rfsep
