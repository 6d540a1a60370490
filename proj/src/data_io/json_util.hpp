#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "clof/geometry.hpp"
#include "json.hpp"

namespace clof::data::detail {

using Json = nlohmann::json;

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw std::invalid_argument(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

inline const Json& need(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing key '") + key + "'");
  return *it;
}

inline double as_real(const Json& j, const char* what) {
  if (!j.is_number()) throw std::invalid_argument(std::string(what) + ": expected a number");
  return j.get<double>();
}

inline std::int64_t as_int(const Json& j, const char* what) {
  if (!j.is_number_integer()) throw std::invalid_argument(std::string(what) + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::string as_string(const Json& j, const char* what) {
  if (!j.is_string()) throw std::invalid_argument(std::string(what) + ": expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const Json& j, const char* what) {
  if (!j.is_boolean()) throw std::invalid_argument(std::string(what) + ": expected a boolean");
  return j.get<bool>();
}

inline std::vector<double> as_reals(const Json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(as_real(x, what));
  return out;
}

inline Vec3 as_vec3(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string(what) + ": expected [x, y, z]");
  return {as_real(j[0], what), as_real(j[1], what), as_real(j[2], what)};
}

inline std::vector<Vec3> as_vec3s(const Json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + ": expected an array");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(as_vec3(x, what));
  return out;
}

}  // namespace clof::data::detail
