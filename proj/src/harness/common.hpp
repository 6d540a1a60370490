#pragma once

#include <chrono>
#include <vector>

#include "clof/tensornet.hpp"

namespace clof::harness::detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::vector<nn::Matrix> snapshot(const nn::ParamStore& store) {
  std::vector<nn::Matrix> v;
  v.reserve(store.size());
  for (const auto& p : store) v.push_back(p.value);
  return v;
}

inline void restore(nn::ParamStore& store, const std::vector<nn::Matrix>& v) {
  std::size_t i = 0;
  for (auto& p : store) p.value = v[i++];
}

}  // namespace clof::harness::detail
