#pragma once

#include <random>

#include "clof/models.hpp"

namespace clof::test {

inline Vec3 random_vec(std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  return {n(rng), n(rng), n(rng)};
}

inline double dist(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline double max_abs_diff(const Mat3& a, const Mat3& b) { return max_abs(a - b); }

// Fully connected system with one velocity channel and random invariant features.
inline models::SystemInput random_system(int n, std::mt19937_64& rng, int node_dim = 1, int edge_dim = 1,
                                         int channels = 1) {
  std::normal_distribution<double> N(0.0, 1.0);
  models::SystemInput s;
  s.positions.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) s.positions(i, k) = N(rng);
  for (int c = 0; c < channels; ++c) {
    models::Matrix v(n, 3);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) v(i, k) = N(rng);
    s.vectors.push_back(v);
  }
  s.node_features.resize(n, node_dim);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < node_dim; ++k) s.node_features(i, k) = N(rng);
  s.edges = models::fully_connected_edges(n);
  s.edge_features.resize(static_cast<Eigen::Index>(s.edges.size()), edge_dim);
  for (Eigen::Index e = 0; e < s.edge_features.rows(); ++e)
    for (int k = 0; k < edge_dim; ++k) s.edge_features(e, k) = N(rng);
  return s;
}

// Max entry of |a - b| relative to max(1, |a|_inf).
inline double rel_inf(const models::Matrix& a, const models::Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
}

}  // namespace clof::test

namespace clof::test {

inline void perturb(models::Model& m, std::uint64_t seed, double sd = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (auto& p : m.params())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += n(rng);
}

inline models::Batch batch_of(const std::vector<models::SystemInput>& v) {
  std::vector<const models::SystemInput*> p;
  for (const auto& s : v) p.push_back(&s);
  return models::collate(std::span<const models::SystemInput* const>(p.data(), p.size()));
}

}  // namespace clof::test
