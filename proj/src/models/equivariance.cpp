#include <stdexcept>

#include "clof/models.hpp"

namespace clof::models {

VectorFn as_vector_fn(const Model& model) {
  return [&model](const SystemInput& s) {
    const Batch b = collate(s);
    return model.forward(b).vectors;
  };
}

double equivariance_error(const VectorFn& fn, std::span<const SystemInput> inputs, int n_rotations,
                          nn::Rng& rng) {
  if (n_rotations < 1) throw std::invalid_argument("equivariance_error: need >= 1 rotation");
  double total = 0.0;
  long count = 0;
  for (const auto& s : inputs) {
    const Matrix base = fn(s);
    for (int r = 0; r < n_rotations; ++r) {
      const Mat3 rot = random_rotation(rng);
      const Matrix expected = rotate_rows(base, rot);
      const double den = expected.norm();
      const Matrix got = fn(rotated(s, rot));
      if (!(den > 0.0)) continue;
      total += (expected - got).norm() / den;
      ++count;
    }
  }
  if (count == 0) throw std::domain_error("equivariance_error: all outputs were zero");
  return total / static_cast<double>(count);
}

}  // namespace clof::models
