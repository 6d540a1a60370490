#pragma once

#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "clof/models.hpp"

namespace clof::models::detail {

inline Matrix gather_rows(const Matrix& x, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t e = 0; e < idx.size(); ++e) out.row(static_cast<Eigen::Index>(e)) = x.row(idx[e]);
  return out;
}

/// out.row(idx[e]) += x.row(e), columns [col, col + width) of x.
inline void scatter_add_rows(Matrix& out, const Matrix& x, const std::vector<int>& idx,
                             Eigen::Index col = 0, Eigen::Index width = -1) {
  if (width < 0) width = x.cols() - col;
  for (std::size_t e = 0; e < idx.size(); ++e) {
    out.row(idx[e]) += x.block(static_cast<Eigen::Index>(e), col, 1, width);
  }
}

inline Matrix hcat(std::initializer_list<const Matrix*> parts) {
  Eigen::Index rows = (*parts.begin())->rows();
  Eigen::Index cols = 0;
  for (const auto* p : parts) {
    if (p->rows() != rows) throw std::invalid_argument("hcat: row mismatch");
    cols += p->cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto* p : parts) {
    out.middleCols(c, p->cols()) = *p;
    c += p->cols();
  }
  return out;
}

inline Vec3 row3(const Matrix& m, Eigen::Index r) { return {m(r, 0), m(r, 1), m(r, 2)}; }

inline void add_row3(Matrix& m, Eigen::Index r, const Vec3& v) {
  m(r, 0) += v.x;
  m(r, 1) += v.y;
  m(r, 2) += v.z;
}

inline void set_row3(Matrix& m, Eigen::Index r, const Vec3& v) {
  m(r, 0) = v.x;
  m(r, 1) = v.y;
  m(r, 2) = v.z;
}

inline std::vector<double> inverse_graph_sizes(const Batch& b, int offset = 0) {
  std::vector<double> w(b.num_graphs());
  for (int g = 0; g < b.num_graphs(); ++g) w[g] = 1.0 / static_cast<double>(b.graph_size(g) - offset);
  return w;
}

}  // namespace clof::models::detail
