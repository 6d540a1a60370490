#include <stdexcept>
#include <string>

#include "clof/models.hpp"

namespace clof::models {

std::vector<Edge> fully_connected_edges(int n) {
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n > 0 ? n - 1 : 0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) edges.push_back({i, j});
    }
  }
  return edges;
}

std::vector<Edge> star_edges(int n, int hub) {
  if (hub < 0 || hub >= n) throw std::invalid_argument("star_edges: hub out of range");
  std::vector<Edge> edges;
  for (int j = 0; j < n; ++j) {
    if (j != hub) edges.push_back({hub, j});
  }
  for (int j = 0; j < n; ++j) {
    if (j != hub) edges.push_back({j, hub});
  }
  return edges;
}

namespace {

void check_system(const SystemInput& s, const SystemInput& first) {
  const int n = s.size();
  if (n == 0) throw std::invalid_argument("collate: empty system");
  if (s.positions.cols() != 3) throw std::invalid_argument("collate: positions must be n x 3");
  if (s.vectors.size() != first.vectors.size()) {
    throw std::invalid_argument("collate: vector channel count differs between systems");
  }
  for (const auto& v : s.vectors) {
    if (v.rows() != n || v.cols() != 3) {
      throw std::invalid_argument("collate: vector channel must be n x 3");
    }
  }
  if (s.node_features.rows() != n || s.node_features.cols() != first.node_features.cols()) {
    throw std::invalid_argument("collate: node feature shape mismatch");
  }
  if (s.edge_features.rows() != static_cast<Eigen::Index>(s.edges.size()) ||
      s.edge_features.cols() != first.edge_features.cols()) {
    throw std::invalid_argument("collate: edge feature shape mismatch");
  }
  for (const auto& e : s.edges) {
    if (e[0] < 0 || e[0] >= n || e[1] < 0 || e[1] >= n) {
      throw std::invalid_argument("collate: edge index out of range");
    }
    if (e[0] == e[1]) throw std::invalid_argument("collate: self-loop");
  }
}

}  // namespace

Batch collate(std::span<const SystemInput* const> systems) {
  if (systems.empty()) throw std::invalid_argument("collate: no systems");
  const SystemInput& first = *systems.front();
  int nodes = 0;
  int edges = 0;
  for (const auto* s : systems) {
    check_system(*s, first);
    nodes += s->size();
    edges += static_cast<int>(s->edges.size());
  }
  Batch b;
  b.positions.resize(nodes, 3);
  b.vectors.assign(first.vectors.size(), Matrix(nodes, 3));
  b.node_features.resize(nodes, first.node_features.cols());
  b.edge_features.resize(edges, first.edge_features.cols());
  b.graph_of_node.reserve(nodes);
  b.receiver.reserve(edges);
  b.sender.reserve(edges);
  b.node_offset.push_back(0);
  int off = 0;
  int eoff = 0;
  for (std::size_t g = 0; g < systems.size(); ++g) {
    const SystemInput& s = *systems[g];
    const int n = s.size();
    b.positions.middleRows(off, n) = s.positions;
    for (std::size_t c = 0; c < s.vectors.size(); ++c) b.vectors[c].middleRows(off, n) = s.vectors[c];
    b.node_features.middleRows(off, n) = s.node_features;
    const auto ne = static_cast<int>(s.edges.size());
    if (ne > 0) b.edge_features.middleRows(eoff, ne) = s.edge_features;
    for (int i = 0; i < n; ++i) b.graph_of_node.push_back(static_cast<int>(g));
    for (const auto& e : s.edges) {
      b.receiver.push_back(off + e[0]);
      b.sender.push_back(off + e[1]);
    }
    off += n;
    eoff += ne;
    b.node_offset.push_back(off);
  }
  return b;
}

Batch collate(const SystemInput& system) {
  const SystemInput* one[] = {&system};
  return collate(std::span<const SystemInput* const>(one));
}

Matrix rotate_rows(const Matrix& x, const Mat3& r) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec3 v = r * Vec3{x(i, 0), x(i, 1), x(i, 2)};
    out(i, 0) = v.x;
    out(i, 1) = v.y;
    out(i, 2) = v.z;
  }
  return out;
}

SystemInput rotated(const SystemInput& s, const Mat3& r) {
  SystemInput out = s;
  out.positions = rotate_rows(s.positions, r);
  for (auto& v : out.vectors) v = rotate_rows(v, r);
  return out;
}

SystemInput translated(const SystemInput& s, const Vec3& t) {
  SystemInput out = s;
  for (Eigen::Index i = 0; i < out.positions.rows(); ++i) {
    out.positions(i, 0) += t.x;
    out.positions(i, 1) += t.y;
    out.positions(i, 2) += t.z;
  }
  return out;
}

SystemInput permuted(const SystemInput& s, std::span<const int> perm) {
  const int n = s.size();
  if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("permuted: size mismatch");
  std::vector<int> inverse(n, -1);
  for (int k = 0; k < n; ++k) {
    if (perm[k] < 0 || perm[k] >= n || inverse[perm[k]] != -1) {
      throw std::invalid_argument("permuted: not a permutation");
    }
    inverse[perm[k]] = k;
  }
  SystemInput out = s;
  for (int k = 0; k < n; ++k) {
    out.positions.row(k) = s.positions.row(perm[k]);
    out.node_features.row(k) = s.node_features.row(perm[k]);
    for (std::size_t c = 0; c < s.vectors.size(); ++c) out.vectors[c].row(k) = s.vectors[c].row(perm[k]);
  }
  for (auto& e : out.edges) e = {inverse[e[0]], inverse[e[1]]};
  return out;
}

}  // namespace clof::models
