#include <cmath>
#include <stdexcept>
#include <string>

#include "clof/models.hpp"
#include "ops.hpp"

namespace clof::models {

using detail::gather_rows;
using detail::hcat;
using detail::scatter_add_rows;

namespace {
std::string layer_name(int l, const char* part) { return "layer" + std::to_string(l) + "." + part; }
}  // namespace

Egnn::Egnn(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg) {
  nn::Rng rng(seed);
  const int hd = cfg_.hidden;
  node_embed_ = nn::Dense(params_, "embed.node", cfg_.node_dim, hd, rng);
  layers_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    Layer& L = layers_[l];
    L.phi_e = nn::Mlp(params_, layer_name(l, "phi_e"), {2 * hd + 1 + cfg_.edge_dim, hd, hd}, rng, true);
    L.phi_x = nn::Mlp(params_, layer_name(l, "phi_x"), {hd, hd, 1}, rng, false, true);
    if (cfg_.velocity_update) {
      L.phi_v = nn::Mlp(params_, layer_name(l, "phi_v"), {hd, hd, 1}, rng, false);
    }
    L.phi_h = nn::Mlp(params_, layer_name(l, "phi_h"), {2 * hd, hd, hd}, rng, false);
  }
}

ModelOutput Egnn::forward(const Batch& batch, std::unique_ptr<Tape>* tape_out) const {
  if (batch.node_features.cols() != cfg_.node_dim || batch.edge_features.cols() != cfg_.edge_dim) {
    throw std::invalid_argument("egnn: feature width mismatch");
  }
  if (cfg_.velocity_update && batch.vectors.empty()) {
    throw std::invalid_argument("egnn: velocity update needs a vector channel");
  }
  for (int g = 0; g < batch.num_graphs(); ++g) {
    if (batch.graph_size(g) < 2) throw std::invalid_argument("egnn: system needs at least two nodes");
  }
  auto tape = std::make_unique<ForwardTape>();
  ForwardTape& T = *tape;
  T.batch = &batch;
  const int n = batch.num_nodes();
  const int ne = batch.num_edges();
  const int hd = cfg_.hidden;
  const auto c = detail::inverse_graph_sizes(batch, 1);

  T.positions_in = batch.positions;
  T.h0 = node_embed_.forward(params_, batch.node_features);
  Matrix h = T.h0;
  Matrix p = batch.positions;
  T.layers.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    const Layer& L = layers_[l];
    LayerTape& lt = T.layers[l];
    lt.h_in = h;
    lt.diff = gather_rows(p, batch.receiver) - gather_rows(p, batch.sender);
    const Matrix r = lt.diff.rowwise().norm();
    const Matrix hi = gather_rows(h, batch.receiver);
    const Matrix hj = gather_rows(h, batch.sender);
    lt.edge_in = hcat({&hi, &hj, &r, &batch.edge_features});
    lt.messages = L.phi_e.forward(params_, lt.edge_in, &lt.phi_e);
    lt.weights = L.phi_x.forward(params_, lt.messages, &lt.phi_x);
    for (int e = 0; e < ne; ++e) {
      const int i = batch.receiver[e];
      p.row(i) += (c[batch.graph_of_node[i]] * lt.weights(e, 0)) * lt.diff.row(e);
    }
    if (cfg_.velocity_update) {
      lt.vel_scale = L.phi_v.forward(params_, h, &lt.phi_v);
      for (int i = 0; i < n; ++i) p.row(i) += lt.vel_scale(i, 0) * batch.vectors[0].row(i);
    }
    Matrix agg = Matrix::Zero(n, hd);
    scatter_add_rows(agg, lt.messages, batch.receiver);
    lt.node_in = hcat({&h, &agg});
    h = L.phi_h.forward(params_, lt.node_in, &lt.phi_h);
  }

  ModelOutput out;
  out.vectors = cfg_.output == VectorOutput::positions ? p : Matrix(p - batch.positions);
  out.node_scalars = std::move(h);
  if (tape_out) *tape_out = std::move(tape);
  return out;
}

InputGrads Egnn::backward(const Tape& tape_base, const Matrix& d_out, bool need_input_grads) {
  const auto* tp = dynamic_cast<const ForwardTape*>(&tape_base);
  if (!tp || !tp->batch) throw std::invalid_argument("egnn: foreign tape");
  const ForwardTape& T = *tp;
  const Batch& batch = *T.batch;
  const int n = batch.num_nodes();
  const int ne = batch.num_edges();
  const int hd = cfg_.hidden;
  if (d_out.rows() != n || d_out.cols() != 3) throw std::invalid_argument("egnn: gradient shape");
  const auto c = detail::inverse_graph_sizes(batch, 1);

  Matrix dp = d_out;
  Matrix dh = Matrix::Zero(n, hd);
  Matrix dvel = Matrix::Zero(n, 3);
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const Layer& L = layers_[l];
    const LayerTape& lt = T.layers[l];
    const Matrix dnode = L.phi_h.backward(params_, lt.phi_h, dh);
    Matrix dh_l = dnode.leftCols(hd);
    Matrix dm = gather_rows(dnode.rightCols(hd), batch.receiver);

    Matrix dw(ne, 1);
    Matrix ddiff(ne, 3);
    for (int e = 0; e < ne; ++e) {
      const int i = batch.receiver[e];
      const double ci = c[batch.graph_of_node[i]];
      dw(e, 0) = ci * dp.row(i).dot(lt.diff.row(e));
      ddiff.row(e) = (ci * lt.weights(e, 0)) * dp.row(i);
    }
    dm += L.phi_x.backward(params_, lt.phi_x, dw);
    if (cfg_.velocity_update) {
      Matrix dvs(n, 1);
      for (int i = 0; i < n; ++i) {
        dvs(i, 0) = dp.row(i).dot(batch.vectors[0].row(i));
        dvel.row(i) += lt.vel_scale(i, 0) * dp.row(i);
      }
      dh_l += L.phi_v.backward(params_, lt.phi_v, dvs);
    }
    const Matrix dedge = L.phi_e.backward(params_, lt.phi_e, dm);
    scatter_add_rows(dh_l, dedge, batch.receiver, 0, hd);
    scatter_add_rows(dh_l, dedge, batch.sender, hd, hd);
    for (int e = 0; e < ne; ++e) {
      const double r = lt.diff.row(e).norm();
      if (r > 0.0) ddiff.row(e) += (dedge(e, 2 * hd) / r) * lt.diff.row(e);
      dp.row(batch.receiver[e]) += ddiff.row(e);
      dp.row(batch.sender[e]) -= ddiff.row(e);
    }
    dh = std::move(dh_l);
  }
  node_embed_.backward(params_, batch.node_features, dh, false);

  InputGrads g;
  if (!need_input_grads) return g;
  if (cfg_.output == VectorOutput::displacement) dp -= d_out;
  g.positions = std::move(dp);
  g.vectors.assign(batch.vectors.size(), Matrix::Zero(n, 3));
  if (cfg_.velocity_update) g.vectors[0] = dvel;
  return g;
}

Matrix Egnn::edge_contributions(const ForwardTape& tape, const Batch& batch, int layer) {
  const LayerTape& lt = tape.layers.at(layer);
  const auto c = detail::inverse_graph_sizes(batch, 1);
  Matrix out(batch.num_edges(), 3);
  for (int e = 0; e < batch.num_edges(); ++e) {
    out.row(e) = (c[batch.graph_of_node[batch.receiver[e]]] * lt.weights(e, 0)) * lt.diff.row(e);
  }
  return out;
}

}  // namespace clof::models
