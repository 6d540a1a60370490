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

Gnn::Gnn(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg) {
  nn::Rng rng(seed);
  const int hd = cfg_.hidden;
  const int raw = 3 + 3 * cfg_.vector_channels + cfg_.node_dim;
  node_embed_ = nn::Dense(params_, "embed.node", raw, hd, rng);
  layers_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_[l].phi_e = nn::Mlp(params_, layer_name(l, "phi_e"), {2 * hd + cfg_.edge_dim, hd, hd}, rng, true);
    layers_[l].phi_h = nn::Mlp(params_, layer_name(l, "phi_h"), {2 * hd, hd, hd}, rng, false);
  }
  head_ = nn::Mlp(params_, "head", {hd, hd, 3}, rng, false);
}

ModelOutput Gnn::forward(const Batch& batch, std::unique_ptr<Tape>* tape_out) const {
  if (static_cast<int>(batch.vectors.size()) < cfg_.vector_channels) {
    throw std::invalid_argument("gnn: batch has fewer vector channels than configured");
  }
  if (batch.node_features.cols() != cfg_.node_dim || batch.edge_features.cols() != cfg_.edge_dim) {
    throw std::invalid_argument("gnn: feature width mismatch");
  }
  auto tape = std::make_unique<ForwardTape>();
  ForwardTape& T = *tape;
  T.batch = &batch;
  const int n = batch.num_nodes();
  const int hd = cfg_.hidden;

  T.raw.resize(n, 3 + 3 * cfg_.vector_channels + cfg_.node_dim);
  T.raw.leftCols(3) = batch.positions;
  for (int ch = 0; ch < cfg_.vector_channels; ++ch) T.raw.middleCols(3 + 3 * ch, 3) = batch.vectors[ch];
  T.raw.rightCols(cfg_.node_dim) = batch.node_features;
  T.h0 = node_embed_.forward(params_, T.raw);

  Matrix h = T.h0;
  const auto nl = static_cast<std::size_t>(cfg_.layers);
  T.h_in.resize(nl);
  T.edge_in.resize(nl);
  T.phi_e.resize(nl);
  T.node_in.resize(nl);
  T.phi_h.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    T.h_in[l] = h;
    const Matrix hi = gather_rows(h, batch.receiver);
    const Matrix hj = gather_rows(h, batch.sender);
    T.edge_in[l] = hcat({&hi, &hj, &batch.edge_features});
    const Matrix m = layers_[l].phi_e.forward(params_, T.edge_in[l], &T.phi_e[l]);
    Matrix agg = Matrix::Zero(n, hd);
    scatter_add_rows(agg, m, batch.receiver);
    T.node_in[l] = hcat({&h, &agg});
    h = layers_[l].phi_h.forward(params_, T.node_in[l], &T.phi_h[l]);
  }
  ModelOutput out;
  out.vectors = head_.forward(params_, h, &T.head);
  out.node_scalars = std::move(h);
  if (tape_out) *tape_out = std::move(tape);
  return out;
}

InputGrads Gnn::backward(const Tape& tape_base, const Matrix& d_out, bool need_input_grads) {
  const auto* tp = dynamic_cast<const ForwardTape*>(&tape_base);
  if (!tp || !tp->batch) throw std::invalid_argument("gnn: foreign tape");
  const ForwardTape& T = *tp;
  const Batch& batch = *T.batch;
  const int hd = cfg_.hidden;
  if (d_out.rows() != batch.num_nodes() || d_out.cols() != 3) {
    throw std::invalid_argument("gnn: gradient shape");
  }
  Matrix dh = head_.backward(params_, T.head, d_out);
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const Matrix dnode = layers_[l].phi_h.backward(params_, T.phi_h[l], dh);
    Matrix dh_l = dnode.leftCols(hd);
    const Matrix dm = gather_rows(dnode.rightCols(hd), batch.receiver);
    const Matrix dedge = layers_[l].phi_e.backward(params_, T.phi_e[l], dm);
    scatter_add_rows(dh_l, dedge, batch.receiver, 0, hd);
    scatter_add_rows(dh_l, dedge, batch.sender, hd, hd);
    dh = std::move(dh_l);
  }
  const Matrix draw = node_embed_.backward(params_, T.raw, dh, need_input_grads);
  InputGrads g;
  if (!need_input_grads) return g;
  g.positions = draw.leftCols(3);
  g.vectors.assign(batch.vectors.size(), Matrix::Zero(batch.num_nodes(), 3));
  for (int ch = 0; ch < cfg_.vector_channels; ++ch) g.vectors[ch] = draw.middleCols(3 + 3 * ch, 3);
  return g;
}

}  // namespace clof::models
