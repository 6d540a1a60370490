#include <cmath>
#include <stdexcept>
#include <string>

#include "clof/models.hpp"
#include "ops.hpp"

namespace clof::models {

using detail::add_row3;
using detail::gather_rows;
using detail::hcat;
using detail::row3;
using detail::scatter_add_rows;
using detail::set_row3;

FrameSet build_frames(const Batch& batch, const Matrix& positions, double eps) {
  const int ne = batch.num_edges();
  FrameSet f{Matrix(ne, 3), Matrix(ne, 3), Matrix(ne, 3), std::vector<char>(ne, 0)};
  for (int e = 0; e < ne; ++e) {
    const Frame fr = equi_frame(row3(positions, batch.receiver[e]), row3(positions, batch.sender[e]), eps);
    set_row3(f.a, e, fr.a);
    set_row3(f.b, e, fr.b);
    set_row3(f.c, e, fr.c);
    f.degenerate[e] = fr.degenerate ? 1 : 0;
  }
  return f;
}

namespace {

void check_receivers(const Batch& batch) {
  std::vector<int> deg(batch.num_nodes(), 0);
  for (int r : batch.receiver) ++deg[r];
  for (int d : deg) {
    if (d == 0) throw std::invalid_argument("model: every node needs at least one incoming edge");
  }
}

std::string layer_name(int l, const char* part) { return "layer" + std::to_string(l) + "." + part; }

}  // namespace

ClofNet::ClofNet(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg) {
  nn::Rng rng(seed);
  const int hd = cfg_.hidden;
  const int ds = cfg_.edge_scalar_count();
  if (cfg_.embed == EmbedKind::mlp) {
    embed_mlp_ = nn::Mlp(params_, "embed.scalars", {ds, hd, hd}, rng, false);
  } else {
    fourier_ = nn::FourierEmbedding(params_, "embed.fourier", cfg_.fourier_frequencies);
    fourier_proj_ = nn::Dense(params_, "embed.fourier_proj", 2 * cfg_.fourier_frequencies * ds, hd, rng);
  }
  node_embed_ = nn::Dense(params_, "embed.node", cfg_.node_dim, hd, rng);
  edge_embed_ = nn::Dense(params_, "embed.edge", cfg_.edge_dim, hd, rng);
  layers_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    Layer& L = layers_[l];
    L.phi_m = nn::Mlp(params_, layer_name(l, "phi_m"), {4 * hd, hd, hd}, rng, true);
    L.phi_h = nn::Mlp(params_, layer_name(l, "phi_h"), {2 * hd, hd, hd}, rng, false);
    if (cfg_.block == BlockKind::transformer) {
      L.q = nn::Dense(params_, layer_name(l, "query"), hd, hd, rng);
      L.k = nn::Dense(params_, layer_name(l, "key"), 2 * hd, hd, rng);
      L.v = nn::Dense(params_, layer_name(l, "value"), hd, hd, rng);
      L.ln_m = nn::LayerNorm(params_, layer_name(l, "ln_m"), hd);
      L.ln_h = nn::LayerNorm(params_, layer_name(l, "ln_h"), hd);
      L.residual = nn::Mlp(params_, layer_name(l, "residual"), {hd, hd, hd}, rng, false);
    }
    L.phi_x = nn::Mlp(params_, layer_name(l, "phi_x"), {hd, hd, 3}, rng, false, true);
  }
}

Matrix ClofNet::edge_scalars(const Batch& batch, const Matrix& centered, const FrameSet& f) const {
  const int ne = batch.num_edges();
  Matrix s(ne, cfg_.edge_scalar_count());
  for (int e = 0; e < ne; ++e) {
    const int i = batch.receiver[e];
    const int j = batch.sender[e];
    const Vec3 a = row3(f.a, e), b = row3(f.b, e), c = row3(f.c, e);
    int col = 0;
    auto put = [&](const Vec3& v) {
      s(e, col++) = dot(v, a);
      s(e, col++) = dot(v, b);
      s(e, col++) = dot(v, c);
    };
    if (cfg_.scalar_positions) {
      put(row3(centered, i));
      put(row3(centered, j));
    }
    if (cfg_.scalar_vectors) {
      for (int ch = 0; ch < cfg_.vector_channels; ++ch) {
        put(row3(batch.vectors.at(ch), i));
        put(row3(batch.vectors.at(ch), j));
      }
    }
    if (cfg_.scalar_distance) s(e, col++) = norm(row3(centered, i) - row3(centered, j));
  }
  return s;
}

ModelOutput ClofNet::forward(const Batch& batch, std::unique_ptr<Tape>* tape_out) const {
  if (static_cast<int>(batch.vectors.size()) < cfg_.vector_channels) {
    throw std::invalid_argument("clofnet: batch has fewer vector channels than configured");
  }
  if (batch.node_features.cols() != cfg_.node_dim || batch.edge_features.cols() != cfg_.edge_dim) {
    throw std::invalid_argument("clofnet: feature width mismatch");
  }
  check_receivers(batch);
  auto tape = std::make_unique<ForwardTape>();
  ForwardTape& T = *tape;
  T.batch = &batch;
  const int n = batch.num_nodes();
  const int ne = batch.num_edges();
  const int hd = cfg_.hidden;
  const auto inv_n = detail::inverse_graph_sizes(batch);

  T.centroid = Matrix::Zero(batch.num_graphs(), 3);
  for (int i = 0; i < n; ++i) T.centroid.row(batch.graph_of_node[i]) += batch.positions.row(i);
  for (int g = 0; g < batch.num_graphs(); ++g) T.centroid.row(g) *= inv_n[g];
  T.centered = batch.positions;
  for (int i = 0; i < n; ++i) T.centered.row(i) -= T.centroid.row(batch.graph_of_node[i]);

  T.frames0 = build_frames(batch, T.centered, cfg_.frame_eps);
  T.scalars = edge_scalars(batch, T.centered, T.frames0);
  if (cfg_.embed == EmbedKind::mlp) {
    T.s_emb = embed_mlp_.forward(params_, T.scalars, &T.embed_mlp);
  } else {
    T.fourier_out = fourier_.forward(params_, T.scalars);
    T.s_emb = fourier_proj_.forward(params_, T.fourier_out);
  }
  T.e_emb = edge_embed_.forward(params_, batch.edge_features);
  T.h0 = node_embed_.forward(params_, batch.node_features);

  Matrix h = T.h0;
  Matrix p = T.centered;
  T.layers.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    const Layer& L = layers_[l];
    LayerTape& lt = T.layers[l];
    lt.h_in = h;
    lt.positions_in = p;
    if (l > 0 && cfg_.recompute_frames_per_layer) {
      lt.frames = build_frames(batch, p, cfg_.frame_eps);
      lt.own_frames = true;
    }
    const FrameSet& F = lt.own_frames ? lt.frames : T.frames0;

    const Matrix hi = gather_rows(h, batch.receiver);
    const Matrix hj = gather_rows(h, batch.sender);
    lt.edge_in = hcat({&T.s_emb, &hi, &hj, &T.e_emb});
    lt.messages = L.phi_m.forward(params_, lt.edge_in, &lt.phi_m);

    Matrix h_next;
    if (cfg_.block == BlockKind::naive) {
      Matrix agg = Matrix::Zero(n, hd);
      scatter_add_rows(agg, lt.messages, batch.receiver);
      lt.node_in = hcat({&h, &agg});
      h_next = L.phi_h.forward(params_, lt.node_in, &lt.phi_h);
      lt.messages_out = lt.messages;
    } else {
      lt.q = L.q.forward(params_, h);
      lt.k_in = hcat({&hi, &lt.messages});
      lt.k = L.k.forward(params_, lt.k_in);
      lt.v = L.v.forward(params_, lt.messages);
      lt.score.resize(ne, 1);
      lt.denom = Eigen::VectorXd::Zero(n);
      for (int e = 0; e < ne; ++e) {
        lt.score(e, 0) = lt.q.row(batch.receiver[e]).dot(lt.k.row(e));
        lt.denom(batch.receiver[e]) += lt.score(e, 0);
      }
      lt.guarded.assign(n, 0);
      for (int i = 0; i < n; ++i) {
        if (std::abs(lt.denom(i)) < kAttentionGuard) {
          lt.denom(i) = std::copysign(kAttentionGuard, lt.denom(i));
          lt.guarded[i] = 1;
        }
      }
      lt.alpha.resize(ne, 1);
      lt.attended = Matrix::Zero(n, hd);
      for (int e = 0; e < ne; ++e) {
        const int i = batch.receiver[e];
        lt.alpha(e, 0) = lt.score(e, 0) / lt.denom(i);
        lt.attended.row(i) += lt.alpha(e, 0) * lt.v.row(e);
      }
      lt.big_m = L.ln_m.forward(params_, lt.attended, &lt.ln_m);
      lt.gtb_in = hcat({&h, &lt.big_m});
      lt.h_update = L.phi_h.forward(params_, lt.gtb_in, &lt.phi_h_gtb);
      h_next = h + L.ln_h.forward(params_, lt.h_update, &lt.ln_h);
      lt.messages_out = lt.messages + L.residual.forward(params_, lt.messages, &lt.residual);
    }

    lt.coeffs = L.phi_x.forward(params_, lt.messages_out, &lt.phi_x);
    Matrix p_next = p;
    for (int e = 0; e < ne; ++e) {
      const int i = batch.receiver[e];
      const double w = inv_n[batch.graph_of_node[i]];
      const Vec3 d = lt.coeffs(e, 0) * row3(F.a, e) + lt.coeffs(e, 1) * row3(F.b, e) +
                     lt.coeffs(e, 2) * row3(F.c, e);
      add_row3(p_next, i, w * d);
    }
    p = std::move(p_next);
    h = std::move(h_next);
  }

  ModelOutput out;
  if (cfg_.output == VectorOutput::positions) {
    out.vectors = p;
    for (int i = 0; i < n; ++i) out.vectors.row(i) += T.centroid.row(batch.graph_of_node[i]);
  } else {
    out.vectors = p - T.centered;
  }
  out.node_scalars = std::move(h);
  if (tape_out) *tape_out = std::move(tape);
  return out;
}

InputGrads ClofNet::backward(const Tape& tape_base, const Matrix& d_out, bool need_input_grads) {
  const auto* tp = dynamic_cast<const ForwardTape*>(&tape_base);
  if (!tp || !tp->batch) throw std::invalid_argument("clofnet: foreign tape");
  const ForwardTape& T = *tp;
  const Batch& batch = *T.batch;
  const int n = batch.num_nodes();
  const int ne = batch.num_edges();
  const int hd = cfg_.hidden;
  if (d_out.rows() != n || d_out.cols() != 3) throw std::invalid_argument("clofnet: gradient shape");
  const auto inv_n = detail::inverse_graph_sizes(batch);

  Matrix dp = d_out;
  Matrix dh = Matrix::Zero(n, hd);
  Matrix ds_emb = Matrix::Zero(ne, hd);
  Matrix de_emb = Matrix::Zero(ne, hd);
  Matrix da0 = Matrix::Zero(ne, 3), db0 = Matrix::Zero(ne, 3), dc0 = Matrix::Zero(ne, 3);

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const Layer& L = layers_[l];
    const LayerTape& lt = T.layers[l];
    const FrameSet& F = lt.own_frames ? lt.frames : T.frames0;

    Matrix dcoeffs(ne, 3);
    Matrix da_local, db_local, dc_local;
    Matrix* da = &da0;
    Matrix* db = &db0;
    Matrix* dc = &dc0;
    if (lt.own_frames) {
      da_local = Matrix::Zero(ne, 3);
      db_local = Matrix::Zero(ne, 3);
      dc_local = Matrix::Zero(ne, 3);
      da = &da_local;
      db = &db_local;
      dc = &dc_local;
    }
    for (int e = 0; e < ne; ++e) {
      const int i = batch.receiver[e];
      const Vec3 dv = inv_n[batch.graph_of_node[i]] * row3(dp, i);
      dcoeffs(e, 0) = dot(dv, row3(F.a, e));
      dcoeffs(e, 1) = dot(dv, row3(F.b, e));
      dcoeffs(e, 2) = dot(dv, row3(F.c, e));
      add_row3(*da, e, lt.coeffs(e, 0) * dv);
      add_row3(*db, e, lt.coeffs(e, 1) * dv);
      add_row3(*dc, e, lt.coeffs(e, 2) * dv);
    }
    const Matrix dm_out = L.phi_x.backward(params_, lt.phi_x, dcoeffs);

    Matrix dh_l;
    Matrix dm;
    if (cfg_.block == BlockKind::naive) {
      const Matrix dnode = L.phi_h.backward(params_, lt.phi_h, dh);
      dh_l = dnode.leftCols(hd);
      dm = dm_out;
      for (int e = 0; e < ne; ++e) dm.row(e) += dnode.block(batch.receiver[e], hd, 1, hd);
    } else {
      dm = dm_out + L.residual.backward(params_, lt.residual, dm_out);
      dh_l = dh;
      const Matrix du = L.ln_h.backward(params_, lt.ln_h, dh);
      const Matrix dgtb = L.phi_h.backward(params_, lt.phi_h_gtb, du);
      dh_l += dgtb.leftCols(hd);
      const Matrix datt = L.ln_m.backward(params_, lt.ln_m, dgtb.rightCols(hd));
      Matrix dalpha(ne, 1);
      Matrix dv(ne, hd);
      Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
      for (int e = 0; e < ne; ++e) {
        const int i = batch.receiver[e];
        dalpha(e, 0) = datt.row(i).dot(lt.v.row(e));
        dv.row(e) = lt.alpha(e, 0) * datt.row(i);
        t(i) += dalpha(e, 0) * lt.score(e, 0);
      }
      Matrix dq = Matrix::Zero(n, hd);
      Matrix dk(ne, hd);
      for (int e = 0; e < ne; ++e) {
        const int i = batch.receiver[e];
        const double d = lt.denom(i);
        double dscore = dalpha(e, 0) / d;
        if (!lt.guarded[i]) dscore -= t(i) / (d * d);
        dq.row(i) += dscore * lt.k.row(e);
        dk.row(e) = dscore * lt.q.row(i);
      }
      const Matrix dk_in = L.k.backward(params_, lt.k_in, dk);
      scatter_add_rows(dh_l, dk_in, batch.receiver, 0, hd);
      dm += dk_in.rightCols(hd);
      dm += L.v.backward(params_, lt.messages, dv);
      dh_l += L.q.backward(params_, lt.h_in, dq);
    }

    const Matrix dedge = L.phi_m.backward(params_, lt.phi_m, dm);
    ds_emb += dedge.leftCols(hd);
    scatter_add_rows(dh_l, dedge, batch.receiver, hd, hd);
    scatter_add_rows(dh_l, dedge, batch.sender, 2 * hd, hd);
    de_emb += dedge.rightCols(hd);

    if (lt.own_frames) {
      for (int e = 0; e < ne; ++e) {
        const int i = batch.receiver[e];
        const int j = batch.sender[e];
        Vec3 gi, gj;
        equi_frame_vjp(row3(lt.positions_in, i), row3(lt.positions_in, j), cfg_.frame_eps,
                       row3(*da, e), row3(*db, e), row3(*dc, e), gi, gj);
        add_row3(dp, i, gi);
        add_row3(dp, j, gj);
      }
    }
    dh = std::move(dh_l);
  }

  node_embed_.backward(params_, batch.node_features, dh, false);
  edge_embed_.backward(params_, batch.edge_features, de_emb, false);
  Matrix ds;
  if (cfg_.embed == EmbedKind::mlp) {
    ds = embed_mlp_.backward(params_, T.embed_mlp, ds_emb, need_input_grads);
  } else {
    const Matrix dfe = fourier_proj_.backward(params_, T.fourier_out, ds_emb, true);
    ds = fourier_.backward(params_, T.scalars, dfe);
  }

  InputGrads g;
  if (!need_input_grads) return g;

  // dp now holds d/d(centered) through the layer stack.
  if (cfg_.output == VectorOutput::displacement) dp -= d_out;
  g.vectors.assign(batch.vectors.size(), Matrix::Zero(n, 3));
  for (int e = 0; e < ne; ++e) {
    const int i = batch.receiver[e];
    const int j = batch.sender[e];
    const Vec3 a = row3(T.frames0.a, e), b = row3(T.frames0.b, e), c = row3(T.frames0.c, e);
    int col = 0;
    auto take = [&](const Vec3& v, Matrix& dv, int node) {
      const double sa = ds(e, col++), sb = ds(e, col++), sc = ds(e, col++);
      add_row3(dv, node, sa * a + sb * b + sc * c);
      add_row3(da0, e, sa * v);
      add_row3(db0, e, sb * v);
      add_row3(dc0, e, sc * v);
    };
    if (cfg_.scalar_positions) {
      take(row3(T.centered, i), dp, i);
      take(row3(T.centered, j), dp, j);
    }
    if (cfg_.scalar_vectors) {
      for (int ch = 0; ch < cfg_.vector_channels; ++ch) {
        take(row3(batch.vectors[ch], i), g.vectors[ch], i);
        take(row3(batch.vectors[ch], j), g.vectors[ch], j);
      }
    }
    if (cfg_.scalar_distance) {
      const Vec3 d = row3(T.centered, i) - row3(T.centered, j);
      const double r = norm(d);
      if (r > 0.0) {
        const Vec3 gd = (ds(e, col) / r) * d;
        add_row3(dp, i, gd);
        add_row3(dp, j, -gd);
      }
    }
    Vec3 gi, gj;
    equi_frame_vjp(row3(T.centered, i), row3(T.centered, j), cfg_.frame_eps, row3(da0, e),
                   row3(db0, e), row3(dc0, e), gi, gj);
    add_row3(dp, i, gi);
    add_row3(dp, j, gj);
  }

  // centered = x - mean(x); positions output adds the centroid back.
  Matrix mean = Matrix::Zero(batch.num_graphs(), 3);
  for (int i = 0; i < n; ++i) mean.row(batch.graph_of_node[i]) += dp.row(i);
  Matrix dcent = Matrix::Zero(batch.num_graphs(), 3);
  if (cfg_.output == VectorOutput::positions) {
    for (int i = 0; i < n; ++i) dcent.row(batch.graph_of_node[i]) += d_out.row(i);
  }
  g.positions = dp;
  for (int i = 0; i < n; ++i) {
    const int gi = batch.graph_of_node[i];
    g.positions.row(i) += (dcent.row(gi) - mean.row(gi)) * inv_n[gi];
  }
  return g;
}

}  // namespace clof::models
