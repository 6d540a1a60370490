#include "clof/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace clof::nn {

namespace {

// Activations are a few hundred KB each and are freed every step; keeping
// them on the heap instead of fresh mmap'd pages halves the step time.
[[maybe_unused]] const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  return true;
}();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

// ---------------------------------------------------------------------------

ParamStore::Id ParamStore::add(std::string name, std::vector<int> shape) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("parameter shape must be 1-D or 2-D: " + name);
  }
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive parameter dimension: " + name);
  }
  const int rows = shape.size() == 2 ? shape[0] : 1;
  const int cols = shape.back();
  params_.push_back(
      Param{std::move(name), std::move(shape), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.size() - 1;
}

const Param* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Param* ParamStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParamStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

// ---------------------------------------------------------------------------

Matrix dense_forward(const Matrix& w, const Matrix& b, const Matrix& x) {
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) {
    throw std::invalid_argument("dense_forward: shape mismatch (x " + shape_str(x) + ", W " +
                                shape_str(w) + ", b " + shape_str(b) + ")");
  }
  Matrix y(x.rows(), w.rows());
  y.noalias() = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

DenseGrads dense_backward(const Matrix& w, const Matrix& x, const Matrix& dy) {
  if (dy.rows() != x.rows() || dy.cols() != w.rows() || x.cols() != w.cols()) {
    throw std::invalid_argument("dense_backward: shape mismatch");
  }
  DenseGrads g;
  g.dw.noalias() = dy.transpose() * x;
  g.db = dy.colwise().sum();
  g.dx.noalias() = dy * w;
  return g;
}

Matrix silu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  y.array() = x.array() / (1.0 + (-x.array()).exp());
  return y;
}

Matrix silu_backward(const Matrix& x, const Matrix& dy) {
  require(x.rows() == dy.rows() && x.cols() == dy.cols(), "silu_backward: shape mismatch");
  Matrix s(x.rows(), x.cols());
  s.array() = 1.0 / (1.0 + (-x.array()).exp());
  Matrix g(x.rows(), x.cols());
  g.array() = dy.array() * s.array() * (1.0 + x.array() * (1.0 - s.array()));
  return g;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LayerNormCache* cache) {
  const auto d = x.cols();
  require(d >= 2, "layer_norm: feature dimension must be >= 2");
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
          "layer_norm: gamma/beta shape mismatch");
  Matrix xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

LayerNormGrads layer_norm_backward(const Matrix& dy, const Matrix& gamma,
                                   const LayerNormCache& cache) {
  const auto& xhat = cache.xhat;
  require(dy.rows() == xhat.rows() && dy.cols() == xhat.cols(),
          "layer_norm_backward: shape mismatch");
  LayerNormGrads g;
  g.dgamma = (dy.array() * xhat.array()).colwise().sum();
  g.dbeta = dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  g.dx.resize(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    g.dx.row(r) =
        cache.inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
  }
  return g;
}

Matrix fourier_embed(const Matrix& s, const Matrix& freqs) {
  require(freqs.rows() == 1 && freqs.cols() >= 1, "fourier_embed: need at least one frequency");
  const auto k = freqs.cols();
  Matrix out(s.rows(), s.cols() * 2 * k);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      for (Eigen::Index f = 0; f < k; ++f) {
        const double arg = freqs(0, f) * s(r, c);
        out(r, (c * k + f) * 2) = std::sin(arg);
        out(r, (c * k + f) * 2 + 1) = std::cos(arg);
      }
    }
  }
  return out;
}

Matrix fourier_embed_backward(const Matrix& s, const Matrix& freqs, const Matrix& dy,
                              Matrix& dfreqs) {
  const auto k = freqs.cols();
  require(dy.rows() == s.rows() && dy.cols() == s.cols() * 2 * k,
          "fourier_embed_backward: shape mismatch");
  require(dfreqs.rows() == 1 && dfreqs.cols() == k, "fourier_embed_backward: dfreqs shape");
  Matrix ds = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      for (Eigen::Index f = 0; f < k; ++f) {
        const double w = freqs(0, f);
        const double x = s(r, c);
        const double arg = w * x;
        // d/d(arg) of (g_s sin + g_c cos)
        const double g = dy(r, (c * k + f) * 2) * std::cos(arg) -
                         dy(r, (c * k + f) * 2 + 1) * std::sin(arg);
        ds(r, c) += g * w;
        dfreqs(0, f) += g * x;
      }
    }
  }
  return ds;
}

double mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: shape mismatch (" + shape_str(pred) + " vs " +
                                shape_str(target) + ")");
  }
  require(pred.size() > 0, "mse: empty input");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Matrix mse_backward(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_backward: shape mismatch");
  }
  return (2.0 / static_cast<double>(pred.size())) * (pred - target);
}

// ---------------------------------------------------------------------------

Dense::Dense(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
             bool zero_weights)
    : in_(in), out_(out) {
  w_ = store.add(name + ".weight", {out, in});
  b_ = store.add(name + ".bias", {out});
  if (!zero_weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix& w = store.at(w_).value;
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  }
}

Matrix Dense::forward(const ParamStore& store, const Matrix& x) const {
  return dense_forward(store.value(w_), store.value(b_), x);
}

Matrix Dense::backward(ParamStore& store, const Matrix& x, const Matrix& dy, bool need_dx) const {
  const Matrix& w = store.value(w_);
  if (dy.rows() != x.rows() || dy.cols() != w.rows() || x.cols() != w.cols()) {
    throw std::invalid_argument("Dense::backward: shape mismatch");
  }
  store.grad(w_).noalias() += dy.transpose() * x;
  store.grad(b_) += dy.colwise().sum();
  if (!need_dx) return {};
  Matrix dx(x.rows(), x.cols());
  dx.noalias() = dy * w;
  return dx;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
  gamma_ = store.add(name + ".gamma", {dim});
  beta_ = store.add(name + ".beta", {dim});
  store.at(gamma_).value.setOnes();
}

Matrix LayerNorm::forward(const ParamStore& store, const Matrix& x, LayerNormCache* cache) const {
  return layer_norm(x, store.value(gamma_), store.value(beta_), cache);
}

Matrix LayerNorm::backward(ParamStore& store, const LayerNormCache& cache,
                           const Matrix& dy) const {
  auto g = layer_norm_backward(dy, store.value(gamma_), cache);
  store.grad(gamma_) += g.dgamma;
  store.grad(beta_) += g.dbeta;
  return std::move(g.dx);
}

FourierEmbedding::FourierEmbedding(ParamStore& store, const std::string& name, int k) : k_(k) {
  freqs_ = store.add(name + ".freqs", {k});
  Matrix& f = store.at(freqs_).value;
  for (int i = 0; i < k; ++i) f(0, i) = std::ldexp(1.0, i);
}

Matrix FourierEmbedding::forward(const ParamStore& store, const Matrix& s) const {
  return fourier_embed(s, store.value(freqs_));
}

Matrix FourierEmbedding::backward(ParamStore& store, const Matrix& s, const Matrix& dy) const {
  return fourier_embed_backward(s, store.value(freqs_), dy, store.grad(freqs_));
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng,
         bool activate_last, bool zero_last)
    : activate_last_(activate_last) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    layers_.emplace_back(store, name + "." + std::to_string(k), widths[k], widths[k + 1], rng,
                         last && zero_last);
  }
}

Matrix Mlp::forward(const ParamStore& store, const Matrix& x, Cache* cache) const {
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Matrix z = layers_[k].forward(store, h);
    const bool act = k + 1 < layers_.size() || activate_last_;
    if (cache != nullptr) cache->inputs.push_back(std::move(h));
    if (act) {
      h = silu(z);
      if (cache != nullptr) cache->pre.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix Mlp::backward(ParamStore& store, const Cache& cache, const Matrix& dy, bool need_dx) const {
  Matrix g = dy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const bool act = k + 1 < layers_.size() || activate_last_;
    if (act) g = silu_backward(cache.pre[k], g);
    g = layers_[k].backward(store, cache.inputs[k], g, need_dx || k > 0);
  }
  return g;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(const ParamStore& store, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& p : store) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(ParamStore& store) {
  if (store.size() != m_.size()) throw std::invalid_argument("AdamW: parameter layout changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : store) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* mp = m.data();
    double* vp = v.data();
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      mp[i] = b1 * mp[i] + (1.0 - b1) * g[i];
      vp[i] = b2 * vp[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = mp[i] / bc1;
      const double vhat = vp[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const LossClosure& loss, ParamStore& store,
                           const GradCheckOptions& options) {
  store.zero_grad();
  loss(true);
  std::vector<Matrix> analytic;
  analytic.reserve(store.size());
  for (const auto& p : store) analytic.push_back(p.grad);

  GradCheckReport report;
  std::size_t pi = 0;
  for (auto& p : store) {
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> idx;
    if (options.max_entries_per_param == 0 || n <= options.max_entries_per_param) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      const std::size_t m = options.max_entries_per_param;
      for (std::size_t k = 0; k < m; ++k) idx.push_back(k * n / m);
    }
    for (std::size_t i : idx) {
      double& w = p.value.data()[i];
      const double orig = w;
      w = orig + options.step;
      const double lp = loss(false);
      w = orig - options.step;
      const double lm = loss(false);
      w = orig;
      const double numeric = (lp - lm) / (2.0 * options.step);
      const double a = analytic[pi].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
      }
      if (!(rel <= options.tolerance)) report.failures.push_back({p.name, i, a, numeric, rel});
    }
    ++pi;
  }
  // Restore the analytic gradients for the caller.
  pi = 0;
  for (auto& p : store) p.grad = analytic[pi++];
  return report;
}

}  // namespace clof::nn
