#pragma once

// Minimal reverse-mode kernel: every layer exposes forward() plus a backward()
// that consumes the activations cached by the caller during forward().

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace clof::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

struct Param {
  std::string name;
  std::vector<int> shape;
  Matrix value;  // 1-D shapes are stored as a single row
  Matrix grad;
};

/// Named parameter blocks in insertion order.
class ParamStore {
 public:
  using Id = std::size_t;

  Id add(std::string name, std::vector<int> shape);

  Param& at(Id id) { return params_.at(id); }
  const Param& at(Id id) const { return params_.at(id); }
  const Matrix& value(Id id) const { return params_[id].value; }
  Matrix& grad(Id id) { return params_[id].grad; }

  const Param* find(std::string_view name) const;
  Param* find(std::string_view name);

  std::size_t size() const { return params_.size(); }
  std::size_t value_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
};

// ---------------------------------------------------------------------------
// Stateless kernels.

/// Y = X W^T + b, with W of shape (out, in) and b of shape (1, out).
Matrix dense_forward(const Matrix& w, const Matrix& b, const Matrix& x);

struct DenseGrads {
  Matrix dw;
  Matrix db;
  Matrix dx;
};
DenseGrads dense_backward(const Matrix& w, const Matrix& x, const Matrix& dy);

Matrix silu(const Matrix& x);
Matrix silu_backward(const Matrix& x, const Matrix& dy);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};
/// Row-wise normalization followed by the affine map gamma * xhat + beta.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LayerNormCache* cache = nullptr);
struct LayerNormGrads {
  Matrix dx;
  Matrix dgamma;
  Matrix dbeta;
};
LayerNormGrads layer_norm_backward(const Matrix& dy, const Matrix& gamma,
                                   const LayerNormCache& cache);

/// For every scalar s in a row, emits [sin(w1 s), cos(w1 s), ..., sin(wk s), cos(wk s)].
Matrix fourier_embed(const Matrix& s, const Matrix& freqs);
/// Returns ds and accumulates the frequency gradient into dfreqs.
Matrix fourier_embed_backward(const Matrix& s, const Matrix& freqs, const Matrix& dy,
                              Matrix& dfreqs);

double mse(const Matrix& pred, const Matrix& target);
Matrix mse_backward(const Matrix& pred, const Matrix& target);

// ---------------------------------------------------------------------------
// Parameterized layers.

class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
        bool zero_weights = false);

  Matrix forward(const ParamStore& store, const Matrix& x) const;
  /// Accumulates dW, db into the store; returns dX (empty when !need_dx).
  Matrix backward(ParamStore& store, const Matrix& x, const Matrix& dy, bool need_dx = true) const;

  int in() const { return in_; }
  int out() const { return out_; }

 private:
  ParamStore::Id w_ = 0;
  ParamStore::Id b_ = 0;
  int in_ = 0;
  int out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);

  Matrix forward(const ParamStore& store, const Matrix& x, LayerNormCache* cache) const;
  Matrix backward(ParamStore& store, const LayerNormCache& cache, const Matrix& dy) const;

 private:
  ParamStore::Id gamma_ = 0;
  ParamStore::Id beta_ = 0;
};

class FourierEmbedding {
 public:
  static constexpr int kDefaultFrequencies = 8;

  FourierEmbedding() = default;
  /// Frequencies start at 2^0 ... 2^(k-1).
  FourierEmbedding(ParamStore& store, const std::string& name, int k = kDefaultFrequencies);

  Matrix forward(const ParamStore& store, const Matrix& s) const;
  Matrix backward(ParamStore& store, const Matrix& s, const Matrix& dy) const;
  int frequencies() const { return k_; }

 private:
  ParamStore::Id freqs_ = 0;
  int k_ = 0;
};

/// Dense layers with SiLU between them (and optionally after the last one).
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
  };

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng,
      bool activate_last, bool zero_last = false);

  Matrix forward(const ParamStore& store, const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& dy,
                  bool need_dx = true) const;

  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }

 private:
  std::vector<Dense> layers_;
  bool activate_last_ = false;
};

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-12;
};

/// Adam with bias correction and decoupled weight decay:
/// w <- w - lr (m_hat / (sqrt(v_hat) + eps) + lambda w).
class AdamW {
 public:
  AdamW(const ParamStore& store, AdamWConfig cfg);
  void step(ParamStore& store);
  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// ---------------------------------------------------------------------------
// Finite-difference verification.

/// Evaluates the loss; when `accumulate` is true it must also run backward,
/// adding gradients into the store (grads are zeroed by the caller).
using LossClosure = std::function<double(bool accumulate)>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Relative errors are taken against max(|analytic|, |numeric|, abs_floor).
  double abs_floor = 1e-5;
  /// 0 checks every entry; otherwise an evenly strided subset per parameter.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> failures;
  bool passed() const { return failures.empty(); }
};

GradCheckReport grad_check(const LossClosure& loss, ParamStore& store,
                           const GradCheckOptions& options = {});

}  // namespace clof::nn
