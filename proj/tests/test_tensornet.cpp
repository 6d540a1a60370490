#include <doctest.h>

#include <cmath>

#include "clof/tensornet.hpp"

using namespace clof::nn;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("param store keeps insertion order and shapes") {
  ParamStore s;
  s.add("z", {2, 3});
  s.add("a", {4});
  CHECK(s.size() == 2);
  CHECK(s.begin()->name == "z");
  CHECK(s.find("a")->value.size() == 4);
  CHECK(s.find("a")->value.rows() == 1);
  CHECK(s.value_count() == 10);
  CHECK(s.find("missing") == nullptr);
  CHECK_THROWS(s.add("z", {1}));
}

TEST_CASE("dense forward is X W^T + b") {
  Matrix w(2, 3), b(1, 2), x(1, 3);
  w << 1, 2, 3, 4, 5, 6;
  b << 0.5, -1;
  x << 1, 0, -1;
  const Matrix y = dense_forward(w, b, x);
  CHECK(y(0, 0) == doctest::Approx(-1.5));
  CHECK(y(0, 1) == doctest::Approx(-3.0));
}

TEST_CASE("silu and its derivative") {
  Matrix x(1, 3);
  x << -2, 0, 1.5;
  const Matrix y = silu(x);
  for (int k = 0; k < 3; ++k) CHECK(y(0, k) == doctest::Approx(x(0, k) / (1 + std::exp(-x(0, k)))));
  const Matrix d = silu_backward(x, Matrix::Ones(1, 3));
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Matrix p = x, m = x;
    p(0, k) += h;
    m(0, k) -= h;
    CHECK(d(0, k) == doctest::Approx((silu(p)(0, k) - silu(m)(0, k)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
  Rng rng(1);
  const Matrix x = random_matrix(5, 8, rng);
  const Matrix y = layer_norm(x, Matrix::Ones(1, 8), Matrix::Zero(1, 8));
  for (int r = 0; r < 5; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-12);
    const double var = (y.row(r).array() - y.row(r).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("mse and its gradient") {
  Matrix p(2, 2), t(2, 2);
  p << 1, 2, 3, 4;
  t << 0, 2, 3, 6;
  CHECK(mse(p, t) == doctest::Approx(5.0 / 4));
  const Matrix g = mse_backward(p, t);
  CHECK(g(0, 0) == doctest::Approx(0.5));
  CHECK(g(1, 1) == doctest::Approx(-1.0));
}

TEST_CASE("layers pass gradient checks") {
  Rng rng(2);
  ParamStore store;
  Mlp mlp(store, "mlp", {3, 6, 4}, rng, false);
  LayerNorm ln(store, "ln", 4);
  FourierEmbedding four(store, "four", 3);
  Dense proj(store, "proj", 4 * 6, 2, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix target = random_matrix(5, 2, rng);
  auto loss = [&](bool acc) {
    Mlp::Cache mc;
    LayerNormCache lc;
    const Matrix h = mlp.forward(store, x, &mc);
    const Matrix n = ln.forward(store, h, &lc);
    const Matrix s = 0.3 * n;
    const Matrix f = four.forward(store, s);
    const Matrix y = proj.forward(store, f);
    if (acc) {
      const Matrix dy = mse_backward(y, target);
      const Matrix df = proj.backward(store, f, dy);
      const Matrix ds = four.backward(store, s, df);
      const Matrix dn = ln.backward(store, lc, 0.3 * ds);
      mlp.backward(store, mc, dn, false);
    }
    return mse(y, target);
  };
  const GradCheckReport r = grad_check(loss, store);
  CHECK(r.passed());
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.checked == store.value_count());
}

TEST_CASE("grad check catches a wrong gradient") {
  ParamStore store;
  const auto id = store.add("w", {1});
  store.at(id).value(0, 0) = 0.7;
  auto loss = [&](bool acc) {
    const double w = store.value(id)(0, 0);
    if (acc) store.grad(id)(0, 0) += 3.0 * w;  // true derivative is 2 w
    return w * w;
  };
  CHECK_FALSE(grad_check(loss, store).passed());
}

TEST_CASE("AdamW moves against the gradient") {
  ParamStore store;
  const auto id = store.add("w", {2});
  store.at(id).value << 1.0, -1.0;
  AdamW opt(store, AdamWConfig{});
  store.grad(id) << 1.0, -1.0;
  opt.step(store);
  CHECK(store.value(id)(0, 0) < 1.0);
  CHECK(store.value(id)(0, 1) > -1.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("zero-initialized last layer outputs its bias") {
  Rng rng(3);
  ParamStore store;
  Mlp mlp(store, "head", {4, 4, 3}, rng, false, true);
  const Matrix y = mlp.forward(store, random_matrix(2, 4, rng));
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}
