#include <doctest.h>

#include <stdexcept>

#include "clof/geometry.hpp"
#include "support.hpp"

using namespace clof;
using test::random_vec;

namespace {
constexpr double kTinyEps = 1e-15;
}

TEST_CASE("frame is right-handed and orthonormal") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const Frame f = equi_frame(random_vec(rng), random_vec(rng));
    CHECK(std::abs(dot(f.a, f.b)) < 1e-12);
    CHECK(std::abs(dot(f.a, f.c)) < 1e-12);
    CHECK(std::abs(dot(f.b, f.c)) < 1e-12);
    // eps shrinks |a|, |b| by eps/|d|; exact identities use a tiny eps
    const Frame g = equi_frame(random_vec(rng), random_vec(rng), kTinyEps);
    CHECK(from_columns(g.a, g.b, g.c).det() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("degenerate pairs are flagged") {
  CHECK(equi_frame({1, 1, 1}, {1, 1, 1}).degenerate);
  CHECK(equi_frame({1, 0, 0}, {2, 0, 0}).degenerate);  // colinear with the origin
  CHECK_FALSE(equi_frame({1, 0, 0}, {0, 1, 0}).degenerate);
  const Frame z = equi_frame({0, 0, 0}, {0, 0, 0});
  CHECK(norm(z.a) == 0.0);
}

TEST_CASE("centralize") {
  std::vector<Vec3> x{{1, 2, 3}, {3, 2, 1}, {-1, 5, 2}};
  const Centered c = centralize(x);
  Vec3 sum;
  for (const auto& p : c.points) sum += p;
  CHECK(norm(sum) < 1e-12);
  CHECK(norm(c.centroid - Vec3{1, 3, 2}) < 1e-15);
  CHECK_THROWS_AS(centralize(std::vector<Vec3>{}), std::invalid_argument);
}

TEST_CASE("vector scalarization round trip") {
  std::mt19937_64 rng(2);
  const Frame f = equi_frame(random_vec(rng), random_vec(rng), kTinyEps);
  const Vec3 v = random_vec(rng);
  CHECK(norm(vectorize_vec(scalarize_vec(v, f), f) - v) < 1e-12);
}

TEST_CASE("tensor basis is Frobenius-orthonormal") {
  std::mt19937_64 rng(3);
  const auto basis = tensor2_frame(equi_frame(random_vec(rng), random_vec(rng), kTinyEps));
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) CHECK(std::abs(frobenius_dot(basis[i], basis[j]) - (i == j)) < 1e-12);
}

TEST_CASE("order of tensor coefficients") {
  const Frame f = equi_frame({1, 0.2, 0}, {0, 1, 0.3});
  Tensor2Coeffs c = scalarize_tensor2(outer(f.a, f.c), f);
  CHECK(c.ac() == doctest::Approx(1.0));
  CHECK(std::abs(c.ca()) < 1e-12);
  c = scalarize_tensor2(outer(f.c, f.b), f);
  CHECK(c.cb() == doctest::Approx(1.0));
}

TEST_CASE("tensor round trip and product rule") {
  std::mt19937_64 rng(4);
  const Frame f = equi_frame(random_vec(rng), random_vec(rng), kTinyEps);
  Mat3 t;
  for (auto& e : t.m) e = random_vec(rng).x;
  CHECK(max_abs(vectorize_tensor2(scalarize_tensor2(t, f), f) - t) < 1e-12 * max_abs(t));
  const Vec3 u = random_vec(rng), w = random_vec(rng);
  const auto p = tensor_product_scalars(scalarize_vec(u, f), scalarize_vec(w, f));
  const auto q = scalarize_tensor2(outer(u, w), f);
  for (int k = 0; k < 9; ++k) CHECK(std::abs(p.theta[k] - q.theta[k]) < 1e-12);
}

TEST_CASE("dihedral cosine") {
  // Planes at a right angle around the x axis.
  CHECK(dihedral_cos({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}) == doctest::Approx(0.0));
  CHECK(dihedral_cos({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 1, 0}) == doctest::Approx(1.0));
  CHECK(dihedral_cos({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(dihedral_cos({0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 0, 1}), std::domain_error);
}

TEST_CASE("torsion energy limits") {
  const std::array<Vec3, 4> x{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0.5, 2, 0}};
  const double v1[] = {1.0};
  const double v2[] = {1.0, 0.5};
  CHECK(torsion_energy(x, v1) == doctest::Approx(1.0));
  CHECK(torsion_energy(x, v2) == doctest::Approx(1.5));
  const double v3[] = {1.0, 0.5, 0.1};
  CHECK_THROWS_AS(torsion_energy(x, v3), std::invalid_argument);
  CHECK_THROWS_AS(torsion_force(x, v2, 4), std::out_of_range);
}

TEST_CASE("rotations") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Mat3 r = random_rotation(rng);
    CHECK(max_abs(r * r.transposed() - Mat3::identity()) < 1e-12);
    CHECK(r.det() == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Mat3 rx = rotation_x(0.3);
  CHECK(rx(1, 1) == doctest::Approx(std::cos(0.3)));
  CHECK(rx(1, 2) == doctest::Approx(-std::sin(0.3)));
}

TEST_CASE("SE(3) composition law") {
  std::mt19937_64 rng(6);
  const Mat3 r1 = random_rotation(rng), r2 = random_rotation(rng);
  const Vec3 a = random_vec(rng), b = random_vec(rng);
  const std::vector<Vec3> x{random_vec(rng), random_vec(rng), random_vec(rng)};
  const auto lhs = apply_se3(r1, a, apply_se3(r2, b, x));
  const auto rhs = apply_se3(r1 * r2, r1 * b + a, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(norm(lhs[i] - rhs[i]) < 1e-12);
}

TEST_CASE("central reflection negates") {
  const std::vector<Vec3> x{{1, -2, 3}, {0, 0.5, 0}};
  const auto y = reflect_central(x);
  CHECK(y[0] == Vec3{-1, 2, -3});
  CHECK(y[1] == Vec3{-0.0, -0.5, -0.0});
}

TEST_CASE("frame adjoint matches finite differences") {
  std::mt19937_64 rng(7);
  const Vec3 xi = random_vec(rng), xj = random_vec(rng);
  const Vec3 da = random_vec(rng), db = random_vec(rng), dc = random_vec(rng);
  const double eps = 1e-8;
  auto objective = [&](const Vec3& p, const Vec3& q) {
    const Frame f = equi_frame(p, q, eps);
    return dot(f.a, da) + dot(f.b, db) + dot(f.c, dc);
  };
  Vec3 gi, gj;
  equi_frame_vjp(xi, xj, eps, da, db, dc, gi, gj);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 3; ++k) {
    Vec3 p = xi, m = xi;
    p[k] += h;
    m[k] -= h;
    CHECK(gi[k] == doctest::Approx((objective(p, xj) - objective(m, xj)) / (2 * h)).epsilon(1e-6));
    p = xj;
    m = xj;
    p[k] += h;
    m[k] -= h;
    CHECK(gj[k] == doctest::Approx((objective(xi, p) - objective(xi, m)) / (2 * h)).epsilon(1e-6));
  }
}
