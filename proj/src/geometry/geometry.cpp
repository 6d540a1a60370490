#include "clof/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace clof {

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    }
  }
  return r;
}

Vec3 operator*(const Mat3& r, const Vec3& v) {
  return {r(0, 0) * v.x + r(0, 1) * v.y + r(0, 2) * v.z,
          r(1, 0) * v.x + r(1, 1) * v.y + r(1, 2) * v.z,
          r(2, 0) * v.x + r(2, 1) * v.y + r(2, 2) * v.z};
}

Mat3 operator+(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = a.m[k] + b.m[k];
  return r;
}

Mat3 operator-(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = a.m[k] - b.m[k];
  return r;
}

Mat3 operator*(double s, const Mat3& a) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = s * a.m[k];
  return r;
}

Mat3 outer(const Vec3& u, const Vec3& v) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = u[i] * v[j];
  }
  return r;
}

double frobenius_dot(const Mat3& a, const Mat3& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 9; ++k) s += a.m[k] * b.m[k];
  return s;
}

double max_abs(const Mat3& a) {
  double r = 0.0;
  for (double v : a.m) r = std::max(r, std::abs(v));
  return r;
}

Mat3 from_columns(const Vec3& a, const Vec3& b, const Vec3& c) {
  return Mat3{{a.x, b.x, c.x, a.y, b.y, c.y, a.z, b.z, c.z}};
}

Frame equi_frame(const Vec3& xi, const Vec3& xj, double eps) {
  const Vec3 d = xi - xj;
  const Vec3 cr = cross(xi, xj);
  const double nd = norm(d);
  const double nc = norm(cr);
  Frame f;
  f.a = d / (nd + eps);
  f.b = cr / (nc + eps);
  f.c = cross(f.a, f.b);
  f.degenerate = nc < 10.0 * eps || nd < 10.0 * eps;
  return f;
}

namespace {

// Adjoint of u / (|u| + eps).
Vec3 normalize_vjp(const Vec3& u, double eps, const Vec3& dout) {
  const double n = norm(u);
  const double s = n + eps;
  Vec3 du = dout / s;
  if (n > 0.0) du -= (dot(u, dout) / (n * s * s)) * u;
  return du;
}

}  // namespace

void equi_frame_vjp(const Vec3& xi, const Vec3& xj, double eps, const Vec3& da, const Vec3& db,
                    const Vec3& dc, Vec3& dxi, Vec3& dxj) {
  const Vec3 d = xi - xj;
  const Vec3 cr = cross(xi, xj);
  const Vec3 a = d / (norm(d) + eps);
  const Vec3 b = cr / (norm(cr) + eps);
  // c = a x b
  const Vec3 da_total = da + cross(b, dc);
  const Vec3 db_total = db + cross(dc, a);
  const Vec3 dd = normalize_vjp(d, eps, da_total);
  const Vec3 dcr = normalize_vjp(cr, eps, db_total);
  dxi += dd + cross(xj, dcr);
  dxj += cross(dcr, xi) - dd;
}

Centered centralize(std::span<const Vec3> x) {
  if (x.empty()) throw std::invalid_argument("centralize: empty point set");
  Vec3 c;
  for (const auto& p : x) c += p;
  c = c / static_cast<double>(x.size());
  Centered out{{}, c};
  out.points.reserve(x.size());
  for (const auto& p : x) out.points.push_back(p - c);
  return out;
}

std::array<Mat3, 9> tensor2_frame(const Frame& f) {
  return {outer(f.a, f.a), outer(f.b, f.b), outer(f.c, f.c), outer(f.a, f.b), outer(f.b, f.a),
          outer(f.a, f.c), outer(f.c, f.a), outer(f.b, f.c), outer(f.c, f.b)};
}

Tensor2Coeffs scalarize_tensor2(const Mat3& t, const Frame& f) {
  const auto basis = tensor2_frame(f);
  Tensor2Coeffs c;
  for (std::size_t k = 0; k < 9; ++k) c.theta[k] = frobenius_dot(t, basis[k]);
  return c;
}

Mat3 vectorize_tensor2(const Tensor2Coeffs& c, const Frame& f) {
  const auto basis = tensor2_frame(f);
  Mat3 t;
  for (std::size_t k = 0; k < 9; ++k) t = t + c.theta[k] * basis[k];
  return t;
}

Tensor2Coeffs tensor_product_scalars(const std::array<double, 3>& s1,
                                     const std::array<double, 3>& s2) {
  // Index pairs in basis order aa, bb, cc, ab, ba, ac, ca, bc, cb.
  static constexpr std::array<std::array<int, 2>, 9> kPairs{
      {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}}};
  Tensor2Coeffs c;
  for (std::size_t k = 0; k < 9; ++k) c.theta[k] = s1[kPairs[k][0]] * s2[kPairs[k][1]];
  return c;
}

double dihedral_cos(const Vec3& xl, const Vec3& xi, const Vec3& xj, const Vec3& xk) {
  const Vec3 li = xl - xi;
  const Vec3 lj = xl - xj;
  const Vec3 lk = xl - xk;
  const Vec3 n1 = cross(li, lj);
  const Vec3 n2 = cross(li, lk);
  const double l1 = norm(n1);
  const double l2 = norm(n2);
  // Relative to |u||v| the normal length is sin of the in-plane angle.
  if (!(l1 > 1e-10 * norm(li) * norm(lj)) || !(l2 > 1e-10 * norm(li) * norm(lk))) {
    throw std::domain_error("dihedral_cos: degenerate plane (colinear triple)");
  }
  return dot(n1, n2) / (l1 * l2);
}

double torsion_energy(std::span<const Vec3, 4> x, std::span<const double> v) {
  if (v.size() > 2) throw std::invalid_argument("torsion_energy: at most two Fourier terms");
  const double c = dihedral_cos(x[0], x[1], x[2], x[3]);
  double e = 0.0;
  if (!v.empty()) e += v[0] * c;
  if (v.size() > 1) e += v[1] * (2.0 * c * c - 1.0);
  return e;
}

Vec3 torsion_force(std::span<const Vec3, 4> x, std::span<const double> v, std::size_t particle) {
  if (particle >= 4) throw std::out_of_range("torsion_force: particle index");
  std::array<Vec3, 4> work{x[0], x[1], x[2], x[3]};
  const double h = 1e-6 * (1.0 + norm(x[particle]));
  Vec3 f;
  for (std::size_t k = 0; k < 3; ++k) {
    const double orig = work[particle][k];
    work[particle][k] = orig + h;
    const double ep = torsion_energy(work, v);
    work[particle][k] = orig - h;
    const double em = torsion_energy(work, v);
    work[particle][k] = orig;
    f[k] = -(ep - em) / (2.0 * h);
  }
  return f;
}

Mat3 rotation_x(double phi) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  double w = 0, x = 0, y = 0, z = 0, len = 0;
  do {
    w = n01(rng);
    x = n01(rng);
    y = n01(rng);
    z = n01(rng);
    len = std::sqrt(w * w + x * x + y * y + z * z);
  } while (len < 1e-12);
  w /= len;
  x /= len;
  y /= len;
  z /= len;
  return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
               2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

std::vector<Vec3> apply_se3(const Mat3& r, const Vec3& t, std::span<const Vec3> x) {
  std::vector<Vec3> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(r * p + t);
  return out;
}

std::vector<Vec3> reflect_central(std::span<const Vec3> x) {
  std::vector<Vec3> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(-p);
  return out;
}

}  // namespace clof
