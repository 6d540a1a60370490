#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace clof {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> m{};

  static constexpr Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
  static constexpr Mat3 zero() { return Mat3{}; }

  constexpr double operator()(std::size_t r, std::size_t c) const { return m[3 * r + c]; }
  constexpr double& operator()(std::size_t r, std::size_t c) { return m[3 * r + c]; }

  constexpr Mat3 transposed() const {
    return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  constexpr double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& r, const Vec3& v);
Mat3 operator+(const Mat3& a, const Mat3& b);
Mat3 operator-(const Mat3& a, const Mat3& b);
Mat3 operator*(double s, const Mat3& a);

/// u v^T
Mat3 outer(const Vec3& u, const Vec3& v);
/// Frobenius inner product sum_ij A_ij B_ij.
double frobenius_dot(const Mat3& a, const Mat3& b);
double max_abs(const Mat3& a);
/// Matrix with columns (a, b, c).
Mat3 from_columns(const Vec3& a, const Vec3& b, const Vec3& c);

inline constexpr double kDefaultFrameEps = 1e-8;

/// Right-handed orthonormal triple attached to a directed edge (i, j).
struct Frame {
  Vec3 a;
  Vec3 b;
  Vec3 c;
  bool degenerate = false;

  Frame rotated(const Mat3& g) const { return {g * a, g * b, g * c, degenerate}; }
};

/// a = (xi - xj)/(|xi - xj| + eps), b = (xi x xj)/(|xi x xj| + eps), c = a x b.
/// The degenerate flag is raised when either normalizer falls below 10 eps.
Frame equi_frame(const Vec3& xi, const Vec3& xj, double eps = kDefaultFrameEps);

/// Reverse-mode adjoint of equi_frame: given upstream gradients on (a, b, c),
/// accumulates the gradients with respect to xi and xj.
void equi_frame_vjp(const Vec3& xi, const Vec3& xj, double eps, const Vec3& da, const Vec3& db,
                    const Vec3& dc, Vec3& dxi, Vec3& dxj);

struct Centered {
  std::vector<Vec3> points;
  Vec3 centroid;
};

/// Subtracts the centroid. Throws std::invalid_argument on empty input.
Centered centralize(std::span<const Vec3> x);

inline std::array<double, 3> scalarize_vec(const Vec3& v, const Frame& f) {
  return {dot(v, f.a), dot(v, f.b), dot(v, f.c)};
}
inline Vec3 vectorize_vec(const std::array<double, 3>& k, const Frame& f) {
  return k[0] * f.a + k[1] * f.b + k[2] * f.c;
}

/// Coefficients of a (2,0)-tensor in the product basis of a frame, in the
/// order aa, bb, cc, ab, ba, ac, ca, bc, cb.
struct Tensor2Coeffs {
  std::array<double, 9> theta{};

  double& aa() { return theta[0]; }
  double& bb() { return theta[1]; }
  double& cc() { return theta[2]; }
  double& ab() { return theta[3]; }
  double& ba() { return theta[4]; }
  double& ac() { return theta[5]; }
  double& ca() { return theta[6]; }
  double& bc() { return theta[7]; }
  double& cb() { return theta[8]; }
};

/// {a(x)a, b(x)b, c(x)c, a(x)b, b(x)a, a(x)c, c(x)a, b(x)c, c(x)b}.
std::array<Mat3, 9> tensor2_frame(const Frame& f);
Tensor2Coeffs scalarize_tensor2(const Mat3& t, const Frame& f);
Mat3 vectorize_tensor2(const Tensor2Coeffs& c, const Frame& f);
/// theta_uv = s1_u * s2_v: the tensor product of two scalarized vectors.
Tensor2Coeffs tensor_product_scalars(const std::array<double, 3>& s1,
                                     const std::array<double, 3>& s2);

/// Cosine of the dihedral angle between the planes (xl - xi, xl - xj) and
/// (xl - xi, xl - xk). Throws std::domain_error if either plane is degenerate.
double dihedral_cos(const Vec3& xl, const Vec3& xi, const Vec3& xj, const Vec3& xk);

/// Truncated torsion series sum_n V_n cos(n theta), n <= 2; x = (xl, xi, xj, xk).
double torsion_energy(std::span<const Vec3, 4> x, std::span<const double> v);
/// -dE/dx for one particle by central differences, step 1e-6 (1 + |x|).
Vec3 torsion_force(std::span<const Vec3, 4> x, std::span<const double> v, std::size_t particle);

Mat3 rotation_x(double phi);
/// Haar-uniform rotation from a normalized Gaussian quaternion.
Mat3 random_rotation(std::mt19937_64& rng);
std::vector<Vec3> apply_se3(const Mat3& r, const Vec3& t, std::span<const Vec3> x);
std::vector<Vec3> reflect_central(std::span<const Vec3> x);

}  // namespace clof
