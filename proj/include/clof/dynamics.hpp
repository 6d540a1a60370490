#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clof/geometry.hpp"

namespace clof::dynamics {

enum class FieldKind { es, g_es, l_es, gravity, torsion };

std::string to_string(FieldKind k);
FieldKind parse_field_kind(const std::string& s);

inline constexpr double kDefaultSoftening = 1e-2;
inline constexpr double kDefaultG = 0.98;
inline constexpr Vec3 kDefaultB{0.5, 0.5, 0.5};

struct SystemState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<double> charges;  // required for es, g_es, l_es
  std::vector<double> masses;   // required for gravity

  int size() const { return static_cast<int>(positions.size()); }
  void validate() const;
};

struct ForceField {
  FieldKind kind = FieldKind::es;
  double g = kDefaultG;  // constant field (0, 0, g) for g_es
  Vec3 B = kDefaultB;
  std::vector<double> torsion_v{1.0, 0.5};
  double softening = kDefaultSoftening;
  /// Test hook: false drops the pairwise terms, leaving only external fields.
  bool pair_terms = true;

  void validate() const;
  /// Lorentz-type forces depend on velocity.
  bool velocity_dependent() const { return kind == FieldKind::l_es; }
};

std::vector<Vec3> acceleration(const ForceField& field, const SystemState& state);
/// q v x B
Vec3 lorentz_term(double q, const Vec3& v, const Vec3& B);

// ---------------------------------------------------------------------------
// Leapfrog.

struct Trajectory {
  double dt = 0.0;
  std::vector<std::vector<Vec3>> positions;   // n_steps + 1 frames
  std::vector<std::vector<Vec3>> velocities;  // same, empty when not recorded
  int frames() const { return static_cast<int>(positions.size()); }
};

/// Velocity Verlet, kick-drift-kick; every step is recorded. For a Lorentz
/// term the closing half-kick is solved exactly (it is linear in v).
/// Throws std::runtime_error naming the step on a non-finite state.
Trajectory leapfrog_simulate(const ForceField& field, const SystemState& state0, double dt,
                             int n_steps, bool record_velocities = true);

/// Frames [begin, end).
Trajectory slice(const Trajectory& t, int begin, int end);

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4).

using State = std::vector<double>;
using OdeFn = std::function<void(double t, const State& y, State& dydt)>;

struct Dopri5Tableau {
  static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr std::array<std::array<double, 6>, 7> a{{
      {0, 0, 0, 0, 0, 0},
      {1.0 / 5, 0, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  }};
  // 5th-order weights equal the last row of a (FSAL).
  static constexpr std::array<double, 7> b5{35.0 / 384, 0, 500.0 / 1113, 125.0 / 192,
                                            -2187.0 / 6784, 11.0 / 84, 0};
  static constexpr std::array<double, 7> b4{5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640,
                                            -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
};

struct Dopri5Options {
  double rtol = 1e-7;
  double atol = 1e-7;
  double h0 = 0.0;  // 0 picks a starting step automatically
  double h_max = 0.0;
  long max_steps = 1000000;
  /// Accepted steps are shortened so that these times are hit exactly.
  std::vector<double> stops;
};

struct Dopri5Solution {
  std::vector<double> t;  // accepted step boundaries, t[0] = t0
  std::vector<State> y;
  std::vector<State> f;
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;

  const State& final_state() const { return y.back(); }
  /// Cubic Hermite interpolation on the accepted step containing `time`.
  State at(double time) const;
};

/// Throws std::invalid_argument on bad tolerances and std::runtime_error on
/// step underflow (h < 1e-14 (t1 - t0)) or when max_steps is exceeded.
Dopri5Solution dopri5_integrate(const OdeFn& f, const State& y0, double t0, double t1,
                                const Dopri5Options& options = {});

// ---------------------------------------------------------------------------
// Second-order neural ODE.

/// Writes accelerations for positions x and velocities v.
using AccelFn = std::function<void(const std::vector<Vec3>& x, const std::vector<Vec3>& v,
                                   std::vector<Vec3>& a)>;

struct Rollout {
  std::vector<std::vector<Vec3>> positions;  // one entry per requested time
  std::vector<std::vector<Vec3>> velocities;
  std::vector<double> step_times;  // accepted step boundaries, including t0
};

/// Integrates (x', v') = (v, a(x, v)) from times[0]; the first entry of
/// the result is the initial state. Times must be strictly increasing.
Rollout neural_ode_rollout(const AccelFn& accel, const std::vector<Vec3>& x0,
                           const std::vector<Vec3>& v0, const std::vector<double>& times,
                           const Dopri5Options& options = {});

State pack_state(const std::vector<Vec3>& x, const std::vector<Vec3>& v);
void unpack_state(const State& y, std::vector<Vec3>& x, std::vector<Vec3>& v);

// ---------------------------------------------------------------------------
// Initial conditions.

inline constexpr double kInitStd = 0.5;

/// Independent stream for trajectory k of a dataset.
std::mt19937_64 trajectory_rng(std::uint64_t base_seed, std::uint64_t k);

/// Normal(0, 0.5^2) positions and velocities; +-1 charges for charged kinds,
/// unit masses for gravity.
SystemState random_state(FieldKind kind, int n, std::mt19937_64& rng);

/// Four positions whose dihedral planes are not close to degenerate.
std::array<Vec3, 4> random_torsion_configuration(std::mt19937_64& rng, double min_normal = 0.1);

double kinetic_energy(const SystemState& s);
/// Softened pair potential for es / gravity (external fields excluded).
double potential_energy(const ForceField& field, const SystemState& s);
Vec3 total_momentum(const SystemState& s);

}  // namespace clof::dynamics
