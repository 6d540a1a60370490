#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "clof/dynamics.hpp"
#include "support.hpp"

using namespace clof;
using namespace clof::dynamics;

namespace {

SystemState charged_pair() {
  SystemState s;
  s.positions = {{0, 0, 0}, {1, 0, 0}};
  s.velocities = {{0, 0, 0}, {0, 0, 0}};
  s.charges = {1, 1};
  return s;
}

}  // namespace

TEST_CASE("pair forces") {
  ForceField f;
  f.softening = 0.0;
  SystemState s = charged_pair();
  auto a = acceleration(f, s);
  CHECK(a[0].x == doctest::Approx(-1.0));  // like charges repel
  CHECK(norm(a[0] + a[1]) == 0.0);
  s.charges = {1, -1};
  a = acceleration(f, s);
  CHECK(a[0].x == doctest::Approx(1.0));

  f.kind = FieldKind::gravity;
  s.masses = {2.0, 1.0};
  a = acceleration(f, s);
  CHECK(a[0].x == doctest::Approx(1.0));
  CHECK(a[1].x == doctest::Approx(-2.0));
}

TEST_CASE("softening regularizes coincident particles") {
  ForceField f;
  SystemState s = charged_pair();
  s.positions[1] = s.positions[0];
  const auto a = acceleration(f, s);
  CHECK(is_finite(a[0]));
  CHECK(norm(a[0]) == 0.0);
}

TEST_CASE("external fields") {
  SystemState s = charged_pair();
  s.velocities[0] = {1, 0, 0};
  ForceField f;
  f.pair_terms = false;
  f.kind = FieldKind::g_es;
  CHECK(acceleration(f, s)[1] == Vec3{0, 0, kDefaultG});
  f.kind = FieldKind::l_es;
  f.B = {0, 0, 1};
  CHECK(norm(acceleration(f, s)[0] - Vec3{0, -1, 0}) < 1e-15);
  CHECK(f.velocity_dependent());
  CHECK(norm(lorentz_term(-1.0, {1, 0, 0}, {0, 0, 1}) - Vec3{0, 1, 0}) < 1e-15);
}

TEST_CASE("missing per-particle data is rejected") {
  SystemState s = charged_pair();
  s.charges.clear();
  CHECK_THROWS_AS(acceleration(ForceField{}, s), std::invalid_argument);
  ForceField g;
  g.kind = FieldKind::gravity;
  CHECK_THROWS_AS(acceleration(g, charged_pair()), std::invalid_argument);
  s.masses = {1.0, -1.0};
  CHECK_THROWS(s.validate());
  ForceField t;
  t.kind = FieldKind::torsion;
  CHECK_THROWS(acceleration(t, charged_pair()));
}

TEST_CASE("torsion field uses the dihedral force") {
  std::mt19937_64 rng(1);
  const auto x = random_torsion_configuration(rng);
  SystemState s;
  s.positions.assign(x.begin(), x.end());
  s.velocities.assign(4, Vec3{});
  ForceField f;
  f.kind = FieldKind::torsion;
  const auto a = acceleration(f, s);
  for (std::size_t p = 0; p < 4; ++p) CHECK(a[p] == torsion_force(x, f.torsion_v, p));
}

TEST_CASE("leapfrog is exact for constant acceleration") {
  SystemState s = charged_pair();
  s.velocities = {{0.5, -0.25, 1.0}, {0, 0, 0}};
  ForceField f;
  f.kind = FieldKind::g_es;
  f.pair_terms = false;
  const double dt = 1e-2;
  const int n = 300;
  const auto t = leapfrog_simulate(f, s, dt, n);
  REQUIRE(t.frames() == n + 1);
  const double T = dt * n;
  const Vec3 want = s.velocities[0] * T + Vec3{0, 0, 0.5 * kDefaultG * T * T};
  CHECK(norm(t.positions.back()[0] - want) < 1e-12);
  CHECK(norm(t.velocities.back()[0] - (s.velocities[0] + Vec3{0, 0, kDefaultG * T})) < 1e-12);
}

TEST_CASE("leapfrog conserves momentum for pair forces") {
  std::mt19937_64 rng(2);
  const SystemState s = random_state(FieldKind::es, 5, rng);
  const auto t = leapfrog_simulate(ForceField{}, s, 1e-3, 5000);
  SystemState end = s;
  end.positions = t.positions.back();
  end.velocities = t.velocities.back();
  CHECK(norm(total_momentum(end) - total_momentum(s)) < 1e-9);
}

TEST_CASE("magnetic gyration") {
  SystemState s = charged_pair();
  s.velocities[0] = {1, 0, 0};
  ForceField f;
  f.kind = FieldKind::l_es;
  f.pair_terms = false;
  f.B = {0, 0, 1};
  const double dt = 1e-3;
  const auto t = leapfrog_simulate(f, s, dt, 1000);
  // q = 1, B = z: v(t) = (cos t, -sin t, 0)
  CHECK(norm(t.velocities.back()[0] - Vec3{std::cos(1.0), -std::sin(1.0), 0}) < 1e-5);
  CHECK(norm(t.positions.back()[0] - Vec3{std::sin(1.0), std::cos(1.0) - 1.0, 0}) < 1e-5);
}

TEST_CASE("non-finite states name the step") {
  SystemState s = charged_pair();
  s.positions[1] = s.positions[0];
  ForceField f;
  f.softening = 0.0;
  try {
    leapfrog_simulate(f, s, 1e-3, 10);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("slice keeps a window") {
  const auto t = leapfrog_simulate(ForceField{}, charged_pair(), 1e-3, 10);
  const auto w = slice(t, 3, 8);
  CHECK(w.frames() == 5);
  CHECK(w.positions[0] == t.positions[3]);
  CHECK_THROWS(slice(t, 8, 20));
}

TEST_CASE("dopri5 integrates exp") {
  const OdeFn f = [](double, const State& y, State& dy) { dy = y; };
  const auto sol = dopri5_integrate(f, {1.0}, 0.0, 1.0, {});
  CHECK(std::abs(sol.final_state()[0] - std::exp(1.0)) < 1e-6);
  CHECK(sol.t.back() == 1.0);
  CHECK(sol.accepted == static_cast<long>(sol.t.size()) - 1);
  CHECK(std::abs(sol.at(0.37)[0] - std::exp(0.37)) < 1e-6);
}

TEST_CASE("dopri5 hits requested stops") {
  const OdeFn f = [](double t, const State&, State& dy) { dy = {std::cos(t)}; };
  Dopri5Options o;
  o.stops = {0.1, 0.25, 0.7};
  const auto sol = dopri5_integrate(f, {0.0}, 0.0, 1.0, o);
  for (double s : o.stops) CHECK(std::find(sol.t.begin(), sol.t.end(), s) != sol.t.end());
}

TEST_CASE("dopri5 errors") {
  const OdeFn f = [](double, const State& y, State& dy) { dy = {y[0] * y[0]}; };
  Dopri5Options bad;
  bad.rtol = 0.0;
  CHECK_THROWS_AS(dopri5_integrate(f, {1.0}, 0.0, 1.0, bad), std::invalid_argument);
  CHECK_THROWS_AS(dopri5_integrate(f, {1.0}, 0.0, 2.0, {}), std::runtime_error);  // blows up at t = 1
}

TEST_CASE("second-order rollout of a harmonic oscillator") {
  const AccelFn spring = [](const std::vector<Vec3>& x, const std::vector<Vec3>&, std::vector<Vec3>& a) {
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = -1.0 * x[i];
  };
  const auto r = neural_ode_rollout(spring, {{1, 0, 0}}, {{0, 1, 0}}, {0.0, 0.5, 1.0, 2.0});
  REQUIRE(r.positions.size() == 4);
  CHECK(r.positions[0][0] == Vec3{1, 0, 0});
  CHECK(norm(r.positions[3][0] - Vec3{std::cos(2.0), std::sin(2.0), 0}) < 1e-6);
  CHECK_THROWS(neural_ode_rollout(spring, {{1, 0, 0}}, {{0, 1, 0}}, {0.0, 0.5, 0.5}));
}

TEST_CASE("state packing") {
  const std::vector<Vec3> x{{1, 2, 3}, {4, 5, 6}}, v{{7, 8, 9}, {10, 11, 12}};
  const State y = pack_state(x, v);
  CHECK(y[3] == 4.0);
  CHECK(y[6] == 7.0);
  std::vector<Vec3> x2, v2;
  unpack_state(y, x2, v2);
  CHECK(x2 == x);
  CHECK(v2 == v);
}

TEST_CASE("initial conditions") {
  auto r1 = trajectory_rng(42, 3), r2 = trajectory_rng(42, 3), r3 = trajectory_rng(42, 4);
  CHECK(r1() == r2());
  CHECK(r1() != r3());
  std::mt19937_64 rng(5);
  const SystemState es = random_state(FieldKind::es, 6, rng);
  for (double q : es.charges) CHECK(std::abs(q) == 1.0);
  const SystemState g = random_state(FieldKind::gravity, 6, rng);
  CHECK(g.charges.empty());
  for (double m : g.masses) CHECK(m == 1.0);
  for (int k = 0; k < 50; ++k) {
    const auto x = random_torsion_configuration(rng, 0.3);
    CHECK(norm(cross(x[0] - x[1], x[0] - x[2])) >= 0.3);
    CHECK(norm(cross(x[0] - x[1], x[0] - x[3])) >= 0.3);
  }
}

TEST_CASE("energy of a charged pair") {
  ForceField f;
  f.softening = 0.0;
  SystemState s = charged_pair();
  s.velocities[0] = {2, 0, 0};
  CHECK(kinetic_energy(s) == doctest::Approx(2.0));
  CHECK(potential_energy(f, s) == doctest::Approx(1.0));
}
