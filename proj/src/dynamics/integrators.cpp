#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "clof/dynamics.hpp"

namespace clof::dynamics {

namespace {

void check_finite(const std::vector<Vec3>& x, const std::vector<Vec3>& v, int step) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!is_finite(x[i]) || !is_finite(v[i])) {
      throw std::runtime_error("leapfrog: non-finite state at step " + std::to_string(step));
    }
  }
}

/// Solves v - s (v x B) = rhs.
Vec3 solve_lorentz_kick(double s, const Vec3& B, const Vec3& rhs) {
  // v x B = K v
  Mat3 m = Mat3::identity();
  m(0, 1) -= s * B.z;
  m(0, 2) += s * B.y;
  m(1, 0) += s * B.z;
  m(1, 2) -= s * B.x;
  m(2, 0) -= s * B.y;
  m(2, 1) += s * B.x;
  const double d = m.det();
  auto col = [&](int c) { return Vec3{m(0, c), m(1, c), m(2, c)}; };
  // Cramer's rule.
  const Vec3 c0 = col(0), c1 = col(1), c2 = col(2);
  return {dot(rhs, cross(c1, c2)) / d, dot(c0, cross(rhs, c2)) / d, dot(c0, cross(c1, rhs)) / d};
}

}  // namespace

Trajectory leapfrog_simulate(const ForceField& field, const SystemState& state0, double dt,
                             int n_steps, bool record_velocities) {
  if (!(dt > 0.0)) throw std::invalid_argument("leapfrog: dt must be > 0");
  if (n_steps < 0) throw std::invalid_argument("leapfrog: negative step count");
  state0.validate();
  field.validate();
  SystemState s = state0;
  const int n = s.size();
  Trajectory traj;
  traj.dt = dt;
  traj.positions.reserve(n_steps + 1);
  traj.positions.push_back(s.positions);
  if (record_velocities) {
    traj.velocities.reserve(n_steps + 1);
    traj.velocities.push_back(s.velocities);
  }
  const bool lorentz = field.velocity_dependent();
  ForceField static_part = field;
  if (lorentz) static_part.B = Vec3{};

  std::vector<Vec3> acc = acceleration(field, s);
  for (int step = 1; step <= n_steps; ++step) {
    for (int i = 0; i < n; ++i) {
      s.velocities[i] += (0.5 * dt) * acc[i];
      s.positions[i] += dt * s.velocities[i];
    }
    if (lorentz) {
      const std::vector<Vec3> f = acceleration(static_part, s);
      for (int i = 0; i < n; ++i) {
        const Vec3 rhs = s.velocities[i] + (0.5 * dt) * f[i];
        s.velocities[i] = solve_lorentz_kick(0.5 * dt * s.charges[i], field.B, rhs);
        acc[i] = f[i] + lorentz_term(s.charges[i], s.velocities[i], field.B);
      }
    } else {
      acc = acceleration(field, s);
      for (int i = 0; i < n; ++i) s.velocities[i] += (0.5 * dt) * acc[i];
    }
    check_finite(s.positions, s.velocities, step);
    traj.positions.push_back(s.positions);
    if (record_velocities) traj.velocities.push_back(s.velocities);
  }
  return traj;
}

Trajectory slice(const Trajectory& t, int begin, int end) {
  if (begin < 0 || end > t.frames() || begin > end) throw std::out_of_range("slice: bad range");
  Trajectory out;
  out.dt = t.dt;
  out.positions.assign(t.positions.begin() + begin, t.positions.begin() + end);
  if (!t.velocities.empty()) out.velocities.assign(t.velocities.begin() + begin, t.velocities.begin() + end);
  return out;
}

// ---------------------------------------------------------------------------

State Dopri5Solution::at(double time) const {
  if (t.empty() || time < t.front() || time > t.back()) {
    throw std::out_of_range("dopri5: dense output outside the integrated span");
  }
  auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t k = it == t.end() ? t.size() - 1 : static_cast<std::size_t>(it - t.begin());
  if (k == 0) return y.front();
  const std::size_t j = k - 1;
  const double h = t[k] - t[j];
  const double s = (time - t[j]) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  State out(y[j].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = h00 * y[j][i] + h10 * h * f[j][i] + h01 * y[k][i] + h11 * h * f[k][i];
  }
  return out;
}

namespace {

double rms_norm(const State& v, const State& scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = v[i] / scale[i];
    s += r * r;
  }
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

double initial_step(const OdeFn& f, double t0, const State& y0, const State& f0, double span,
                    const Dopri5Options& o, long& evals) {
  State sc(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) sc[i] = o.atol + o.rtol * std::abs(y0[i]);
  const double d0 = rms_norm(y0, sc);
  const double d1 = rms_norm(f0, sc);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  State y1(y0.size()), f1(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) y1[i] = y0[i] + h0 * f0[i];
  f(t0 + h0, y1, f1);
  ++evals;
  State df(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) df[i] = f1[i] - f0[i];
  const double d2 = rms_norm(df, sc) / h0;
  const double m = std::max(d1, d2);
  const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 0.2);
  return std::min({100 * h0, h1, span});
}

}  // namespace

Dopri5Solution dopri5_integrate(const OdeFn& f, const State& y0, double t0, double t1,
                                const Dopri5Options& o) {
  if (!(o.rtol > 0.0) || !(o.atol > 0.0)) throw std::invalid_argument("dopri5: tolerances must be > 0");
  if (!(t1 >= t0)) throw std::invalid_argument("dopri5: t1 must be >= t0");
  using T = Dopri5Tableau;
  constexpr double kSafety = 0.9;
  constexpr double kMinFactor = 0.2;
  constexpr double kMaxFactor = 10.0;

  Dopri5Solution sol;
  const std::size_t n = y0.size();
  State f0(n);
  f(t0, y0, f0);
  sol.evaluations = 1;
  sol.t.push_back(t0);
  sol.y.push_back(y0);
  sol.f.push_back(f0);
  const double span = t1 - t0;
  if (span == 0.0) return sol;

  std::vector<double> stops;
  for (double s : o.stops) {
    if (s > t0 && s < t1) stops.push_back(s);
  }
  stops.push_back(t1);
  std::sort(stops.begin(), stops.end());
  std::size_t next_stop = 0;

  double h = o.h0 > 0.0 ? std::min(o.h0, span) : initial_step(f, t0, y0, f0, span, o, sol.evaluations);
  if (o.h_max > 0.0) h = std::min(h, o.h_max);

  std::array<State, 7> k;
  for (auto& ki : k) ki.resize(n);
  State ytmp(n), y5(n), sc(n);
  double t = t0;
  State y = y0;
  k[0] = f0;
  long steps = 0;
  while (t < t1) {
    if (++steps > o.max_steps) throw std::runtime_error("dopri5: too many steps");
    if (h < 1e-14 * span) throw std::runtime_error("dopri5: step size underflow at t = " + std::to_string(t));
    while (next_stop < stops.size() && stops[next_stop] <= t) ++next_stop;
    const double target = stops[next_stop];
    bool clipped = false;
    double hs = h;
    if (t + hs >= target) {
      hs = target - t;
      clipped = true;
    }
    for (int s = 1; s < 7; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int r = 0; r < s; ++r) acc += T::a[s][r] * k[r][i];
        ytmp[i] = y[i] + hs * acc;
      }
      if (s == 6) y5 = ytmp;
      f(t + T::c[s] * hs, ytmp, k[s]);
    }
    sol.evaluations += 6;
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (int s = 0; s < 7; ++s) e += (T::b5[s] - T::b4[s]) * k[s][i];
      e *= hs;
      const double scale = o.atol + o.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err += (e / scale) * (e / scale);
    }
    err = n == 0 ? 0.0 : std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) {
      ++sol.rejected;
      h = hs * kMinFactor;
      continue;
    }
    if (err <= 1.0) {
      t = clipped ? target : t + hs;
      y = y5;
      k[0] = k[6];
      sol.t.push_back(t);
      sol.y.push_back(y);
      sol.f.push_back(k[6]);
      ++sol.accepted;
      const double factor = err == 0.0 ? kMaxFactor
                                       : std::clamp(kSafety * std::pow(err, -0.2), kMinFactor, kMaxFactor);
      h = clipped ? std::max(h, hs * factor) : hs * factor;
    } else {
      ++sol.rejected;
      h = hs * std::max(kMinFactor, kSafety * std::pow(err, -0.2));
    }
    if (o.h_max > 0.0) h = std::min(h, o.h_max);
  }
  return sol;
}

// ---------------------------------------------------------------------------

State pack_state(const std::vector<Vec3>& x, const std::vector<Vec3>& v) {
  if (x.size() != v.size()) throw std::invalid_argument("pack_state: size mismatch");
  State y(6 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      y[3 * i + c] = x[i][c];
      y[3 * x.size() + 3 * i + c] = v[i][c];
    }
  }
  return y;
}

void unpack_state(const State& y, std::vector<Vec3>& x, std::vector<Vec3>& v) {
  if (y.size() % 6 != 0) throw std::invalid_argument("unpack_state: bad length");
  const std::size_t n = y.size() / 6;
  x.resize(n);
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = {y[3 * i], y[3 * i + 1], y[3 * i + 2]};
    v[i] = {y[3 * n + 3 * i], y[3 * n + 3 * i + 1], y[3 * n + 3 * i + 2]};
  }
}

Rollout neural_ode_rollout(const AccelFn& accel, const std::vector<Vec3>& x0,
                           const std::vector<Vec3>& v0, const std::vector<double>& times,
                           const Dopri5Options& options) {
  if (times.empty()) throw std::invalid_argument("rollout: no times");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("rollout: times must increase strictly");
  }
  const std::size_t n = x0.size();
  std::vector<Vec3> x, v, a(n);
  OdeFn f = [&](double, const State& y, State& dy) {
    unpack_state(y, x, v);
    a.assign(n, Vec3{});
    accel(x, v, a);
    if (a.size() != n) throw std::invalid_argument("rollout: acceleration size mismatch");
    dy.resize(y.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        dy[3 * i + c] = v[i][c];
        dy[3 * n + 3 * i + c] = a[i][c];
      }
    }
  };
  Dopri5Options o = options;
  o.stops.assign(times.begin() + 1, times.end());
  const Dopri5Solution sol = dopri5_integrate(f, pack_state(x0, v0), times.front(), times.back(), o);
  Rollout r;
  r.step_times = sol.t;
  std::size_t j = 0;
  for (double t : times) {
    while (j < sol.t.size() && sol.t[j] < t) ++j;
    std::vector<Vec3> xs, vs;
    if (j < sol.t.size() && sol.t[j] == t) {
      unpack_state(sol.y[j], xs, vs);
    } else {
      unpack_state(sol.at(t), xs, vs);
    }
    r.positions.push_back(std::move(xs));
    r.velocities.push_back(std::move(vs));
  }
  return r;
}

}  // namespace clof::dynamics
