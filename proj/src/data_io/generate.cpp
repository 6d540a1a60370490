#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "clof/data_io.hpp"

namespace clof::data {

int worker_count() {
  if (const char* env = std::getenv("CLOF_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

TrajectoryRecord nbody_record(const GenerateOptions& o, std::int64_t k, std::mt19937_64& rng) {
  const dynamics::FieldKind kind = field_kind(o.system);
  dynamics::SystemState s = dynamics::random_state(kind, o.n_bodies, rng);
  dynamics::ForceField field;
  field.kind = kind;
  field.softening = o.softening;
  const int steps = std::max(kSimulatedSteps, kWindowStart + o.horizon_steps);
  const dynamics::Trajectory traj = dynamics::leapfrog_simulate(field, s, o.dt, steps, true);
  const dynamics::Trajectory window = dynamics::slice(traj, kWindowStart, kWindowStart + o.horizon_steps + 1);
  TrajectoryRecord r;
  r.id = k;
  r.system = o.system;
  r.n = o.n_bodies;
  r.charges = s.charges;
  r.x0 = window.positions.front();
  r.v0 = window.velocities.front();
  r.target_x = window.positions.back();
  r.dt = o.dt;
  r.horizon_steps = o.horizon_steps;
  return r;
}

TrajectoryRecord torsion_record(const GenerateOptions& o, std::int64_t k, std::mt19937_64& rng) {
  const auto x = dynamics::random_torsion_configuration(rng, o.torsion_min_normal);
  TrajectoryRecord r;
  r.id = k;
  r.system = SystemTag::torsion;
  r.n = 4;
  r.x0.assign(x.begin(), x.end());
  r.v0.assign(4, Vec3{});
  std::vector<Vec3> f(4);
  for (std::size_t p = 0; p < 4; ++p) f[p] = torsion_force(x, o.torsion_v, p);
  r.forces = std::move(f);
  return r;
}

TrajectoryRecord pos_record(const GenerateOptions& o, std::int64_t k, std::mt19937_64& rng) {
  const PosProtocol& p = o.pos;
  dynamics::SystemState s = dynamics::random_state(dynamics::FieldKind::gravity, p.bodies, rng);
  dynamics::ForceField field;
  field.kind = dynamics::FieldKind::gravity;
  field.softening = o.softening;
  const double half = 0.5 * p.dt;
  const int samples = static_cast<int>(std::lround(p.t3 / half));
  const int steps = samples * p.substeps;
  const dynamics::Trajectory traj = dynamics::leapfrog_simulate(field, s, half / p.substeps, steps, false);
  TrajectoryRecord r;
  r.id = k;
  r.system = SystemTag::pos;
  r.n = p.observed;
  r.masses.assign(s.masses.begin(), s.masses.begin() + p.observed);
  r.x0.assign(s.positions.begin(), s.positions.begin() + p.observed);
  r.v0.assign(s.velocities.begin(), s.velocities.begin() + p.observed);
  TimeSeries ts;
  for (int i = 0; i <= samples; ++i) {
    ts.times.push_back(i * half);
    const auto& frame = traj.positions[static_cast<std::size_t>(i) * p.substeps];
    ts.positions.emplace_back(frame.begin(), frame.begin() + p.observed);
  }
  r.trajectory = std::move(ts);
  r.dt = p.dt;
  r.horizon_steps = samples;
  return r;
}

}  // namespace

TrajectoryRecord generate_record(const GenerateOptions& o, std::int64_t k) {
  std::mt19937_64 rng = dynamics::trajectory_rng(o.seed, static_cast<std::uint64_t>(k));
  switch (o.system) {
    case SystemTag::torsion: return torsion_record(o, k, rng);
    case SystemTag::pos: return pos_record(o, k, rng);
    default: return nbody_record(o, k, rng);
  }
}

Splits generate_splits(const GenerateOptions& o) {
  if (o.train < 0 || o.valid < 0 || o.test < 0) throw std::invalid_argument("generate: negative split size");
  if (o.system != SystemTag::torsion && o.system != SystemTag::pos && o.n_bodies < 2) {
    throw std::invalid_argument("generate: need at least 2 bodies");
  }
  if (!(o.dt > 0.0)) throw std::invalid_argument("generate: dt must be > 0");
  if (o.horizon_steps < 1) throw std::invalid_argument("generate: horizon_steps must be >= 1");
  const std::int64_t total = static_cast<std::int64_t>(o.train) + o.valid + o.test;
  std::vector<TrajectoryRecord> all(static_cast<std::size_t>(total));
  const int workers = std::max(1, std::min<int>(o.threads > 0 ? o.threads : worker_count(),
                                                static_cast<int>(std::max<std::int64_t>(total, 1))));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::int64_t k = next.fetch_add(1);
      if (k >= total) return;
      try {
        all[static_cast<std::size_t>(k)] = generate_record(o, k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Splits s;
  auto take = [&](std::int64_t from, int count) {
    return std::vector<TrajectoryRecord>(all.begin() + from, all.begin() + from + count);
  };
  s.train = take(0, o.train);
  s.valid = take(o.train, o.valid);
  s.test = take(static_cast<std::int64_t>(o.train) + o.valid, o.test);
  return s;
}

}  // namespace clof::data
