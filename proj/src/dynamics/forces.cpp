#include <cmath>
#include <stdexcept>

#include "clof/dynamics.hpp"

namespace clof::dynamics {

std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::es: return "es";
    case FieldKind::g_es: return "g_es";
    case FieldKind::l_es: return "l_es";
    case FieldKind::gravity: return "gravity";
    case FieldKind::torsion: return "torsion";
  }
  return "?";
}

FieldKind parse_field_kind(const std::string& s) {
  if (s == "es") return FieldKind::es;
  if (s == "g_es") return FieldKind::g_es;
  if (s == "l_es") return FieldKind::l_es;
  if (s == "gravity") return FieldKind::gravity;
  if (s == "torsion") return FieldKind::torsion;
  throw std::invalid_argument("unknown system kind: " + s);
}

void SystemState::validate() const {
  const auto n = positions.size();
  if (velocities.size() != n) throw std::invalid_argument("state: velocity count differs");
  if (!charges.empty() && charges.size() != n) throw std::invalid_argument("state: charge count differs");
  if (!masses.empty() && masses.size() != n) throw std::invalid_argument("state: mass count differs");
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(positions[i]) || !is_finite(velocities[i])) {
      throw std::invalid_argument("state: non-finite entry");
    }
  }
  for (double m : masses) {
    if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("state: masses must be > 0");
  }
}

void ForceField::validate() const {
  if (!(softening >= 0.0)) throw std::invalid_argument("force field: softening must be >= 0");
  if (kind == FieldKind::torsion && torsion_v.size() > 2) {
    throw std::invalid_argument("force field: torsion series is truncated at n <= 2");
  }
}

Vec3 lorentz_term(double q, const Vec3& v, const Vec3& B) { return q * cross(v, B); }

namespace {

double mass(const SystemState& s, int i) { return s.masses.empty() ? 1.0 : s.masses[i]; }

void require_charges(const SystemState& s) {
  if (s.charges.empty()) throw std::invalid_argument("acceleration: charges required for this system");
}

}  // namespace

std::vector<Vec3> acceleration(const ForceField& field, const SystemState& state) {
  field.validate();
  const int n = state.size();
  if (static_cast<int>(state.velocities.size()) != n) {
    throw std::invalid_argument("acceleration: velocity count differs");
  }
  std::vector<Vec3> acc(n);
  if (field.kind == FieldKind::torsion) {
    if (n < 4) throw std::invalid_argument("acceleration: torsion needs 4 particles");
    const std::span<const Vec3, 4> x(state.positions.data(), 4);
    for (int p = 0; p < 4; ++p) acc[p] = torsion_force(x, field.torsion_v, p) / mass(state, p);
    return acc;
  }
  if (n < 2) throw std::invalid_argument("acceleration: need at least 2 particles");
  const double s2 = field.softening * field.softening;
  if (field.kind == FieldKind::gravity) {
    if (state.masses.empty()) throw std::invalid_argument("acceleration: masses required for gravity");
  } else {
    require_charges(state);
  }
  if (field.pair_terms) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const Vec3 d = state.positions[i] - state.positions[j];
        const double r2 = dot(d, d) + s2;
        const double inv3 = 1.0 / (r2 * std::sqrt(r2));
        if (field.kind == FieldKind::gravity) {
          acc[i] -= (state.masses[j] * inv3) * d;
          acc[j] += (state.masses[i] * inv3) * d;
        } else {
          const Vec3 f = (state.charges[i] * state.charges[j] * inv3) * d;
          acc[i] += f;
          acc[j] -= f;
        }
      }
    }
  }
  if (field.kind == FieldKind::g_es) {
    for (auto& a : acc) a.z += field.g;
  } else if (field.kind == FieldKind::l_es) {
    for (int i = 0; i < n; ++i) acc[i] += lorentz_term(state.charges[i], state.velocities[i], field.B);
  }
  return acc;
}

double kinetic_energy(const SystemState& s) {
  double e = 0.0;
  for (int i = 0; i < s.size(); ++i) e += 0.5 * mass(s, i) * dot(s.velocities[i], s.velocities[i]);
  return e;
}

double potential_energy(const ForceField& field, const SystemState& s) {
  const double s2 = field.softening * field.softening;
  double e = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    for (int j = i + 1; j < s.size(); ++j) {
      const Vec3 d = s.positions[i] - s.positions[j];
      const double inv = 1.0 / std::sqrt(dot(d, d) + s2);
      if (field.kind == FieldKind::gravity) {
        e -= s.masses.at(i) * s.masses.at(j) * inv;
      } else if (field.kind != FieldKind::torsion) {
        e += s.charges.at(i) * s.charges.at(j) * inv;
      }
    }
  }
  return e;
}

Vec3 total_momentum(const SystemState& s) {
  Vec3 p;
  for (int i = 0; i < s.size(); ++i) p += mass(s, i) * s.velocities[i];
  return p;
}

std::mt19937_64 trajectory_rng(std::uint64_t base_seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return std::mt19937_64(seq);
}

SystemState random_state(FieldKind kind, int n, std::mt19937_64& rng) {
  if (n < 2) throw std::invalid_argument("random_state: need at least 2 particles");
  SystemState s;
  if (kind == FieldKind::torsion) {
    if (n != 4) throw std::invalid_argument("random_state: torsion systems have 4 particles");
    const auto x = random_torsion_configuration(rng);
    s.positions.assign(x.begin(), x.end());
    s.velocities.assign(4, Vec3{});
    return s;
  }
  std::normal_distribution<double> normal(0.0, kInitStd);
  s.positions.resize(n);
  s.velocities.resize(n);
  for (auto& p : s.positions) p = {normal(rng), normal(rng), normal(rng)};
  for (auto& v : s.velocities) v = {normal(rng), normal(rng), normal(rng)};
  if (kind == FieldKind::gravity) {
    s.masses.assign(n, 1.0);
  } else {
    s.charges.resize(n);
    for (auto& q : s.charges) q = (rng() & 1u) ? 1.0 : -1.0;
  }
  return s;
}

std::array<Vec3, 4> random_torsion_configuration(std::mt19937_64& rng, double min_normal) {
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::array<Vec3, 4> x;
    for (auto& p : x) p = {normal(rng), normal(rng), normal(rng)};
    const Vec3 li = x[0] - x[1];
    const double n1 = norm(cross(li, x[0] - x[2]));
    const double n2 = norm(cross(li, x[0] - x[3]));
    if (n1 >= min_normal && n2 >= min_normal) return x;
  }
  throw std::runtime_error("random_torsion_configuration: rejection sampling failed");
}

}  // namespace clof::dynamics
