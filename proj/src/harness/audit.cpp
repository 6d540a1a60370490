#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "clof/harness.hpp"

namespace clof::harness {

bool AuditReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const AuditEntry& e) { return e.passed; });
}

const AuditEntry* AuditReport::find(const std::string& property) const {
  for (const auto& e : entries) {
    if (e.property == property) return &e;
  }
  return nullptr;
}

namespace {

double scale_of(const Matrix& m) { return std::max(1.0, m.cwiseAbs().maxCoeff()); }

Matrix centered(const Matrix& x) { return x.rowwise() - x.colwise().mean(); }

// Counts entries whose sign pattern under x -> -x departs from a: -, b: +, c: -,
// and projections (x.a, x.b, x.c): +, -, +.
long reflection_violations(const models::SystemInput& s, double eps, long* scalar_violations) {
  models::SystemInput neg = s;
  neg.positions = -s.positions;
  const models::Batch b = models::collate(s);
  const models::Batch nb = models::collate(neg);
  const Matrix x = centered(b.positions);
  const Matrix nx = centered(nb.positions);
  const models::FrameSet f = models::build_frames(b, x, eps);
  const models::FrameSet g = models::build_frames(nb, nx, eps);
  long bad = 0;
  long sbad = 0;
  for (int e = 0; e < b.num_edges(); ++e) {
    for (int k = 0; k < 3; ++k) {
      bad += g.a(e, k) != -f.a(e, k);
      bad += g.b(e, k) != f.b(e, k);
      bad += g.c(e, k) != -f.c(e, k);
    }
    const auto i = b.receiver[e];
    const double pa = x.row(i).dot(f.a.row(e)), pb = x.row(i).dot(f.b.row(e)), pc = x.row(i).dot(f.c.row(e));
    const double qa = nx.row(i).dot(g.a.row(e)), qb = nx.row(i).dot(g.b.row(e)), qc = nx.row(i).dot(g.c.row(e));
    sbad += (qa != pa) + (qb != -pb) + (qc != pc);
  }
  *scalar_violations += sbad;
  return bad;
}

}  // namespace

AuditReport audit_equivariance(const models::Model& model, const std::vector<models::SystemInput>& inputs,
                               int n_rotations, std::uint64_t seed) {
  if (inputs.empty()) throw std::invalid_argument("audit: no inputs");
  AuditReport rep;
  nn::Rng rng(seed);
  const models::VectorFn fn = models::as_vector_fn(model);
  const bool positions_out = model.config().output == models::VectorOutput::positions;

  const double deq = models::equivariance_error(fn, inputs, n_rotations, rng);
  rep.entries.push_back({"rotation", deq, kRotationTolerance, deq <= kRotationTolerance});

  std::normal_distribution<double> normal(0.0, 1.0);
  double trans = 0.0;
  double perm_err = 0.0;
  for (const auto& s : inputs) {
    const Matrix y = fn(s);
    const Vec3 t{normal(rng), normal(rng), normal(rng)};
    Matrix expect = y;
    if (positions_out) expect.rowwise() += Eigen::RowVector3d(t.x, t.y, t.z);
    trans = std::max(trans, (fn(models::translated(s, t)) - expect).cwiseAbs().maxCoeff() / scale_of(y));

    std::vector<int> p(static_cast<std::size_t>(s.size()));
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    const Matrix yp = fn(models::permuted(s, p));
    for (int k = 0; k < s.size(); ++k) {
      perm_err = std::max(perm_err, (yp.row(k) - y.row(p[k])).cwiseAbs().maxCoeff() / scale_of(y));
    }
  }
  rep.entries.push_back({"translation", trans, kTranslationTolerance, trans <= kTranslationTolerance});
  rep.entries.push_back({"permutation", perm_err, kPermutationTolerance, perm_err <= kPermutationTolerance});

  long frame_bad = 0;
  long scalar_bad = 0;
  for (const auto& s : inputs) frame_bad += reflection_violations(s, model.config().frame_eps, &scalar_bad);
  rep.entries.push_back({"reflection_frame", static_cast<double>(frame_bad), 0.0, frame_bad == 0});
  rep.entries.push_back({"reflection_scalars", static_cast<double>(scalar_bad), 0.0, scalar_bad == 0});
  return rep;
}

void perturb_parameters(models::Model& model, std::uint64_t seed, double std) {
  nn::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std);
  for (auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += normal(rng);
  }
}

std::string format_report(const AuditReport& r) {
  std::ostringstream os;
  for (const auto& e : r.entries) {
    os << (e.passed ? "PASS " : "FAIL ") << e.property << " measured=" << e.measured << " tol=" << e.tolerance
       << "\n";
  }
  return os.str();
}

}  // namespace clof::harness
