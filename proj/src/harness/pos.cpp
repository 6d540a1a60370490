#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "clof/harness.hpp"
#include "common.hpp"

namespace clof::harness {

using dynamics::State;
using Tab = dynamics::Dopri5Tableau;

PosTimes pos_times(const data::PosProtocol& p) {
  const double half = 0.5 * p.dt;
  const int n1 = static_cast<int>(std::lround(p.t1 / half));
  const int n2 = static_cast<int>(std::lround(p.t2 / half));
  const int n3 = static_cast<int>(std::lround(p.t3 / half));
  PosTimes t;
  for (int i = 2; i <= n1; i += 2) t.train.push_back(i * half);
  for (int i = n1 + 2; i <= n2; i += 2) t.valid.push_back(i * half);
  for (int i = 1; i <= n1 + 1; i += 2) t.interp.push_back(i * half);
  for (int i = n2 + 2; i <= n3; i += 2) t.extrap.push_back(i * half);
  return t;
}

std::vector<Vec3> pos_positions_at(const data::TrajectoryRecord& r, double t) {
  if (!r.trajectory) throw std::invalid_argument("pos: record has no trajectory");
  const auto& ts = r.trajectory->times;
  const auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-12);
  if (it == ts.end() || std::abs(*it - t) > 1e-12) {
    throw std::out_of_range("pos: time " + std::to_string(t) + " not stored");
  }
  return r.trajectory->positions[static_cast<std::size_t>(it - ts.begin())];
}

namespace {

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("pos: no times");
  if (!(times.front() > 0.0)) throw std::invalid_argument("pos: times must be > 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("pos: times must increase strictly");
  }
}

models::Batch joint_batch(const FeatureSpec& spec, const std::vector<const data::TrajectoryRecord*>& batch) {
  std::vector<models::SystemInput> inputs;
  inputs.reserve(batch.size());
  for (const auto* r : batch) inputs.push_back(featurize(*r, spec));
  std::vector<const models::SystemInput*> ptrs;
  for (const auto& s : inputs) ptrs.push_back(&s);
  return models::collate(std::span<const models::SystemInput* const>(ptrs.data(), ptrs.size()));
}

using RowMap = Eigen::Map<const Matrix>;
using MutRowMap = Eigen::Map<Matrix>;

void load_state(models::Batch& b, const State& y) {
  const Eigen::Index n = b.num_nodes();
  b.positions = RowMap(y.data(), n, 3);
  b.vectors[0] = RowMap(y.data() + 3 * n, n, 3);
}

State initial_state(const models::Batch& b) {
  const Eigen::Index n = b.num_nodes();
  State y(static_cast<std::size_t>(6 * n));
  MutRowMap(y.data(), n, 3) = b.positions;
  MutRowMap(y.data() + 3 * n, n, 3) = b.vectors[0];
  return y;
}

void derivative(const models::Model& model, models::Batch& b, const State& y, State& dy,
                std::unique_ptr<models::Tape>* tape) {
  const Eigen::Index n = b.num_nodes();
  load_state(b, y);
  const Matrix a = model.forward(b, tape).vectors;
  dy.resize(y.size());
  std::copy(y.begin() + 3 * n, y.end(), dy.begin());
  MutRowMap(dy.data() + 3 * n, n, 3) = a;
}

dynamics::Dopri5Solution joint_solve(const models::Model& model, models::Batch& b, const std::vector<double>& times,
                                     double rtol, double atol) {
  check_times(times);
  dynamics::Dopri5Options o;
  o.rtol = rtol;
  o.atol = atol;
  o.stops = times;
  dynamics::OdeFn f = [&](double, const State& y, State& dy) { derivative(model, b, y, dy, nullptr); };
  return dynamics::dopri5_integrate(f, initial_state(b), 0.0, times.back(), o);
}

std::vector<std::size_t> time_indices(const dynamics::Dopri5Solution& sol, const std::vector<double>& times) {
  std::vector<std::size_t> idx;
  std::size_t j = 0;
  for (double t : times) {
    while (j < sol.t.size() && sol.t[j] < t) ++j;
    if (j == sol.t.size() || sol.t[j] != t) throw std::logic_error("pos: solver missed a requested time");
    idx.push_back(j);
  }
  return idx;
}

}  // namespace

std::vector<std::vector<std::vector<Vec3>>> pos_rollout(const models::Model& model, const FeatureSpec& spec,
                                                         const std::vector<const data::TrajectoryRecord*>& batch,
                                                         const std::vector<double>& times, double rtol,
                                                         double atol) {
  models::Batch b = joint_batch(spec, batch);
  const auto sol = joint_solve(model, b, times, rtol, atol);
  const auto idx = time_indices(sol, times);
  std::vector<std::vector<std::vector<Vec3>>> out(batch.size());
  for (std::size_t g = 0; g < batch.size(); ++g) {
    const int off = b.node_offset[g];
    const int n = b.graph_size(static_cast<int>(g));
    for (std::size_t j : idx) {
      const State& y = sol.y[j];
      std::vector<Vec3> x(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const std::size_t r = 3 * static_cast<std::size_t>(off + i);
        x[i] = {y[r], y[r + 1], y[r + 2]};
      }
      out[g].push_back(std::move(x));
    }
  }
  return out;
}

double pos_mse(const models::Model& model, const std::vector<data::TrajectoryRecord>& records,
               const std::vector<double>& times, double rtol, double atol) {
  if (records.empty()) throw std::invalid_argument("pos_mse: no records");
  const FeatureSpec spec = feature_spec(data::SystemTag::pos);
  constexpr std::size_t kChunk = 16;
  double sse = 0.0, count = 0.0;
  for (std::size_t from = 0; from < records.size(); from += kChunk) {
    std::vector<const data::TrajectoryRecord*> batch;
    for (std::size_t k = from; k < std::min(records.size(), from + kChunk); ++k) batch.push_back(&records[k]);
    const auto pred = pos_rollout(model, spec, batch, times, rtol, atol);
    for (std::size_t g = 0; g < batch.size(); ++g) {
      for (std::size_t j = 0; j < times.size(); ++j) {
        const auto truth = pos_positions_at(*batch[g], times[j]);
        for (std::size_t i = 0; i < truth.size(); ++i) {
          const Vec3 d = pred[g][j][i] - truth[i];
          sse += dot(d, d);
          count += 3.0;
        }
      }
    }
  }
  return sse / count;
}

std::pair<double, double> pos_zero_model_mse(const std::vector<data::TrajectoryRecord>& records,
                                             const std::vector<double>& times, double rtol, double atol) {
  check_times(times);
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), times.begin(), times.end());
  dynamics::Dopri5Options o;
  o.rtol = rtol;
  o.atol = atol;
  const dynamics::AccelFn zero = [](const std::vector<Vec3>&, const std::vector<Vec3>&, std::vector<Vec3>& a) {
    std::fill(a.begin(), a.end(), Vec3{});
  };
  double s_int = 0.0, s_closed = 0.0, count = 0.0;
  for (const auto& r : records) {
    const auto roll = dynamics::neural_ode_rollout(zero, r.x0, r.v0, grid, o);
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto truth = pos_positions_at(r, times[j]);
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const Vec3 d1 = roll.positions[j + 1][i] - truth[i];
        const Vec3 d2 = r.x0[i] + times[j] * r.v0[i] - truth[i];
        s_int += dot(d1, d1);
        s_closed += dot(d2, d2);
        count += 3.0;
      }
    }
  }
  if (count == 0.0) throw std::invalid_argument("pos_zero_model_mse: no records");
  return {s_int / count, s_closed / count};
}

double pos_delta_eq(const models::Model& model, const std::vector<data::TrajectoryRecord>& records,
                    const std::vector<double>& times, int rotations, std::uint64_t seed, double rtol,
                    double atol) {
  check_times(times);
  const FeatureSpec spec = feature_spec(data::SystemTag::pos);
  std::vector<models::SystemInput> inputs;
  for (const auto& r : records) inputs.push_back(featurize(r, spec));
  const models::VectorFn fn = [&](const models::SystemInput& s) {
    models::Batch b = models::collate(s);
    const auto sol = joint_solve(model, b, times, rtol, atol);
    const auto idx = time_indices(sol, times);
    const Eigen::Index n = s.size();
    Matrix out(static_cast<Eigen::Index>(idx.size()) * n, 3);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.middleRows(static_cast<Eigen::Index>(k) * n, n) = RowMap(sol.y[idx[k]].data(), n, 3);
    }
    return out;
  };
  nn::Rng rng(seed);
  return models::equivariance_error(fn, inputs, rotations, rng);
}

double pos_batch_loss(models::Model& model, const FeatureSpec& spec,
                      const std::vector<const data::TrajectoryRecord*>& batch, const std::vector<double>& times,
                      double rtol, double atol, bool accumulate) {
  models::Batch tmpl = joint_batch(spec, batch);
  const auto sol = joint_solve(model, tmpl, times, rtol, atol);
  const auto idx = time_indices(sol, times);
  const Eigen::Index n = tmpl.num_nodes();
  const std::size_t dim = static_cast<std::size_t>(6 * n);

  Matrix truth(n, 3);
  std::vector<Matrix> resid(sol.t.size());
  double sse = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t g = 0; g < batch.size(); ++g) {
      const auto x = pos_positions_at(*batch[g], times[k]);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(tmpl.node_offset[g] + static_cast<int>(i));
        truth.row(r) << x[i].x, x[i].y, x[i].z;
      }
    }
    const Matrix d = RowMap(sol.y[idx[k]].data(), n, 3) - truth;
    sse += d.squaredNorm();
    resid[idx[k]] = d;
  }
  const double count = static_cast<double>(times.size()) * 3.0 * static_cast<double>(n);
  const double loss = sse / count;
  if (!accumulate) return loss;

  std::array<models::Batch, 6> stage_batch;
  for (auto& b : stage_batch) b = tmpl;
  std::array<std::unique_ptr<models::Tape>, 6> tapes;
  std::array<State, 6> K;
  std::array<State, 6> Kbar;
  State ybar(dim, 0.0), Y(dim), total(dim);
  for (std::size_t k = sol.t.size() - 1; k-- > 0;) {
    if (resid[k + 1].size() > 0) {
      MutRowMap(ybar.data(), n, 3) += (2.0 / count) * resid[k + 1];
    }
    const double h = sol.t[k + 1] - sol.t[k];
    const State& yk = sol.y[k];
    for (int s = 0; s < 6; ++s) {
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (int r = 0; r < s; ++r) acc += Tab::a[s][r] * K[r][i];
        Y[i] = yk[i] + h * acc;
      }
      derivative(model, stage_batch[s], Y, K[s], &tapes[s]);
    }
    for (int s = 0; s < 6; ++s) {
      Kbar[s].assign(dim, 0.0);
      for (std::size_t i = 0; i < dim; ++i) Kbar[s][i] = h * Tab::b5[s] * ybar[i];
    }
    total = ybar;
    for (int s = 5; s >= 0; --s) {
      const Matrix dv = RowMap(Kbar[s].data() + 3 * n, n, 3);
      const models::InputGrads ig = model.backward(*tapes[s], dv, true);
      // Ybar = (d a/d x)^T Kv, Kx + (d a/d v)^T Kv
      State yb(dim);
      MutRowMap(yb.data(), n, 3) = ig.positions;
      MutRowMap(yb.data() + 3 * n, n, 3) = RowMap(Kbar[s].data(), n, 3) + ig.vectors[0];
      for (std::size_t i = 0; i < dim; ++i) total[i] += yb[i];
      for (int r = 0; r < s; ++r) {
        const double w = h * Tab::a[s][r];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < dim; ++i) Kbar[r][i] += w * yb[i];
      }
    }
    ybar = total;
  }
  return loss;
}

PosResult train_pos(const data::Splits& splits, const data::PosProtocol& protocol, const PosOptions& opt) {
  if (splits.train.empty()) throw std::invalid_argument("train_pos: empty training split");
  for (const auto* part : {&splits.train, &splits.valid, &splits.test}) {
    for (const auto& r : *part) {
      if (r.system != data::SystemTag::pos) throw std::invalid_argument("train_pos: expected POS records");
    }
  }
  const FeatureSpec spec = feature_spec(data::SystemTag::pos);
  const PosTimes times = pos_times(protocol);
  models::ModelConfig mc;
  mc.kind = models::ModelKind::clofnet;
  mc.layers = opt.layers;
  mc.hidden = opt.hidden;
  mc.node_dim = spec.node_dim;
  mc.edge_dim = spec.edge_dim;
  mc.vector_channels = spec.vector_channels;
  mc.output = spec.output;

  PosResult res;
  res.model = models::make_model(mc, opt.seed);
  models::Model& model = *res.model;
  nn::AdamWConfig acfg;
  acfg.lr = opt.lr;
  nn::AdamW adam(model.params(), acfg);
  nn::Rng rng = dynamics::trajectory_rng(opt.seed, 1);

  const auto& valid = splits.valid.empty() ? splits.train : splits.valid;
  const auto& test = splits.test.empty() ? valid : splits.test;
  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bsz = static_cast<std::size_t>(std::max(1, opt.batch));
  double best = INFINITY;
  auto best_params = detail::snapshot(model.params());
  int since = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t from = 0; from < order.size(); from += bsz) {
      std::vector<const data::TrajectoryRecord*> batch;
      for (std::size_t k = from; k < std::min(order.size(), from + bsz); ++k) batch.push_back(&splits.train[order[k]]);
      model.params().zero_grad();
      const double l = pos_batch_loss(model, spec, batch, times.train, opt.rtol, opt.atol, true);
      if (!std::isfinite(l)) throw std::runtime_error("pos training diverged at epoch " + std::to_string(epoch));
      adam.step(model.params());
      sum += l * static_cast<double>(batch.size());
    }
    const double train = sum / static_cast<double>(order.size());
    res.train_curve.push_back(train);
    const double v = pos_mse(model, valid, times.valid, opt.rtol, opt.atol);
    if (opt.on_epoch) opt.on_epoch(epoch, train, v);
    if (v < best) {
      best = v;
      res.best_epoch = epoch;
      best_params = detail::snapshot(model.params());
      since = 0;
    } else if (++since >= opt.patience) {
      break;
    }
  }
  detail::restore(model.params(), best_params);
  res.valid_mse = best;
  res.train_mse = pos_mse(model, splits.train, times.train, opt.rtol, opt.atol);
  res.interp_mse = pos_mse(model, test, times.interp, opt.rtol, opt.atol);
  res.extrap_mse = pos_mse(model, test, times.extrap, opt.rtol, opt.atol);
  std::vector<double> all = times.train;
  all.insert(all.end(), times.valid.begin(), times.valid.end());
  all.insert(all.end(), times.extrap.begin(), times.extrap.end());
  const std::size_t k = std::min<std::size_t>(test.size(), 8);
  const std::vector<data::TrajectoryRecord> probe(test.begin(), test.begin() + static_cast<long>(k));
  res.delta_eq = pos_delta_eq(model, probe, all, opt.rotations, opt.seed + 1, opt.rtol, opt.atol);
  return res;
}

}  // namespace clof::harness
