#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "clof/harness.hpp"
#include "common.hpp"

namespace clof::harness {

namespace {

using detail::Clock;
using detail::restore;
using detail::seconds_since;
using detail::snapshot;

models::Batch collate_range(const Samples& s, const std::vector<std::size_t>& order, std::size_t from,
                            std::size_t to, Matrix* target) {
  std::vector<const models::SystemInput*> ptrs;
  ptrs.reserve(to - from);
  Eigen::Index rows = 0;
  for (std::size_t k = from; k < to; ++k) {
    ptrs.push_back(&s.inputs[order[k]]);
    rows += s.targets[order[k]].rows();
  }
  if (target) {
    target->resize(rows, 3);
    Eigen::Index r = 0;
    for (std::size_t k = from; k < to; ++k) {
      const Matrix& t = s.targets[order[k]];
      target->middleRows(r, t.rows()) = t;
      r += t.rows();
    }
  }
  return models::collate(std::span<const models::SystemInput* const>(ptrs.data(), ptrs.size()));
}

}  // namespace

double evaluate_mse(const models::Model& model, const Samples& samples, int batch) {
  if (samples.size() == 0) throw std::invalid_argument("evaluate_mse: no samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  double sse = 0.0;
  double count = 0.0;
  const auto step = static_cast<std::size_t>(std::max(1, batch));
  for (std::size_t from = 0; from < order.size(); from += step) {
    const std::size_t to = std::min(order.size(), from + step);
    Matrix target;
    const models::Batch b = collate_range(samples, order, from, to, &target);
    const Matrix pred = model.forward(b).vectors;
    sse += (pred - target).squaredNorm();
    count += static_cast<double>(target.size());
  }
  return sse / count;
}

std::vector<data::MetricsRow> TrainResult::metrics_rows(const std::string& model_name,
                                                        const std::string& system) const {
  std::vector<data::MetricsRow> rows;
  for (const auto& e : epochs) {
    rows.push_back({e.epoch, "train", model_name, system, e.train_mse, std::nullopt, e.wall_seconds});
    if (e.valid_mse) rows.push_back({e.epoch, "valid", model_name, system, *e.valid_mse, std::nullopt, e.wall_seconds});
  }
  rows.push_back({best_epoch, "test", model_name, system, test_mse, delta_eq, wall_seconds});
  return rows;
}

TrainResult train_model(const data::ExperimentConfig& cfg, const data::Splits& splits, const TrainOptions& opt) {
  cfg.validate();
  const auto t_start = Clock::now();
  const FeatureSpec spec = feature_spec(data::parse_system_tag(cfg.system));
  const Samples train = make_samples(splits.train, spec);
  const Samples valid = make_samples(splits.valid, spec);
  const Samples test = make_samples(splits.test, spec);
  if (train.size() == 0) throw std::invalid_argument("train_model: empty training split");

  TrainResult res;
  res.model = models::make_model(model_config(cfg, spec), cfg.seed);
  models::Model& model = *res.model;
  nn::AdamWConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;
  nn::AdamW adam(model.params(), acfg);
  nn::Rng shuffle_rng = dynamics::trajectory_rng(cfg.seed, 0x5f3759dfULL);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bsz = static_cast<std::size_t>(cfg.batch);
  const int eval_every = std::max(1, opt.eval_every);

  double best = INFINITY;
  std::vector<Matrix> best_params = snapshot(model.params());
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sse = 0.0;
    double count = 0.0;
    for (std::size_t from = 0; from < order.size(); from += bsz) {
      const std::size_t to = std::min(order.size(), from + bsz);
      Matrix target;
      const models::Batch b = collate_range(train, order, from, to, &target);
      std::unique_ptr<models::Tape> tape;
      const Matrix pred = model.forward(b, &tape).vectors;
      sse += (pred - target).squaredNorm();
      count += static_cast<double>(target.size());
      model.params().zero_grad();
      model.backward(*tape, nn::mse_backward(pred, target));
      adam.step(model.params());
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_mse = sse / count;
    if (!std::isfinite(log.train_mse)) {
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
    }
    const bool last = epoch == cfg.epochs;
    if (epoch % eval_every == 0 || last) {
      const double v = valid.size() > 0 ? evaluate_mse(model, valid, opt.eval_batch) : log.train_mse;
      log.valid_mse = v;
      if (v < best) {
        best = v;
        res.best_epoch = epoch;
        best_params = snapshot(model.params());
        since_best = 0;
      } else {
        since_best += eval_every;
      }
    }
    log.wall_seconds = seconds_since(t_start);
    res.epochs.push_back(log);
    if (opt.on_epoch) opt.on_epoch(log);
    if (opt.inspect) opt.inspect(epoch, model);
    if (since_best >= cfg.patience) break;
  }
  if (res.best_epoch > 0) restore(model.params(), best_params);
  res.best_valid_mse = best;

  const Samples& report = test.size() > 0 ? test : (valid.size() > 0 ? valid : train);
  res.test_mse = evaluate_mse(model, report, opt.eval_batch);
  Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
  double rows = 0.0;
  for (const auto& t : train.targets) {
    mean += t.colwise().sum();
    rows += static_cast<double>(t.rows());
  }
  mean /= rows;
  double sse = 0.0, cnt = 0.0;
  for (const auto& t : report.targets) {
    sse += (t.rowwise() - mean).squaredNorm();
    cnt += static_cast<double>(t.size());
  }
  res.constant_baseline_mse = sse / cnt;

  if (opt.compute_delta_eq) {
    const std::size_t k = std::min<std::size_t>(report.size(), static_cast<std::size_t>(opt.delta_eq_samples));
    nn::Rng rng = dynamics::trajectory_rng(cfg.seed, 0xde17aULL);
    try {
      res.delta_eq = models::equivariance_error(
          models::as_vector_fn(model), std::span<const models::SystemInput>(report.inputs.data(), k), opt.rotations,
          rng);
    } catch (const std::domain_error&) {
      res.delta_eq.reset();
    }
  }
  res.wall_seconds = seconds_since(t_start);
  data::TrainingMeta meta;
  meta.epochs = res.epochs.empty() ? 0 : res.epochs.back().epoch;
  meta.final_train_loss = res.epochs.empty() ? 0.0 : res.epochs.back().train_mse;
  meta.final_valid_loss = std::isfinite(best) ? best : 0.0;
  meta.system = cfg.system;
  res.checkpoint = data::make_checkpoint(model, cfg.seed, meta);
  return res;
}

}  // namespace clof::harness
