#include <algorithm>
#include <stdexcept>

#include "clof/harness.hpp"

namespace clof::harness {

double egnn_max_nonradial(const models::Model& egnn, const Samples& samples) {
  if (egnn.config().kind != models::ModelKind::egnn) throw std::invalid_argument("egnn_max_nonradial: not an EGNN");
  constexpr std::size_t kChunk = 64;
  double worst = 0.0;
  for (std::size_t from = 0; from < samples.size(); from += kChunk) {
    std::vector<const models::SystemInput*> ptrs;
    for (std::size_t k = from; k < std::min(samples.size(), from + kChunk); ++k) ptrs.push_back(&samples.inputs[k]);
    const models::Batch b = models::collate(std::span<const models::SystemInput* const>(ptrs.data(), ptrs.size()));
    std::unique_ptr<models::Tape> tape;
    egnn.forward(b, &tape);
    const auto& t = static_cast<const models::Egnn::ForwardTape&>(*tape);
    for (int l = 0; l < static_cast<int>(t.layers.size()); ++l) {
      const Matrix c = models::Egnn::edge_contributions(t, b, l);
      const Matrix& d = t.layers[l].diff;
      for (Eigen::Index e = 0; e < c.rows(); ++e) {
        const Vec3 cv{c(e, 0), c(e, 1), c(e, 2)};
        const Vec3 dv{d(e, 0), d(e, 1), d(e, 2)};
        const double denom = norm(cv) * norm(dv);
        if (denom == 0.0) continue;
        worst = std::max(worst, norm(cross(cv, dv)) / denom);
      }
    }
  }
  return worst;
}

TorsionReport torsion_separation(const TorsionOptions& o) {
  data::GenerateOptions g;
  g.system = data::SystemTag::torsion;
  g.train = o.samples;
  g.valid = std::max(1, o.test / 2);
  g.test = o.test;
  g.seed = o.seed;
  g.torsion_min_normal = o.min_normal;
  const data::Splits splits = data::generate_splits(g);

  data::ExperimentConfig cfg;
  cfg.system = "torsion";
  cfg.n_bodies = 4;
  cfg.train = g.train;
  cfg.valid = g.valid;
  cfg.test = g.test;
  cfg.seed = o.seed;
  cfg.layers = o.layers;
  cfg.hidden = o.hidden;
  cfg.lr = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch = o.batch;
  cfg.patience = o.epochs;

  TorsionReport rep;
  {
    cfg.model = "clofnet";
    TrainOptions t;
    if (o.on_epoch) t.on_epoch = [&](const EpochLog& e) { o.on_epoch("clofnet", e); };
    const TrainResult r = train_model(cfg, splits, t);
    rep.clofnet_mse = r.test_mse;
    rep.clofnet_delta_eq = r.delta_eq.value_or(0.0);
  }
  {
    cfg.model = "egnn";
    const Samples probe = make_samples(
        std::vector<data::TrajectoryRecord>(splits.test.begin(),
                                            splits.test.begin() + std::min<long>(64, static_cast<long>(splits.test.size()))),
        feature_spec(data::SystemTag::torsion));
    const int every = std::max(1, o.epochs / std::max(1, o.radial_checks));
    TrainOptions t;
    t.compute_delta_eq = false;
    if (o.on_epoch) t.on_epoch = [&](const EpochLog& e) { o.on_epoch("egnn", e); };
    t.inspect = [&](int epoch, const models::Model& m) {
      if (epoch % every != 0) return;
      rep.egnn_max_nonradial = std::max(rep.egnn_max_nonradial, egnn_max_nonradial(m, probe));
      ++rep.radial_checks;
    };
    const TrainResult r = train_model(cfg, splits, t);
    rep.egnn_mse = r.test_mse;
    rep.egnn_max_nonradial = std::max(rep.egnn_max_nonradial, egnn_max_nonradial(*r.model, probe));
    ++rep.radial_checks;
  }
  rep.ratio = rep.egnn_mse / rep.clofnet_mse;
  return rep;
}

}  // namespace clof::harness
