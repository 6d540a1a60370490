#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "clof/harness.hpp"
#include "support.hpp"

using namespace clof;
using namespace clof::harness;

namespace {

data::ExperimentConfig tiny_config(const std::string& system = "es") {
  data::ExperimentConfig c;
  c.system = system;
  c.n_bodies = 4;
  c.train = 16;
  c.valid = 8;
  c.test = 8;
  c.horizon_steps = 20;
  c.layers = 2;
  c.hidden = 8;
  c.epochs = 3;
  c.batch = 4;
  return c;
}

data::Splits splits_for(const data::ExperimentConfig& c) {
  data::GenerateOptions g;
  g.system = data::parse_system_tag(c.system);
  g.n_bodies = c.n_bodies;
  g.train = c.train;
  g.valid = c.valid;
  g.test = c.test;
  g.seed = c.seed;
  g.horizon_steps = c.horizon_steps;
  return data::generate_splits(g);
}

data::Splits pos_splits(int train, int valid, int test) {
  data::GenerateOptions g;
  g.system = data::SystemTag::pos;
  g.train = train;
  g.valid = valid;
  g.test = test;
  return data::generate_splits(g);
}

std::vector<data::MetricsRow> without_wall(std::vector<data::MetricsRow> rows) {
  for (auto& r : rows) r.wall_seconds = 0.0;
  return rows;
}

}  // namespace

TEST_CASE("feature layouts") {
  const auto es = data::generate_record(data::GenerateOptions{}, 0);
  const auto s = featurize(es, feature_spec(data::SystemTag::es));
  CHECK(s.vectors.size() == 1);
  CHECK(s.node_features.cols() == 2);
  CHECK(s.node_features(0, 0) == doctest::Approx(norm(es.v0[0])));
  CHECK(s.node_features(1, 1) == es.charges[1]);
  CHECK(s.edge_features(0, 0) == es.charges[s.edges[0][0]] * es.charges[s.edges[0][1]]);

  data::GenerateOptions g;
  g.system = data::SystemTag::l_es;
  const auto l = featurize(data::generate_record(g, 0), feature_spec(data::SystemTag::l_es));
  REQUIRE(l.vectors.size() == 2);
  CHECK(l.vectors[1](3, 0) == dynamics::kDefaultB.x);

  g.system = data::SystemTag::torsion;
  const auto t = featurize(data::generate_record(g, 0), feature_spec(data::SystemTag::torsion));
  CHECK(t.vectors.empty());
  CHECK(t.edges.size() == 6);
  CHECK(t.node_features == Matrix::Identity(4, 4));
  CHECK_THROWS(featurize(es, feature_spec(data::SystemTag::torsion)));
}

TEST_CASE("training is deterministic given the seed") {
  const auto cfg = tiny_config();
  const auto splits = splits_for(cfg);
  TrainOptions o;
  o.delta_eq_samples = 4;
  o.rotations = 2;
  const TrainResult a = train_model(cfg, splits, o);
  const TrainResult b = train_model(cfg, splits, o);
  CHECK(data::to_text(a.checkpoint) == data::to_text(b.checkpoint));
  const auto ra = without_wall(a.metrics_rows("clofnet", "es"));
  const auto rb = without_wall(b.metrics_rows("clofnet", "es"));
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].mse == rb[i].mse);
    CHECK(ra[i].split == rb[i].split);
  }
  CHECK(ra.back().split == "test");
  REQUIRE(a.delta_eq);
  CHECK(*a.delta_eq < 1e-6);
  CHECK(a.test_mse == doctest::Approx(evaluate_mse(*a.model, make_samples(splits.test, feature_spec(data::SystemTag::es)))));
}

TEST_CASE("training reduces the loss") {
  auto cfg = tiny_config();
  cfg.epochs = 15;
  cfg.lr = 3e-3;
  const TrainResult r = train_model(cfg, splits_for(cfg), {});
  CHECK(r.epochs.back().train_mse < r.epochs.front().train_mse);
}

TEST_CASE("early stopping and best-epoch restore") {
  auto cfg = tiny_config();
  cfg.epochs = 40;
  cfg.patience = 2;
  cfg.lr = 0.05;  // noisy enough to stall
  const auto splits = splits_for(cfg);
  const TrainResult r = train_model(cfg, splits, {});
  CHECK(static_cast<int>(r.epochs.size()) <= cfg.epochs);
  const auto valid = make_samples(splits.valid, feature_spec(data::SystemTag::es));
  CHECK(evaluate_mse(*r.model, valid) == doctest::Approx(r.best_valid_mse).epsilon(1e-12));
}

TEST_CASE("divergence names the epoch") {
  auto cfg = tiny_config();
  auto splits = splits_for(cfg);
  (*splits.train[0].target_x)[0].x = 1e300;
  try {
    train_model(cfg, splits, {});
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("sweep rows and budgets") {
  auto cfg = tiny_config("g_es");
  cfg.batch = 2;
  const auto splits = splits_for(cfg);
  SweepOptions o;
  o.sizes = {4, 8};
  o.models = {"clofnet", "gnn"};
  o.step_budget = 8;
  const auto rows = sample_complexity_sweep(cfg, splits, o);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].epochs == 4);
  CHECK(rows[2].epochs == 2);
  CHECK(rows[3].model == "gnn");
  o.sizes = {8, 4};
  CHECK_THROWS(sample_complexity_sweep(cfg, splits, o));
  o.sizes = {400};
  CHECK_THROWS(sample_complexity_sweep(cfg, splits, o));
}

TEST_CASE("pos time grids") {
  const auto t = pos_times(data::PosProtocol{});
  CHECK(t.train.size() == 60);
  CHECK(t.valid.size() == 20);
  CHECK(t.interp.size() == 61);
  CHECK(t.extrap.size() == 20);
  CHECK(t.interp.front() == 0.0005);
  CHECK(t.train.back() == doctest::Approx(0.06));
  CHECK(t.extrap.back() == doctest::Approx(0.1));
}

TEST_CASE("zero acceleration field gives straight lines") {
  const auto s = pos_splits(3, 0, 0);
  const auto t = pos_times(data::PosProtocol{});
  const auto [integrated, closed] = pos_zero_model_mse(s.train, t.extrap, 1e-9, 1e-9);
  CHECK(integrated == doctest::Approx(closed).epsilon(1e-9));
  CHECK(closed > 0.0);
}

TEST_CASE("pos loss gradient matches finite differences") {
  const auto s = pos_splits(2, 0, 0);
  const FeatureSpec spec = feature_spec(data::SystemTag::pos);
  models::ModelConfig mc;
  mc.hidden = 6;
  mc.layers = 2;
  mc.node_dim = 1;
  mc.output = models::VectorOutput::displacement;
  auto m = models::make_model(mc, 3);
  test::perturb(*m, 4, 0.05);
  const std::vector<const data::TrajectoryRecord*> batch{&s.train[0], &s.train[1]};
  const std::vector<double> times{0.002, 0.005, 0.01};
  auto loss = [&](bool acc) { return pos_batch_loss(*m, spec, batch, times, 1e-10, 1e-10, acc); };
  nn::GradCheckOptions go;
  go.max_entries_per_param = 6;
  go.tolerance = 1e-4;
  const auto r = nn::grad_check(loss, m->params(), go);
  CHECK(r.passed());
}

TEST_CASE("pos rollouts are rotation equivariant") {
  const auto s = pos_splits(0, 0, 3);
  models::ModelConfig mc;
  mc.hidden = 8;
  mc.layers = 2;
  mc.node_dim = 1;
  mc.output = models::VectorOutput::displacement;
  auto m = models::make_model(mc, 5);
  test::perturb(*m, 6, 0.1);
  const auto t = pos_times(data::PosProtocol{});
  CHECK(pos_delta_eq(*m, s.test, t.extrap, 4, 7, 1e-7, 1e-7) <= 1e-6);
}

TEST_CASE("pos training runs end to end") {
  const auto s = pos_splits(4, 2, 2);
  PosOptions o;
  o.epochs = 2;
  o.batch = 2;
  o.hidden = 6;
  o.rotations = 2;
  const PosResult r = train_pos(s, data::PosProtocol{}, o);
  CHECK(r.train_curve.size() == 2);
  CHECK(std::isfinite(r.interp_mse));
  CHECK(std::isfinite(r.extrap_mse));
  CHECK(r.delta_eq <= 1e-6);
  data::Splits wrong;
  wrong.train = splits_for(tiny_config()).train;
  CHECK_THROWS(train_pos(wrong, data::PosProtocol{}, o));
}

TEST_CASE("egnn stays radial on torsion inputs") {
  data::GenerateOptions g;
  g.system = data::SystemTag::torsion;
  g.train = 16;
  g.valid = 0;
  g.test = 0;
  const auto splits = data::generate_splits(g);
  const auto spec = feature_spec(data::SystemTag::torsion);
  data::ExperimentConfig cfg = tiny_config("torsion");
  cfg.model = "egnn";
  auto m = models::make_model(model_config(cfg, spec), 1);
  test::perturb(*m, 2);
  CHECK(egnn_max_nonradial(*m, make_samples(splits.train, spec)) <= 1e-12);
  cfg.model = "clofnet";
  auto c = models::make_model(model_config(cfg, spec), 1);
  CHECK_THROWS(egnn_max_nonradial(*c, make_samples(splits.train, spec)));
}

TEST_CASE("torsion experiment reports both models") {
  TorsionOptions o;
  o.samples = 32;
  o.test = 16;
  o.epochs = 2;
  o.hidden = 8;
  o.radial_checks = 2;
  const TorsionReport r = torsion_separation(o);
  CHECK(r.clofnet_mse > 0.0);
  CHECK(r.egnn_mse > 0.0);
  CHECK(r.ratio == doctest::Approx(r.egnn_mse / r.clofnet_mse));
  CHECK(r.radial_checks == 3);
  CHECK(r.egnn_max_nonradial <= 1e-12);
}

TEST_CASE("audit passes for clofnet and flags gnn") {
  std::mt19937_64 rng(3);
  std::vector<models::SystemInput> in{test::random_system(5, rng), test::random_system(5, rng)};
  models::ModelConfig c;
  c.hidden = 8;
  c.layers = 2;
  auto m = models::make_model(c, 4);
  perturb_parameters(*m, 5);
  const AuditReport rep = audit_equivariance(*m, in, 4, 6);
  CHECK(rep.passed());
  REQUIRE(rep.find("reflection_frame"));
  CHECK(rep.find("reflection_frame")->measured == 0.0);
  CHECK(format_report(rep).find("PASS rotation") != std::string::npos);

  c.kind = models::ModelKind::gnn;
  auto g = models::make_model(c, 4);
  const AuditReport bad = audit_equivariance(*g, in, 4, 6);
  CHECK_FALSE(bad.find("rotation")->passed);
  CHECK_FALSE(bad.passed());
}
