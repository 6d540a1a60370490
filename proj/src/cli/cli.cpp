#include "clof/cli.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clof/harness.hpp"

namespace clof::cli {

namespace fs = std::filesystem;
using data::CanonicalWriter;
using data::ExperimentConfig;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Flag overrides for ExperimentConfig; unset flags leave the file/default value.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> system, model, block, embed;
  std::optional<int> n_bodies, train, valid, test, layers, hidden, epochs, batch, horizon, patience;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, dt, softening, eps, weight_decay;

  void bind(CLI::App* app) {
    app->add_option("--config", config_path, "experiment config file (JSON)")->check(CLI::ExistingFile);
    app->add_option("--system", system, "es | g_es | l_es | torsion | pos");
    app->add_option("--model", model, "clofnet | egnn | gnn");
    app->add_option("--block", block, "naive | transformer");
    app->add_option("--embed", embed, "mlp | fourier");
    app->add_option("--n-bodies", n_bodies);
    app->add_option("--train", train);
    app->add_option("--valid", valid);
    app->add_option("--test", test);
    app->add_option("--layers", layers);
    app->add_option("--hidden", hidden);
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch);
    app->add_option("--horizon", horizon, "prediction horizon in steps");
    app->add_option("--patience", patience);
    app->add_option("--seed", seed);
    app->add_option("--lr", lr);
    app->add_option("--dt", dt);
    app->add_option("--softening", softening);
    app->add_option("--eps", eps, "frame epsilon");
    app->add_option("--weight-decay", weight_decay);
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    try {
      if (!config_path.empty()) c = data::load_experiment_config(config_path);
      if (system) c.system = *system;
      if (model) c.model = *model;
      if (block) c.block = *block;
      if (embed) c.embed = *embed;
      if (n_bodies) c.n_bodies = *n_bodies;
      if (train) c.train = *train;
      if (valid) c.valid = *valid;
      if (test) c.test = *test;
      if (layers) c.layers = *layers;
      if (hidden) c.hidden = *hidden;
      if (epochs) c.epochs = *epochs;
      if (batch) c.batch = *batch;
      if (horizon) c.horizon_steps = *horizon;
      if (patience) c.patience = *patience;
      if (seed) c.seed = *seed;
      if (lr) c.lr = *lr;
      if (dt) c.dt = *dt;
      if (softening) c.softening = *softening;
      if (eps) c.eps = *eps;
      if (weight_decay) c.weight_decay = *weight_decay;
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

data::GenerateOptions generate_options(const ExperimentConfig& c) {
  data::GenerateOptions g;
  g.system = data::parse_system_tag(c.system);
  g.n_bodies = c.n_bodies;
  g.train = c.train;
  g.valid = c.valid;
  g.test = c.test;
  g.seed = c.seed;
  g.horizon_steps = c.horizon_steps;
  g.dt = c.dt;
  g.softening = c.softening;
  return g;
}

void write_generate(CanonicalWriter& w, const data::GenerateOptions& g) {
  w.key("system").value(data::to_string(g.system));
  if (g.system == data::SystemTag::pos) {
    const auto& p = g.pos;
    w.key("train").value(g.train).key("valid").value(g.valid).key("test").value(g.test).key("seed").value(g.seed);
    w.key("bodies").value(p.bodies).key("observed").value(p.observed).key("dt").value(p.dt);
    w.key("t1").value(p.t1).key("t2").value(p.t2).key("t3").value(p.t3).key("substeps").value(p.substeps);
    w.key("softening").value(g.softening);
    return;
  }
  w.key("n_bodies").value(g.n_bodies);
  w.key("train").value(g.train);
  w.key("valid").value(g.valid);
  w.key("test").value(g.test);
  w.key("seed").value(g.seed);
  w.key("horizon_steps").value(g.horizon_steps);
  w.key("dt").value(g.dt);
  w.key("softening").value(g.softening);
}

// Prints the resolved config and writes it next to the run's outputs.
void echo(const std::string& text, const fs::path& sidecar) {
  std::cout << text << "\n";
  data::write_file(sidecar, text + "\n");
}

fs::path sidecar_for(const std::string& sub, const std::string& explicit_path, const fs::path& near) {
  if (!explicit_path.empty()) return explicit_path;
  if (near.empty()) return fs::path(sub + ".config.json");
  return near.string() + ".config.json";
}

data::Splits load_or_generate(const ExperimentConfig& c, const std::string& dir) {
  if (dir.empty()) return data::generate_splits(generate_options(c));
  data::Splits s;
  s.train = data::read_dataset(fs::path(dir) / "train.jsonl");
  s.valid = data::read_dataset(fs::path(dir) / "valid.jsonl");
  s.test = data::read_dataset(fs::path(dir) / "test.jsonl");
  return s;
}

std::string trimmed(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string config_text(const std::string& sub, const std::string& cfg_text) {
  return "{\"command\":\"" + sub + "\",\"config\":" + trimmed(cfg_text) + "}";
}

std::vector<data::TrajectoryRecord> records_for(const std::string& path, const ExperimentConfig& c) {
  if (!path.empty()) return data::read_dataset(path);
  return data::generate_splits(generate_options(c)).test;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Equivariant graph networks with complete local frames"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string sidecar;
  app.add_option("--sidecar", sidecar, "where to write the resolved config");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "simulate train/valid/test trajectories");
  ConfigFlags gen_flags;
  gen_flags.bind(gen);
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model and write a checkpoint");
  ConfigFlags tr_flags;
  tr_flags.bind(tr);
  std::string tr_data, tr_out, tr_metrics;
  tr->add_option("--data", tr_data, "directory with train/valid/test .jsonl (generated when omitted)");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--metrics", tr_metrics, "metrics CSV path");

  // eval
  auto* ev = app.add_subcommand("eval", "test MSE of a checkpoint");
  std::string ev_ckpt, ev_data;
  ev->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, ".jsonl records")->required()->check(CLI::ExistingFile);

  // equi-check
  auto* eq = app.add_subcommand("equi-check", "equivariance audit");
  ConfigFlags eq_flags;
  eq_flags.bind(eq);
  std::string eq_ckpt, eq_data;
  int eq_rot = 16, eq_samples = 32;
  double eq_threshold = 1e-5;
  eq->add_option("--ckpt", eq_ckpt, "checkpoint (random weights from the config when omitted)")
      ->check(CLI::ExistingFile);
  eq->add_option("--data", eq_data, ".jsonl records (generated test split when omitted)")->check(CLI::ExistingFile);
  eq->add_option("--rotations", eq_rot)->check(CLI::PositiveNumber);
  eq->add_option("--samples", eq_samples)->check(CLI::PositiveNumber);
  eq->add_option("--threshold", eq_threshold);

  // sweep
  auto* sw = app.add_subcommand("sweep", "sample-complexity sweep");
  ConfigFlags sw_flags;
  sw_flags.bind(sw);
  std::vector<int> sw_sizes{200, 1000, 5000};
  std::vector<std::string> sw_models{"clofnet", "gnn"};
  long sw_steps = 0;
  std::string sw_out;
  sw->add_option("--sizes", sw_sizes)->delimiter(',');
  sw->add_option("--models", sw_models)->delimiter(',');
  sw->add_option("--steps", sw_steps, "optimizer steps per run (0: epochs x ceil(1000/batch))");
  sw->add_option("--out", sw_out, "CSV path")->required();

  // demo-torsion
  auto* dt = app.add_subcommand("demo-torsion", "ClofNet vs EGNN on torsion forces");
  harness::TorsionOptions to;
  dt->add_option("--samples", to.samples);
  dt->add_option("--test", to.test);
  dt->add_option("--epochs", to.epochs);
  dt->add_option("--batch", to.batch);
  dt->add_option("--hidden", to.hidden);
  dt->add_option("--layers", to.layers);
  dt->add_option("--lr", to.lr);
  dt->add_option("--seed", to.seed);
  dt->add_option("--min-normal", to.min_normal);

  // pos
  auto* po = app.add_subcommand("pos", "neural ODE on the partially observed gravity system");
  harness::PosOptions popt;
  int p_train = 64, p_valid = 16, p_test = 16;
  std::uint64_t p_data_seed = 42;
  std::string p_out;
  po->add_option("--train", p_train);
  po->add_option("--valid", p_valid);
  po->add_option("--test", p_test);
  po->add_option("--data-seed", p_data_seed);
  po->add_option("--epochs", popt.epochs);
  po->add_option("--batch", popt.batch);
  po->add_option("--lr", popt.lr);
  po->add_option("--hidden", popt.hidden);
  po->add_option("--layers", popt.layers);
  po->add_option("--patience", popt.patience);
  po->add_option("--seed", popt.seed);
  po->add_option("--rtol", popt.rtol);
  po->add_option("--atol", popt.atol);
  po->add_option("--out", p_out, "checkpoint path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const ExperimentConfig c = gen_flags.resolve();
      const data::GenerateOptions g = generate_options(c);
      CanonicalWriter w;
      w.begin_object();
      w.key("command").value("gen-data");
      write_generate(w, g);
      w.end_object();
      echo(w.str(), sidecar_for("gen-data", sidecar, fs::path(gen_out) / "gen-data"));
      const data::Splits s = data::generate_splits(g);
      data::write_dataset(s.train, fs::path(gen_out) / "train.jsonl");
      data::write_dataset(s.valid, fs::path(gen_out) / "valid.jsonl");
      data::write_dataset(s.test, fs::path(gen_out) / "test.jsonl");
      return 0;
    }
    if (*tr) {
      const ExperimentConfig c = tr_flags.resolve();
      echo(config_text("train", data::to_text(c)), sidecar_for("train", sidecar, tr_out));
      const data::Splits s = load_or_generate(c, tr_data);
      harness::TrainOptions o;
      o.on_epoch = [](const harness::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " train " << e.train_mse;
        if (e.valid_mse) std::cerr << " valid " << *e.valid_mse;
        std::cerr << "\n";
      };
      const harness::TrainResult r = harness::train_model(c, s, o);
      data::save_checkpoint(r.checkpoint, tr_out);
      if (!tr_metrics.empty()) data::write_metrics_csv(r.metrics_rows(c.model, c.system), tr_metrics);
      std::cout << "test_mse " << data::format_real(r.test_mse) << "\n";
      std::cout << "constant_baseline_mse " << data::format_real(r.constant_baseline_mse) << "\n";
      if (r.delta_eq) std::cout << "delta_eq " << data::format_real(*r.delta_eq) << "\n";
      return 0;
    }
    if (*ev) {
      CanonicalWriter w;
      w.begin_object().key("command").value("eval").key("ckpt").value(ev_ckpt).key("data").value(ev_data).end_object();
      echo(w.str(), sidecar_for("eval", sidecar, {}));
      const data::Checkpoint ck = data::load_checkpoint(ev_ckpt);
      const auto model = data::restore_model(ck);
      const auto recs = data::read_dataset(ev_data);
      if (recs.empty()) throw std::runtime_error("eval: no records in " + ev_data);
      const harness::Samples s = harness::make_samples(recs, harness::feature_spec(recs.front().system));
      std::cout << "mse " << data::format_real(harness::evaluate_mse(*model, s)) << "\n";
      return 0;
    }
    if (*eq) {
      const ExperimentConfig c = eq_flags.resolve();
      CanonicalWriter w;
      w.begin_object().key("command").value("equi-check");
      w.key("ckpt").value(eq_ckpt).key("data").value(eq_data);
      w.key("rotations").value(eq_rot).key("samples").value(eq_samples).key("threshold").value(eq_threshold);
      w.end_object();
      std::string text = w.str();
      text.pop_back();
      echo(text + ",\"config\":" + trimmed(data::to_text(c)) + "}", sidecar_for("equi-check", sidecar, {}));
      std::unique_ptr<models::Model> model;
      auto recs = records_for(eq_data, c);
      if (recs.empty()) throw std::runtime_error("equi-check: no records");
      const auto spec = harness::feature_spec(recs.front().system);
      if (!eq_ckpt.empty()) {
        model = data::restore_model(data::load_checkpoint(eq_ckpt));
      } else {
        model = models::make_model(harness::model_config(c, spec), c.seed);
        harness::perturb_parameters(*model, c.seed);
      }
      if (recs.size() > static_cast<std::size_t>(eq_samples)) recs.resize(static_cast<std::size_t>(eq_samples));
      const harness::Samples s = harness::make_samples(recs, spec);
      const harness::AuditReport rep = harness::audit_equivariance(*model, s.inputs, eq_rot, c.seed);
      std::cout << harness::format_report(rep);
      const double deq = rep.find("rotation")->measured;
      std::cout << "delta_eq " << data::format_real(deq) << "\n";
      return deq <= eq_threshold ? 0 : 2;
    }
    if (*sw) {
      ExperimentConfig c = sw_flags.resolve();
      if (sw_sizes.empty()) throw UsageError("sweep: --sizes is empty");
      c.train = std::max(c.train, *std::max_element(sw_sizes.begin(), sw_sizes.end()));
      echo(config_text("sweep", data::to_text(c)), sidecar_for("sweep", sidecar, sw_out));
      const data::Splits s = data::generate_splits(generate_options(c));
      harness::SweepOptions o;
      o.sizes = sw_sizes;
      o.models = sw_models;
      o.step_budget = sw_steps;
      o.on_row = [](const harness::SweepRow& r) {
        std::cerr << "size " << r.size << " " << r.model << " test_mse " << r.test_mse << "\n";
      };
      const auto rows = harness::sample_complexity_sweep(c, s, o);
      harness::write_sweep_csv(rows, sw_out);
      for (const auto& r : rows) {
        std::cout << r.size << "," << r.model << "," << r.epochs << "," << data::format_real(r.test_mse) << "\n";
      }
      return 0;
    }
    if (*dt) {
      CanonicalWriter w;
      w.begin_object().key("command").value("demo-torsion");
      w.key("samples").value(to.samples).key("test").value(to.test).key("epochs").value(to.epochs);
      w.key("batch").value(to.batch).key("hidden").value(to.hidden).key("layers").value(to.layers);
      w.key("lr").value(to.lr).key("seed").value(to.seed).key("min_normal").value(to.min_normal).end_object();
      echo(w.str(), sidecar_for("demo-torsion", sidecar, {}));
      to.on_epoch = [](const std::string& m, const harness::EpochLog& e) {
        if (e.epoch % 25 == 0) std::cerr << m << " epoch " << e.epoch << " train " << e.train_mse << "\n";
      };
      const auto r = harness::torsion_separation(to);
      std::cout << "clofnet_mse " << data::format_real(r.clofnet_mse) << "\n";
      std::cout << "egnn_mse " << data::format_real(r.egnn_mse) << "\n";
      std::cout << "ratio " << data::format_real(r.ratio) << "\n";
      std::cout << "clofnet_delta_eq " << data::format_real(r.clofnet_delta_eq) << "\n";
      std::cout << "egnn_max_nonradial " << data::format_real(r.egnn_max_nonradial) << " over "
                << r.radial_checks << " checks\n";
      return 0;
    }
    if (*po) {
      data::GenerateOptions g;
      g.system = data::SystemTag::pos;
      g.train = p_train;
      g.valid = p_valid;
      g.test = p_test;
      g.seed = p_data_seed;
      CanonicalWriter w;
      w.begin_object().key("command").value("pos");
      write_generate(w, g);
      w.key("epochs").value(popt.epochs).key("batch").value(popt.batch).key("lr").value(popt.lr);
      w.key("hidden").value(popt.hidden).key("layers").value(popt.layers).key("patience").value(popt.patience);
      w.key("model_seed").value(popt.seed).key("rtol").value(popt.rtol).key("atol").value(popt.atol);
      w.end_object();
      echo(w.str(), sidecar_for("pos", sidecar, p_out));
      const data::Splits s = data::generate_splits(g);
      popt.on_epoch = [](int e, double t, double v) {
        std::cerr << "epoch " << e << " train " << t << " valid " << v << "\n";
      };
      const auto times = harness::pos_times(g.pos);
      const auto zero = harness::pos_zero_model_mse(s.test, times.extrap, popt.rtol, popt.atol);
      const auto r = harness::train_pos(s, g.pos, popt);
      if (!p_out.empty()) {
        data::TrainingMeta meta{r.best_epoch, r.train_mse, r.valid_mse, "pos"};
        data::save_checkpoint(data::make_checkpoint(*r.model, popt.seed, meta), p_out);
      }
      std::cout << "train_mse " << data::format_real(r.train_mse) << "\n";
      std::cout << "valid_mse " << data::format_real(r.valid_mse) << "\n";
      std::cout << "interp_mse " << data::format_real(r.interp_mse) << "\n";
      std::cout << "extrap_mse " << data::format_real(r.extrap_mse) << "\n";
      std::cout << "straight_line_extrap_mse " << data::format_real(zero.second) << "\n";
      std::cout << "delta_eq " << data::format_real(r.delta_eq) << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace clof::cli
