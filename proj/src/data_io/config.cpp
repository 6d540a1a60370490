#include <stdexcept>

#include "clof/data_io.hpp"
#include "json_util.hpp"

namespace clof::data {

using detail::Json;

void ExperimentConfig::validate() const {
  const SystemTag tag = parse_system_tag(system);
  models::parse_model_kind(model);
  models::parse_block_kind(block);
  models::parse_embed_kind(embed);
  if (tag != SystemTag::torsion && tag != SystemTag::pos && n_bodies < 2) {
    throw std::invalid_argument("config: n_bodies must be >= 2");
  }
  if (train < 0 || valid < 0 || test < 0) throw std::invalid_argument("config: split sizes must be >= 0");
  if (layers < 1 || hidden < 1) throw std::invalid_argument("config: layers and hidden must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (epochs < 0 || batch < 1) throw std::invalid_argument("config: epochs >= 0 and batch >= 1");
  if (horizon_steps < 1) throw std::invalid_argument("config: horizon_steps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("config: dt must be > 0");
  if (!(softening >= 0.0)) throw std::invalid_argument("config: softening must be >= 0");
  if (!(eps > 0.0)) throw std::invalid_argument("config: eps must be > 0");
  if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("config: weight_decay must be >= 0");
}

std::string to_text(const ExperimentConfig& c) {
  CanonicalWriter w;
  w.begin_object();
  w.key("system").value(c.system);
  w.key("n_bodies").value(c.n_bodies);
  w.key("train").value(c.train);
  w.key("valid").value(c.valid);
  w.key("test").value(c.test);
  w.key("seed").value(c.seed);
  w.key("model").value(c.model);
  w.key("layers").value(c.layers);
  w.key("hidden").value(c.hidden);
  w.key("block").value(c.block);
  w.key("embed").value(c.embed);
  w.key("lr").value(c.lr);
  w.key("epochs").value(c.epochs);
  w.key("batch").value(c.batch);
  w.key("horizon_steps").value(c.horizon_steps);
  w.key("dt").value(c.dt);
  w.key("softening").value(c.softening);
  w.key("eps").value(c.eps);
  w.key("patience").value(c.patience);
  w.key("weight_decay").value(c.weight_decay);
  w.end_object();
  return w.str() + "\n";
}

ExperimentConfig parse_experiment_config(std::string_view text, ExperimentConfig c) {
  const Json j = Json::parse(text.begin(), text.end());
  detail::check_keys(j, {"system", "n_bodies", "train", "valid", "test", "seed", "model", "layers", "hidden",
                         "block", "embed", "lr", "epochs", "batch", "horizon_steps", "dt", "softening", "eps",
                         "patience", "weight_decay"},
                     "config");
  auto get_int = [&](const char* k, int& dst) {
    if (j.contains(k)) dst = static_cast<int>(detail::as_int(j[k], k));
  };
  auto get_real = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = detail::as_real(j[k], k);
  };
  auto get_str = [&](const char* k, std::string& dst) {
    if (j.contains(k)) dst = detail::as_string(j[k], k);
  };
  get_str("system", c.system);
  get_int("n_bodies", c.n_bodies);
  get_int("train", c.train);
  get_int("valid", c.valid);
  get_int("test", c.test);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0) {
      if (!j["seed"].is_number_unsigned()) throw std::invalid_argument("seed: expected a non-negative integer");
    }
    c.seed = j["seed"].get<std::uint64_t>();
  }
  get_str("model", c.model);
  get_int("layers", c.layers);
  get_int("hidden", c.hidden);
  get_str("block", c.block);
  get_str("embed", c.embed);
  get_real("lr", c.lr);
  get_int("epochs", c.epochs);
  get_int("batch", c.batch);
  get_int("horizon_steps", c.horizon_steps);
  get_real("dt", c.dt);
  get_real("softening", c.softening);
  get_real("eps", c.eps);
  get_int("patience", c.patience);
  get_real("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  try {
    return parse_experiment_config(read_file(path), std::move(base));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace clof::data
