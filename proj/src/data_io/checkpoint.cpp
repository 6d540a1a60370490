#include <stdexcept>
#include <string>

#include "clof/data_io.hpp"
#include "json_util.hpp"

namespace clof::data {

using detail::Json;

void write_model_config(CanonicalWriter& w, const models::ModelConfig& c) {
  w.begin_object();
  w.key("kind").value(models::to_string(c.kind));
  w.key("layers").value(c.layers);
  w.key("hidden").value(c.hidden);
  w.key("block").value(models::to_string(c.block));
  w.key("embed").value(models::to_string(c.embed));
  w.key("fourier_frequencies").value(c.fourier_frequencies);
  w.key("scalar_positions").value(c.scalar_positions);
  w.key("scalar_vectors").value(c.scalar_vectors);
  w.key("scalar_distance").value(c.scalar_distance);
  w.key("recompute_frames_per_layer").value(c.recompute_frames_per_layer);
  w.key("frame_eps").value(c.frame_eps);
  w.key("node_dim").value(c.node_dim);
  w.key("edge_dim").value(c.edge_dim);
  w.key("vector_channels").value(c.vector_channels);
  w.key("velocity_update").value(c.velocity_update);
  w.key("output").value(models::to_string(c.output));
  w.end_object();
}

namespace {

models::ModelConfig parse_model_config(const Json& j) {
  detail::check_keys(j, {"kind", "layers", "hidden", "block", "embed", "fourier_frequencies",
                         "scalar_positions", "scalar_vectors", "scalar_distance",
                         "recompute_frames_per_layer", "frame_eps", "node_dim", "edge_dim",
                         "vector_channels", "velocity_update", "output"},
                     "model config");
  models::ModelConfig c;
  c.kind = models::parse_model_kind(detail::as_string(detail::need(j, "kind"), "kind"));
  c.layers = static_cast<int>(detail::as_int(detail::need(j, "layers"), "layers"));
  c.hidden = static_cast<int>(detail::as_int(detail::need(j, "hidden"), "hidden"));
  c.block = models::parse_block_kind(detail::as_string(detail::need(j, "block"), "block"));
  c.embed = models::parse_embed_kind(detail::as_string(detail::need(j, "embed"), "embed"));
  c.fourier_frequencies =
      static_cast<int>(detail::as_int(detail::need(j, "fourier_frequencies"), "fourier_frequencies"));
  c.scalar_positions = detail::as_bool(detail::need(j, "scalar_positions"), "scalar_positions");
  c.scalar_vectors = detail::as_bool(detail::need(j, "scalar_vectors"), "scalar_vectors");
  c.scalar_distance = detail::as_bool(detail::need(j, "scalar_distance"), "scalar_distance");
  c.recompute_frames_per_layer =
      detail::as_bool(detail::need(j, "recompute_frames_per_layer"), "recompute_frames_per_layer");
  c.frame_eps = detail::as_real(detail::need(j, "frame_eps"), "frame_eps");
  c.node_dim = static_cast<int>(detail::as_int(detail::need(j, "node_dim"), "node_dim"));
  c.edge_dim = static_cast<int>(detail::as_int(detail::need(j, "edge_dim"), "edge_dim"));
  c.vector_channels = static_cast<int>(detail::as_int(detail::need(j, "vector_channels"), "vector_channels"));
  c.velocity_update = detail::as_bool(detail::need(j, "velocity_update"), "velocity_update");
  c.output = models::parse_vector_output(detail::as_string(detail::need(j, "output"), "output"));
  c.validate();
  return c;
}

}  // namespace

Checkpoint make_checkpoint(const models::Model& model, std::uint64_t seed, const TrainingMeta& meta) {
  Checkpoint c;
  c.config = model.config();
  c.seed = seed;
  c.training = meta;
  for (const auto& p : model.params()) {
    ParamBlock b;
    b.name = p.name;
    b.shape = p.shape;
    b.values.assign(p.value.data(), p.value.data() + p.value.size());
    c.params.push_back(std::move(b));
  }
  return c;
}

std::string to_text(const Checkpoint& c) {
  CanonicalWriter w;
  w.begin_object();
  w.key("format_version").value(c.format_version);
  w.key("model");
  write_model_config(w, c.config);
  w.key("seed").value(c.seed);
  w.key("params").begin_array();
  for (const auto& p : c.params) {
    w.begin_object();
    w.key("name").value(p.name);
    w.key("shape").begin_array();
    for (int d : p.shape) w.value(d);
    w.end_array();
    w.key("values").value(p.values);
    w.end_object();
  }
  w.end_array();
  w.key("training").begin_object();
  w.key("epochs").value(c.training.epochs);
  w.key("final_train_loss").value(c.training.final_train_loss);
  w.key("final_valid_loss").value(c.training.final_valid_loss);
  w.key("system").value(c.training.system);
  w.end_object();
  w.end_object();
  return w.str() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  const Json j = Json::parse(text.begin(), text.end());
  detail::check_keys(j, {"format_version", "model", "seed", "params", "training"}, "checkpoint");
  Checkpoint c;
  c.format_version = static_cast<int>(detail::as_int(detail::need(j, "format_version"), "format_version"));
  if (c.format_version != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format_version " + std::to_string(c.format_version));
  }
  c.config = parse_model_config(detail::need(j, "model"));
  const Json& seed = detail::need(j, "seed");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw std::invalid_argument("seed: expected an integer");
  c.seed = seed.get<std::uint64_t>();
  const Json& params = detail::need(j, "params");
  if (!params.is_array()) throw std::invalid_argument("params: expected an array");
  for (const auto& p : params) {
    detail::check_keys(p, {"name", "shape", "values"}, "param");
    ParamBlock b;
    b.name = detail::as_string(detail::need(p, "name"), "name");
    const Json& shape = detail::need(p, "shape");
    if (!shape.is_array()) throw std::invalid_argument("param " + b.name + ": shape must be an array");
    for (const auto& d : shape) b.shape.push_back(static_cast<int>(detail::as_int(d, "shape")));
    b.values = detail::as_reals(detail::need(p, "values"), "values");
    c.params.push_back(std::move(b));
  }
  const Json& t = detail::need(j, "training");
  detail::check_keys(t, {"epochs", "final_train_loss", "final_valid_loss", "system"}, "training");
  c.training.epochs = static_cast<int>(detail::as_int(detail::need(t, "epochs"), "epochs"));
  c.training.final_train_loss = detail::as_real(detail::need(t, "final_train_loss"), "final_train_loss");
  c.training.final_valid_loss = detail::as_real(detail::need(t, "final_valid_loss"), "final_valid_loss");
  c.training.system = detail::as_string(detail::need(t, "system"), "system");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) { write_file(path, to_text(c)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::unique_ptr<models::Model> restore_model(const Checkpoint& c) {
  auto model = models::make_model(c.config, c.seed);
  auto& store = model->params();
  if (store.size() != c.params.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(store.size()) + " parameter blocks, found " +
                             std::to_string(c.params.size()));
  }
  for (const auto& b : c.params) {
    nn::Param* p = store.find(b.name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter " + b.name);
    if (b.shape != p->shape) throw std::runtime_error("checkpoint: shape mismatch for parameter " + b.name);
    if (static_cast<Eigen::Index>(b.values.size()) != p->value.size()) {
      throw std::runtime_error("checkpoint: value count mismatch for parameter " + b.name);
    }
    std::copy(b.values.begin(), b.values.end(), p->value.data());
  }
  return model;
}

}  // namespace clof::data
