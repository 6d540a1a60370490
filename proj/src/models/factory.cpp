#include <stdexcept>

#include "clof/models.hpp"

namespace clof::models {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::clofnet: return "clofnet";
    case ModelKind::egnn: return "egnn";
    case ModelKind::gnn: return "gnn";
  }
  return "?";
}

std::string to_string(BlockKind k) { return k == BlockKind::naive ? "naive" : "transformer"; }
std::string to_string(EmbedKind k) { return k == EmbedKind::mlp ? "mlp" : "fourier"; }
std::string to_string(VectorOutput k) {
  return k == VectorOutput::positions ? "positions" : "displacement";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "clofnet") return ModelKind::clofnet;
  if (s == "egnn") return ModelKind::egnn;
  if (s == "gnn") return ModelKind::gnn;
  throw std::invalid_argument("unknown model kind: " + s);
}

BlockKind parse_block_kind(const std::string& s) {
  if (s == "naive") return BlockKind::naive;
  if (s == "transformer") return BlockKind::transformer;
  throw std::invalid_argument("unknown block kind: " + s);
}

EmbedKind parse_embed_kind(const std::string& s) {
  if (s == "mlp") return EmbedKind::mlp;
  if (s == "fourier") return EmbedKind::fourier;
  throw std::invalid_argument("unknown embed kind: " + s);
}

VectorOutput parse_vector_output(const std::string& s) {
  if (s == "positions") return VectorOutput::positions;
  if (s == "displacement") return VectorOutput::displacement;
  throw std::invalid_argument("unknown vector output: " + s);
}

int ModelConfig::edge_scalar_count() const {
  return (scalar_positions ? 6 : 0) + (scalar_vectors ? 6 * vector_channels : 0) +
         (scalar_distance ? 1 : 0);
}

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model config: layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("model config: hidden must be >= 1");
  if (node_dim < 1 || edge_dim < 1) {
    throw std::invalid_argument("model config: node_dim and edge_dim must be >= 1");
  }
  if (vector_channels < 0) throw std::invalid_argument("model config: vector_channels < 0");
  if (fourier_frequencies < 1) throw std::invalid_argument("model config: fourier frequencies");
  if (!(frame_eps > 0.0)) throw std::invalid_argument("model config: frame eps must be > 0");
  if (kind == ModelKind::clofnet) {
    if (edge_scalar_count() < 1) throw std::invalid_argument("model config: no scalar channels");
    if (block == BlockKind::transformer && hidden < 2) {
      throw std::invalid_argument("model config: transformer block needs hidden >= 2");
    }
  }
  if (kind == ModelKind::egnn && velocity_update && vector_channels < 1) {
    throw std::invalid_argument("model config: EGNN velocity update needs a vector channel");
  }
}

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case ModelKind::clofnet: return std::make_unique<ClofNet>(cfg, seed);
    case ModelKind::egnn: return std::make_unique<Egnn>(cfg, seed);
    case ModelKind::gnn: return std::make_unique<Gnn>(cfg, seed);
  }
  throw std::invalid_argument("make_model: unknown kind");
}

}  // namespace clof::models
