#pragma once

#include "clof/geometry.hpp"
#include "clof/tensornet.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clof::models {

using nn::Matrix;

// ---------------------------------------------------------------------------
// Graph inputs.

using Edge = std::array<int, 2>;  // (receiver i, sender j)

std::vector<Edge> fully_connected_edges(int n);
/// Hub <-> spoke edges in both directions.
std::vector<Edge> star_edges(int n, int hub);

/// One system as presented to a model.
struct SystemInput {
  Matrix positions;             // n x 3
  std::vector<Matrix> vectors;  // equivariant channels, n x 3 each; channel 0 is velocity
  Matrix node_features;         // n x dh, rotation invariant
  std::vector<Edge> edges;
  Matrix edge_features;  // E x de, rotation invariant

  int size() const { return static_cast<int>(positions.rows()); }
};

/// Disjoint union of systems; edges use global node indices.
struct Batch {
  std::vector<int> node_offset;  // graphs + 1 entries
  std::vector<int> graph_of_node;
  std::vector<int> receiver;
  std::vector<int> sender;
  Matrix positions;
  std::vector<Matrix> vectors;
  Matrix node_features;
  Matrix edge_features;

  int num_graphs() const { return static_cast<int>(node_offset.size()) - 1; }
  int num_nodes() const { return static_cast<int>(positions.rows()); }
  int num_edges() const { return static_cast<int>(receiver.size()); }
  int graph_size(int g) const { return node_offset[g + 1] - node_offset[g]; }
};

/// Validates and concatenates; throws std::invalid_argument on inconsistent
/// shapes, out-of-range indices or self-loops.
Batch collate(std::span<const SystemInput* const> systems);
Batch collate(const SystemInput& system);

SystemInput rotated(const SystemInput& s, const Mat3& r);
SystemInput translated(const SystemInput& s, const Vec3& t);
/// Node k of the result is node perm[k] of the input.
SystemInput permuted(const SystemInput& s, std::span<const int> perm);

Matrix rotate_rows(const Matrix& x, const Mat3& r);

// ---------------------------------------------------------------------------
// Configuration.

enum class ModelKind { clofnet, egnn, gnn };
enum class BlockKind { naive, transformer };
enum class EmbedKind { mlp, fourier };
enum class VectorOutput { positions, displacement };

std::string to_string(ModelKind k);
std::string to_string(BlockKind k);
std::string to_string(EmbedKind k);
std::string to_string(VectorOutput k);
ModelKind parse_model_kind(const std::string& s);
BlockKind parse_block_kind(const std::string& s);
EmbedKind parse_embed_kind(const std::string& s);
VectorOutput parse_vector_output(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::clofnet;
  int layers = 4;
  int hidden = 64;
  BlockKind block = BlockKind::naive;
  EmbedKind embed = EmbedKind::mlp;
  int fourier_frequencies = nn::FourierEmbedding::kDefaultFrequencies;
  // Scalar channels fed to the frame-based model.
  bool scalar_positions = true;
  bool scalar_vectors = true;
  bool scalar_distance = true;
  bool recompute_frames_per_layer = true;
  double frame_eps = kDefaultFrameEps;
  // Input layout.
  int node_dim = 1;
  int edge_dim = 1;
  int vector_channels = 1;
  /// EGNN only: adds phi_v(h_i) * v_i with v taken from vector channel 0.
  bool velocity_update = true;
  VectorOutput output = VectorOutput::positions;

  void validate() const;
  /// Number of invariant scalars per edge for the frame-based model.
  int edge_scalar_count() const;
};

struct ModelOutput {
  Matrix vectors;       // N x 3: positions or displacement, per config
  Matrix node_scalars;  // N x hidden
};

/// Activations saved by forward() for backward(). Holds a pointer to the
/// batch, which must outlive the tape.
class Tape {
 public:
  virtual ~Tape() = default;
  const Batch* batch = nullptr;
};

struct InputGrads {
  Matrix positions;
  std::vector<Matrix> vectors;
};

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  virtual ModelOutput forward(const Batch& batch, std::unique_ptr<Tape>* tape = nullptr) const = 0;
  /// Accumulates parameter gradients for d(loss)/d(output.vectors). Input
  /// gradients are computed only when requested and supported.
  virtual InputGrads backward(const Tape& tape, const Matrix& d_vectors,
                              bool need_input_grads = false) = 0;
  virtual bool supports_input_grads() const { return false; }

 protected:
  ModelConfig cfg_;
  nn::ParamStore params_;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Frame-based model.

struct FrameSet {
  Matrix a;  // E x 3
  Matrix b;
  Matrix c;
  std::vector<char> degenerate;
};

FrameSet build_frames(const Batch& batch, const Matrix& positions, double eps);

class ClofNet final : public Model {
 public:
  struct LayerTape {
    Matrix h_in;
    Matrix positions_in;
    FrameSet frames;  // frames used for vectorization in this layer
    bool own_frames = false;
    Matrix edge_in;  // [s_emb, h_i, h_j, e_emb]
    nn::Mlp::Cache phi_m;
    Matrix messages;
    // naive block
    Matrix node_in;  // [h, sum m]
    nn::Mlp::Cache phi_h;
    // transformer block
    Matrix q, k, v, k_in;
    Matrix score;              // E x 1
    Eigen::VectorXd denom;     // N
    std::vector<char> guarded;
    Matrix alpha;              // E x 1
    Matrix attended;           // N x H, pre-LayerNorm
    nn::LayerNormCache ln_m;
    Matrix big_m;              // normalized attended
    Matrix gtb_in;             // [h, M]
    nn::Mlp::Cache phi_h_gtb;
    Matrix h_update;           // phi_h output
    nn::LayerNormCache ln_h;
    nn::Mlp::Cache residual;
    Matrix messages_out;       // m' fed to the vector head
    nn::Mlp::Cache phi_x;
    Matrix coeffs;             // E x 3
  };

  struct ForwardTape : Tape {
    Matrix centroid;  // graphs x 3
    Matrix centered;  // N x 3
    FrameSet frames0;
    Matrix scalars;  // E x ds
    nn::Mlp::Cache embed_mlp;
    Matrix fourier_out;
    Matrix s_emb;
    Matrix e_emb;
    Matrix h0;
    std::vector<LayerTape> layers;
  };

  static constexpr double kAttentionGuard = 1e-8;

  ClofNet(const ModelConfig& cfg, std::uint64_t seed);

  ModelOutput forward(const Batch& batch, std::unique_ptr<Tape>* tape = nullptr) const override;
  InputGrads backward(const Tape& tape, const Matrix& d_vectors,
                      bool need_input_grads = false) override;
  bool supports_input_grads() const override { return true; }

  /// Edge scalars: for every edge the (., a), (., b), (., c) projections of
  /// x_i, x_j, then each vector channel for i and j, then |x_i - x_j|.
  Matrix edge_scalars(const Batch& batch, const Matrix& centered, const FrameSet& frames) const;

 private:
  struct Layer {
    nn::Mlp phi_m;
    nn::Mlp phi_h;
    nn::Dense q, k, v;
    nn::LayerNorm ln_m, ln_h;
    nn::Mlp residual;
    nn::Mlp phi_x;
  };

  nn::Mlp embed_mlp_;
  nn::FourierEmbedding fourier_;
  nn::Dense fourier_proj_;
  nn::Dense node_embed_;
  nn::Dense edge_embed_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Baselines.

class Egnn final : public Model {
 public:
  struct LayerTape {
    Matrix h_in;
    Matrix diff;  // E x 3, x_i - x_j
    Matrix edge_in;
    nn::Mlp::Cache phi_e;
    Matrix messages;
    nn::Mlp::Cache phi_x;
    Matrix weights;  // E x 1
    nn::Mlp::Cache phi_v;
    Matrix vel_scale;  // N x 1
    Matrix node_in;
    nn::Mlp::Cache phi_h;
  };
  struct ForwardTape : Tape {
    Matrix positions_in;
    Matrix h0;
    std::vector<LayerTape> layers;
  };

  Egnn(const ModelConfig& cfg, std::uint64_t seed);
  ModelOutput forward(const Batch& batch, std::unique_ptr<Tape>* tape = nullptr) const override;
  InputGrads backward(const Tape& tape, const Matrix& d_vectors,
                      bool need_input_grads = false) override;
  bool supports_input_grads() const override { return true; }

  /// Per-edge coordinate contributions C * (x_i - x_j) * phi_x(m_ij) for one layer.
  static Matrix edge_contributions(const ForwardTape& tape, const Batch& batch, int layer);

 private:
  struct Layer {
    nn::Mlp phi_e;
    nn::Mlp phi_x;
    nn::Mlp phi_v;
    nn::Mlp phi_h;
  };
  nn::Dense node_embed_;
  std::vector<Layer> layers_;
};

class Gnn final : public Model {
 public:
  struct ForwardTape : Tape {
    Matrix raw;
    Matrix h0;
    std::vector<Matrix> h_in;
    std::vector<Matrix> edge_in;
    std::vector<nn::Mlp::Cache> phi_e;
    std::vector<Matrix> node_in;
    std::vector<nn::Mlp::Cache> phi_h;
    nn::Mlp::Cache head;
  };

  Gnn(const ModelConfig& cfg, std::uint64_t seed);
  ModelOutput forward(const Batch& batch, std::unique_ptr<Tape>* tape = nullptr) const override;
  InputGrads backward(const Tape& tape, const Matrix& d_vectors,
                      bool need_input_grads = false) override;
  bool supports_input_grads() const override { return true; }

 private:
  struct Layer {
    nn::Mlp phi_e;
    nn::Mlp phi_h;
  };
  nn::Dense node_embed_;
  std::vector<Layer> layers_;
  nn::Mlp head_;
};

// ---------------------------------------------------------------------------
// Equivariance metric.

using VectorFn = std::function<Matrix(const SystemInput&)>;

/// Wraps a model as a single-system function returning output.vectors.
VectorFn as_vector_fn(const Model& model);

/// Mean over (input, rotation) pairs of |R f(x) - f(R x)| / |R f(x)|.
/// Samples with a zero denominator are skipped; throws if all are skipped.
double equivariance_error(const VectorFn& fn, std::span<const SystemInput> inputs,
                          int n_rotations, nn::Rng& rng);

}  // namespace clof::models
