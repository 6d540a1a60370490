#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clof/data_io.hpp"
#include "clof/dynamics.hpp"
#include "clof/models.hpp"

namespace clof::harness {

using models::Matrix;

// ---------------------------------------------------------------------------
// Features.

struct FeatureSpec {
  data::SystemTag system = data::SystemTag::es;
  int node_dim = 2;
  int edge_dim = 1;
  int vector_channels = 1;
  bool field_channel = false;
  Vec3 field;
  models::VectorOutput output = models::VectorOutput::positions;
};

FeatureSpec feature_spec(data::SystemTag system);

/// n-body: vectors [v, (field)], h = [|v|, q], e_ij = q_i q_j, fully connected.
/// torsion: no vectors, h = one-hot role, e = [1], star graph rooted at particle 0.
/// pos: vectors [v], h = [1], e = [1], fully connected.
models::SystemInput featurize(const data::TrajectoryRecord& r, const FeatureSpec& spec);
/// Same layout as featurize() for a live state (used inside ODE rollouts).
models::SystemInput featurize_state(const std::vector<Vec3>& x, const std::vector<Vec3>& v,
                                    const FeatureSpec& spec);
/// target_x or forces.
Matrix target_matrix(const data::TrajectoryRecord& r);

models::ModelConfig model_config(const data::ExperimentConfig& cfg, const FeatureSpec& spec);

Matrix to_matrix(const std::vector<Vec3>& v);
std::vector<Vec3> to_vec3s(const Matrix& m);

// ---------------------------------------------------------------------------
// Supervised training.

struct Samples {
  std::vector<models::SystemInput> inputs;
  std::vector<Matrix> targets;
  std::size_t size() const { return inputs.size(); }
};

Samples make_samples(const std::vector<data::TrajectoryRecord>& records, const FeatureSpec& spec);

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  std::optional<double> valid_mse;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  /// Validation every this many epochs; early stopping counts epochs.
  int eval_every = 1;
  bool compute_delta_eq = true;
  int delta_eq_samples = 32;
  int rotations = 16;
  int eval_batch = 64;
  std::function<void(const EpochLog&)> on_epoch;
  /// Called after each epoch with the live model.
  std::function<void(int epoch, const models::Model&)> inspect;
};

struct TrainResult {
  std::unique_ptr<models::Model> model;  // parameters of the best validation epoch
  data::Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_valid_mse = 0.0;
  double test_mse = 0.0;
  double constant_baseline_mse = 0.0;  // test MSE of the train-mean predictor
  std::optional<double> delta_eq;
  double wall_seconds = 0.0;

  std::vector<data::MetricsRow> metrics_rows(const std::string& model, const std::string& system) const;
};

double evaluate_mse(const models::Model& model, const Samples& samples, int batch = 64);

/// AdamW on MSE with early stopping on validation MSE. Deterministic given
/// cfg.seed. Throws std::runtime_error naming the epoch if the loss diverges.
TrainResult train_model(const data::ExperimentConfig& cfg, const data::Splits& splits,
                        const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Sample-complexity sweep.

struct SweepRow {
  int size = 0;
  std::string model;
  int epochs = 0;
  double test_mse = 0.0;
};

struct SweepOptions {
  std::vector<int> sizes{200, 1000, 5000};
  std::vector<std::string> models{"clofnet", "gnn"};
  /// Optimizer steps per run; 0 uses cfg.epochs worth of steps at 1000 samples.
  long step_budget = 0;
  int max_evaluations = 200;
  std::function<void(const SweepRow&)> on_row;
};

/// Trains each model on nested prefixes of the training split.
std::vector<SweepRow> sample_complexity_sweep(const data::ExperimentConfig& cfg, const data::Splits& splits,
                                              const SweepOptions& options);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Partially observed system with a neural ODE.

struct PosOptions {
  int epochs = 60;
  int batch = 8;
  double lr = 1e-3;
  int hidden = 32;
  int layers = 2;
  double rtol = 1e-7;
  double atol = 1e-7;
  int patience = 20;
  int rotations = 16;
  std::uint64_t seed = 7;
  std::function<void(int epoch, double train, double valid)> on_epoch;
};

struct PosResult {
  std::vector<double> train_curve;
  double train_mse = 0.0;
  double valid_mse = 0.0;
  double interp_mse = 0.0;
  double extrap_mse = 0.0;
  double delta_eq = 0.0;
  int best_epoch = 0;
  std::unique_ptr<models::Model> model;
};

struct PosTimes {
  std::vector<double> train;   // dt, 2 dt, ..., T1
  std::vector<double> valid;   // T1 + dt, ..., T2
  std::vector<double> interp;  // dt/2, 3 dt/2, ..., T1 + dt/2
  std::vector<double> extrap;  // T2 + dt, ..., T3
};
PosTimes pos_times(const data::PosProtocol& p);

/// Positions of a record at one of its stored times.
std::vector<Vec3> pos_positions_at(const data::TrajectoryRecord& r, double t);

/// Rolls a batch of systems forward with accelerations from `model`.
/// Returns, per system, the positions at each requested time (times[0] = t0 excluded).
std::vector<std::vector<std::vector<Vec3>>> pos_rollout(const models::Model& model, const FeatureSpec& spec,
                                                         const std::vector<const data::TrajectoryRecord*>& batch,
                                                         const std::vector<double>& times, double rtol,
                                                         double atol);

/// MSE against the stored trajectory over `times` (t > 0).
double pos_mse(const models::Model& model, const std::vector<data::TrajectoryRecord>& records,
               const std::vector<double>& times, double rtol, double atol);

/// MSE of straight-line motion x0 + v0 t integrated with a zero
/// acceleration field, and the same quantity in closed form.
std::pair<double, double> pos_zero_model_mse(const std::vector<data::TrajectoryRecord>& records,
                                             const std::vector<double>& times, double rtol, double atol);

/// Delta_EQ of whole rollouts under rotations of the initial state.
double pos_delta_eq(const models::Model& model, const std::vector<data::TrajectoryRecord>& records,
                    const std::vector<double>& times, int rotations, std::uint64_t seed, double rtol,
                    double atol);

/// Mean squared position error of a joint rollout of `batch` over `times`.
/// With accumulate, also adds d(loss)/d(params) into the model's grads by
/// back-propagating through the Runge-Kutta stages (step sizes held fixed).
double pos_batch_loss(models::Model& model, const FeatureSpec& spec,
                      const std::vector<const data::TrajectoryRecord*>& batch, const std::vector<double>& times,
                      double rtol, double atol, bool accumulate);

/// Trains on splits.train over the label window, early-stops on splits.valid
/// over the validation window, and reports on splits.test.
PosResult train_pos(const data::Splits& splits, const data::PosProtocol& protocol, const PosOptions& options);

// ---------------------------------------------------------------------------
// Torsion separation.

struct TorsionOptions {
  int samples = 5000;
  int test = 400;
  int epochs = 400;
  int batch = 32;
  int hidden = 32;
  int layers = 2;
  double lr = 1e-3;
  std::uint64_t seed = 11;
  double min_normal = 0.3;  // rejection threshold on both plane normals
  int radial_checks = 10;  // radial audits of EGNN spread over training
  std::function<void(const std::string& model, const EpochLog&)> on_epoch;
};

struct TorsionReport {
  double clofnet_mse = 0.0;
  double egnn_mse = 0.0;
  double ratio = 0.0;
  double clofnet_delta_eq = 0.0;
  double egnn_max_nonradial = 0.0;  // max |c x d| / (|c| |d|) over edges, layers and checks
  int radial_checks = 0;
};

/// Largest normalized cross product between an EGNN layer's per-edge
/// coordinate contribution and the edge vector.
double egnn_max_nonradial(const models::Model& egnn, const Samples& samples);

TorsionReport torsion_separation(const TorsionOptions& options);

// ---------------------------------------------------------------------------
// Equivariance audit.

struct AuditEntry {
  std::string property;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct AuditReport {
  std::vector<AuditEntry> entries;
  bool passed() const;
  const AuditEntry* find(const std::string& property) const;
};

inline constexpr double kRotationTolerance = 1e-6;
inline constexpr double kTranslationTolerance = 1e-10;
inline constexpr double kPermutationTolerance = 1e-10;

/// Rotation (Delta_EQ), translation and permutation equivariance of the
/// model on `inputs`, plus the reflection law of the frames they induce.
AuditReport audit_equivariance(const models::Model& model, const std::vector<models::SystemInput>& inputs,
                               int n_rotations = 16, std::uint64_t seed = 0);

std::string format_report(const AuditReport& r);

/// Adds N(0, std^2) noise to every parameter, including zero-initialized heads.
void perturb_parameters(models::Model& model, std::uint64_t seed, double std = 0.1);

}  // namespace clof::harness
