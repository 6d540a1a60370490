#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clof/dynamics.hpp"
#include "clof/models.hpp"

namespace clof::data {

// ---------------------------------------------------------------------------
// Canonical text output: fixed key order, shortest round-trip reals.

class CanonicalWriter {
 public:
  CanonicalWriter& begin_object();
  CanonicalWriter& end_object();
  CanonicalWriter& begin_array();
  CanonicalWriter& end_array();
  CanonicalWriter& key(std::string_view k);
  CanonicalWriter& value(double v);
  CanonicalWriter& value(std::int64_t v);
  CanonicalWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  CanonicalWriter& value(std::uint64_t v);
  CanonicalWriter& value(bool v);
  CanonicalWriter& value(std::string_view v);
  CanonicalWriter& value(const char* v) { return value(std::string_view(v)); }
  CanonicalWriter& value(const Vec3& v);
  CanonicalWriter& value(const std::vector<double>& v);
  CanonicalWriter& value(const std::vector<Vec3>& v);

  const std::string& str() const { return out_; }

 private:
  void separate();
  std::string out_;
  std::vector<bool> first_;
  bool after_key_ = false;
};

/// Shortest decimal that parses back to the same double. Throws on non-finite input.
std::string format_real(double v);

// ---------------------------------------------------------------------------
// Dataset records.

enum class SystemTag { es, g_es, l_es, pos, torsion };
std::string to_string(SystemTag t);
SystemTag parse_system_tag(const std::string& s);
dynamics::FieldKind field_kind(SystemTag t);

struct TimeSeries {
  std::vector<double> times;
  std::vector<std::vector<Vec3>> positions;  // T x N
  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct TrajectoryRecord {
  std::int64_t id = 0;
  SystemTag system = SystemTag::es;
  int n = 0;
  std::vector<double> charges;  // empty when absent
  std::vector<double> masses;
  std::vector<Vec3> x0;
  std::vector<Vec3> v0;
  std::optional<std::vector<Vec3>> target_x;
  std::optional<TimeSeries> trajectory;
  std::optional<std::vector<Vec3>> forces;
  double dt = 0.0;
  int horizon_steps = 0;

  /// Throws std::invalid_argument when shapes or the label kind are inconsistent.
  void validate() const;
  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

std::string to_line(const TrajectoryRecord& r);
/// Strict: unknown keys, missing keys and shape errors all throw.
TrajectoryRecord parse_record(std::string_view line);

void write_dataset(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path);
/// Errors carry the 1-based line number.
std::vector<TrajectoryRecord> read_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Generation.

inline constexpr int kWindowStart = 3000;
inline constexpr int kSimulatedSteps = 5000;

struct PosProtocol {
  int bodies = 6;
  int observed = 4;
  double dt = 1e-3;
  double t1 = 0.06;  // training labels
  double t2 = 0.08;  // validation
  double t3 = 0.10;  // extrapolation
  int substeps = 20;  // leapfrog steps per half sample
};

struct GenerateOptions {
  SystemTag system = SystemTag::es;
  int n_bodies = 5;
  int train = 1000;
  int valid = 200;
  int test = 200;
  std::uint64_t seed = 42;
  int horizon_steps = 1000;
  double dt = 1e-3;
  double softening = dynamics::kDefaultSoftening;
  PosProtocol pos;
  std::vector<double> torsion_v{1.0, 0.5};
  double torsion_min_normal = 0.3;
  int threads = 0;  // 0 uses worker_count()
};

struct Splits {
  std::vector<TrajectoryRecord> train;
  std::vector<TrajectoryRecord> valid;
  std::vector<TrajectoryRecord> test;
};

/// CLOF_THREADS if set and positive, otherwise hardware concurrency.
int worker_count();

/// Record k is a pure function of (options, seed, k); k runs over train,
/// then valid, then test.
TrajectoryRecord generate_record(const GenerateOptions& o, std::int64_t k);
Splits generate_splits(const GenerateOptions& o);

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr int kCheckpointFormatVersion = 1;

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

struct TrainingMeta {
  int epochs = 0;
  double final_train_loss = 0.0;
  double final_valid_loss = 0.0;
  std::string system;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  models::ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<ParamBlock> params;
  TrainingMeta training;
};

Checkpoint make_checkpoint(const models::Model& model, std::uint64_t seed, const TrainingMeta& meta);
std::string to_text(const Checkpoint& c);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Builds the model from the stored config and copies the parameters in,
/// validating names and shapes.
std::unique_ptr<models::Model> restore_model(const Checkpoint& c);

void write_model_config(CanonicalWriter& w, const models::ModelConfig& c);

// ---------------------------------------------------------------------------
// Metrics.

struct MetricsRow {
  int epoch = 0;
  std::string split;
  std::string model;
  std::string system;
  double mse = 0.0;
  std::optional<double> delta_eq;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,model,system,mse,delta_eq,wall_seconds";

/// Writes the header unless appending to a non-empty file.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path,
                       bool append = false);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment config.

struct ExperimentConfig {
  std::string system = "es";
  int n_bodies = 5;
  int train = 1000;
  int valid = 200;
  int test = 200;
  std::uint64_t seed = 42;
  std::string model = "clofnet";
  int layers = 4;
  int hidden = 64;
  std::string block = "naive";
  std::string embed = "mlp";
  double lr = 5e-4;
  int epochs = 200;
  int batch = 32;
  int horizon_steps = 1000;
  double dt = 1e-3;
  double softening = dynamics::kDefaultSoftening;
  double eps = kDefaultFrameEps;
  int patience = 50;
  double weight_decay = 1e-12;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

std::string to_text(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys and type errors throw.
ExperimentConfig parse_experiment_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace clof::data
