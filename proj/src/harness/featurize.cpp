#include <stdexcept>

#include "clof/harness.hpp"

namespace clof::harness {

using data::SystemTag;

FeatureSpec feature_spec(SystemTag system) {
  FeatureSpec s;
  s.system = system;
  switch (system) {
    case SystemTag::es: break;
    case SystemTag::g_es:
      s.field_channel = true;
      s.vector_channels = 2;
      s.field = {0.0, 0.0, dynamics::kDefaultG};
      break;
    case SystemTag::l_es:
      s.field_channel = true;
      s.vector_channels = 2;
      s.field = dynamics::kDefaultB;
      break;
    case SystemTag::torsion:
      s.node_dim = 4;
      s.vector_channels = 0;
      s.output = models::VectorOutput::displacement;
      break;
    case SystemTag::pos:
      s.node_dim = 1;
      s.output = models::VectorOutput::displacement;
      break;
  }
  return s;
}

Matrix to_matrix(const std::vector<Vec3>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = v[i].x;
    m(r, 1) = v[i].y;
    m(r, 2) = v[i].z;
  }
  return m;
}

std::vector<Vec3> to_vec3s(const Matrix& m) {
  if (m.cols() != 3) throw std::invalid_argument("to_vec3s: expected n x 3");
  std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = {m(i, 0), m(i, 1), m(i, 2)};
  return v;
}

namespace {

models::SystemInput build(const std::vector<Vec3>& x, const std::vector<Vec3>& v,
                          const std::vector<double>& charges, const FeatureSpec& spec) {
  const int n = static_cast<int>(x.size());
  models::SystemInput s;
  s.positions = to_matrix(x);
  switch (spec.system) {
    case SystemTag::torsion: {
      if (n != 4) throw std::invalid_argument("featurize: torsion systems have 4 particles");
      s.node_features = Matrix::Identity(4, 4);
      s.edges = models::star_edges(4, 0);
      s.edge_features = Matrix::Ones(static_cast<Eigen::Index>(s.edges.size()), 1);
      return s;
    }
    case SystemTag::pos: {
      s.vectors.push_back(to_matrix(v));
      s.node_features = Matrix::Ones(n, 1);
      s.edges = models::fully_connected_edges(n);
      s.edge_features = Matrix::Ones(static_cast<Eigen::Index>(s.edges.size()), 1);
      return s;
    }
    default: break;
  }
  if (static_cast<int>(charges.size()) != n) throw std::invalid_argument("featurize: charges required");
  s.vectors.push_back(to_matrix(v));
  if (spec.field_channel) s.vectors.push_back(to_matrix(std::vector<Vec3>(n, spec.field)));
  s.node_features.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    s.node_features(i, 0) = norm(v[i]);
    s.node_features(i, 1) = charges[i];
  }
  s.edges = models::fully_connected_edges(n);
  s.edge_features.resize(static_cast<Eigen::Index>(s.edges.size()), 1);
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    s.edge_features(static_cast<Eigen::Index>(e), 0) = charges[s.edges[e][0]] * charges[s.edges[e][1]];
  }
  return s;
}

}  // namespace

models::SystemInput featurize(const data::TrajectoryRecord& r, const FeatureSpec& spec) {
  if (r.system != spec.system) throw std::invalid_argument("featurize: record system differs from feature spec");
  return build(r.x0, r.v0, r.charges, spec);
}

models::SystemInput featurize_state(const std::vector<Vec3>& x, const std::vector<Vec3>& v,
                                    const FeatureSpec& spec) {
  return build(x, v, {}, spec);
}

Matrix target_matrix(const data::TrajectoryRecord& r) {
  if (r.target_x) return to_matrix(*r.target_x);
  if (r.forces) return to_matrix(*r.forces);
  throw std::invalid_argument("target_matrix: record has no per-particle label");
}

models::ModelConfig model_config(const data::ExperimentConfig& cfg, const FeatureSpec& spec) {
  models::ModelConfig c;
  c.kind = models::parse_model_kind(cfg.model);
  c.layers = cfg.layers;
  c.hidden = cfg.hidden;
  c.block = models::parse_block_kind(cfg.block);
  c.embed = models::parse_embed_kind(cfg.embed);
  c.frame_eps = cfg.eps;
  c.node_dim = spec.node_dim;
  c.edge_dim = spec.edge_dim;
  c.vector_channels = spec.vector_channels;
  c.velocity_update = spec.vector_channels > 0;
  c.output = spec.output;
  c.validate();
  return c;
}

Samples make_samples(const std::vector<data::TrajectoryRecord>& records, const FeatureSpec& spec) {
  Samples s;
  s.inputs.reserve(records.size());
  s.targets.reserve(records.size());
  for (const auto& r : records) {
    s.inputs.push_back(featurize(r, spec));
    s.targets.push_back(target_matrix(r));
  }
  return s;
}

}  // namespace clof::harness
