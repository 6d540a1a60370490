#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "clof/data_io.hpp"
#include "support.hpp"

using namespace clof;
using namespace clof::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "clof_data_io_tests" / name;
  fs::create_directories(p.parent_path());
  return p;
}

GenerateOptions tiny(SystemTag sys) {
  GenerateOptions g;
  g.system = sys;
  g.train = 3;
  g.valid = 2;
  g.test = 2;
  g.horizon_steps = 10;
  return g;
}

bool throws_with(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
  } catch (const std::exception& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("records round trip for every system") {
  for (auto sys : {SystemTag::es, SystemTag::g_es, SystemTag::l_es, SystemTag::torsion, SystemTag::pos}) {
    CAPTURE(to_string(sys));
    const TrajectoryRecord r = generate_record(tiny(sys), 1);
    const TrajectoryRecord back = parse_record(to_line(r));
    CHECK(back == r);
    CHECK(to_line(back) == to_line(r));
  }
}

TEST_CASE("strict record parsing") {
  const std::string line = to_line(generate_record(tiny(SystemTag::es), 0));
  std::string extra = line;
  extra.insert(1, "\"bogus\":1,");
  CHECK_THROWS(parse_record(extra));
  const auto pos = line.find("\"dt\"");
  std::string missing = line.substr(0, pos - 1) + "}";  // drops dt and horizon_steps
  CHECK_THROWS(parse_record(missing));
  std::string bad = line;
  bad.replace(bad.find("\"n\":5"), 5, "\"n\":4");
  CHECK_THROWS_AS(parse_record(bad), std::invalid_argument);
}

TEST_CASE("dataset errors carry the line number") {
  const auto splits = generate_splits(tiny(SystemTag::es));
  const fs::path p = scratch("bad.jsonl");
  write_dataset(splits.train, p);
  {
    std::ofstream out(p, std::ios::app | std::ios::binary);
    out << "{oops}\n";
  }
  CHECK(throws_with([&] { read_dataset(p); }, ":4"));
  write_dataset(splits.train, p);
  CHECK(read_dataset(p) == splits.train);
}

TEST_CASE("n-body records are the simulated window") {
  GenerateOptions g = tiny(SystemTag::es);
  const TrajectoryRecord r = generate_record(g, 2);
  auto rng = dynamics::trajectory_rng(g.seed, 2);
  const auto s = dynamics::random_state(dynamics::FieldKind::es, g.n_bodies, rng);
  const auto t = dynamics::leapfrog_simulate(dynamics::ForceField{}, s, g.dt, kSimulatedSteps);
  CHECK(r.x0 == t.positions[kWindowStart]);
  CHECK(r.v0 == t.velocities[kWindowStart]);
  CHECK(*r.target_x == t.positions[kWindowStart + g.horizon_steps]);
  CHECK(r.charges == s.charges);
}

TEST_CASE("pos records sample half steps of the observed bodies") {
  const TrajectoryRecord r = generate_record(tiny(SystemTag::pos), 0);
  const PosProtocol p;
  REQUIRE(r.trajectory);
  CHECK(r.n == p.observed);
  CHECK(r.trajectory->times.size() == 201);
  CHECK(r.trajectory->times[2] == 2 * (0.5 * p.dt));
  CHECK(r.trajectory->positions[0] == r.x0);
  CHECK(r.masses.size() == 4);
}

TEST_CASE("generation does not depend on the worker count") {
  GenerateOptions g = tiny(SystemTag::g_es);
  g.threads = 1;
  const Splits a = generate_splits(g);
  g.threads = 3;
  const Splits b = generate_splits(g);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.valid[0].id == 3);
  CHECK(a.test[1].id == 6);
}

TEST_CASE("checkpoint round trip is bit exact") {
  models::ModelConfig c;
  c.hidden = 6;
  c.layers = 2;
  c.block = models::BlockKind::transformer;
  auto m = models::make_model(c, 3);
  test::perturb(*m, 4);
  const Checkpoint ck = make_checkpoint(*m, 3, TrainingMeta{5, 0.25, 0.5, "es"});
  const fs::path p = scratch("ckpt.json");
  save_checkpoint(ck, p);
  const Checkpoint back = load_checkpoint(p);
  CHECK(to_text(back) == to_text(ck));
  auto m2 = restore_model(back);
  auto it = m2->params().begin();
  for (const auto& q : m->params()) {
    CHECK(it->value == q.value);
    ++it;
  }
  std::mt19937_64 rng(5);
  const auto s = test::random_system(4, rng);
  CHECK(m->forward(models::collate(s)).vectors == m2->forward(models::collate(s)).vectors);
  CHECK(back.training.epochs == 5);
}

TEST_CASE("restore validates names and shapes") {
  models::ModelConfig c;
  c.hidden = 4;
  c.layers = 1;
  auto m = models::make_model(c, 1);
  Checkpoint ck = make_checkpoint(*m, 1, {});
  ck.params[1].shape = {99};
  CHECK(throws_with([&] { restore_model(ck); }, ck.params[1].name));
  ck = make_checkpoint(*m, 1, {});
  ck.params[0].name = "nope";
  CHECK(throws_with([&] { restore_model(ck); }, "nope"));
  std::string text = to_text(make_checkpoint(*m, 1, {}));
  text.replace(text.find("\"format_version\":1"), 18, "\"format_version\":9");
  CHECK_THROWS(parse_checkpoint(text));
}

TEST_CASE("metrics CSV") {
  const fs::path p = scratch("m.csv");
  std::vector<MetricsRow> rows{{1, "train", "clofnet", "es", 0.5, std::nullopt, 0.1},
                               {1, "test", "odd,name", "es", 0.25, 1e-12, 0.2}};
  write_metrics_csv(rows, p);
  write_metrics_csv({rows[0]}, p, true);
  const std::string text = read_file(p);
  CHECK(text.rfind(std::string(kMetricsHeader) + "\r\n", 0) == 0);
  CHECK(text.find("\"odd,name\"") != std::string::npos);
  CHECK(text.find(kMetricsHeader, 1) == std::string::npos);
  const auto back = read_metrics_csv(p);
  REQUIRE(back.size() == 3);
  CHECK(back[1].model == "odd,name");
  CHECK(*back[1].delta_eq == 1e-12);
  CHECK_FALSE(back[0].delta_eq);
}

TEST_CASE("experiment config") {
  ExperimentConfig c = parse_experiment_config("{\"model\":\"egnn\",\"lr\":0.001}");
  CHECK(c.model == "egnn");
  CHECK(c.lr == 0.001);
  CHECK(c.hidden == 64);
  CHECK(parse_experiment_config(to_text(c)) == c);
  CHECK_THROWS(parse_experiment_config("{\"hiden\":3}"));
  CHECK_THROWS(parse_experiment_config("{\"hidden\":\"3\"}"));
  CHECK_THROWS(parse_experiment_config("{\"model\":\"mlp\"}"));
}

TEST_CASE("non-finite reals are not serialized") {
  CHECK_THROWS(format_real(std::nan("")));
  CHECK_THROWS(format_real(INFINITY));
}
