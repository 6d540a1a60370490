#include <doctest.h>

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "clof/cli.hpp"
#include "clof/data_io.hpp"

namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<std::string> args) {
  std::vector<std::string> store{"clof"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : store) argv.push_back(s.data());
  return clof::cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path dir() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "clof_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}) == 1);
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run({"gen-data", "--out", s(dir() / "x"), "--no-such-flag"}) == 1);
  CHECK(run({"gen-data"}) == 1);
  CHECK(run({"gen-data", "--out", s(dir() / "x"), "--system", "plasma"}) == 1);
  CHECK(run({"train", "--help"}) == 0);
}

TEST_CASE("gen-data is byte stable and writes a sidecar") {
  const auto a = dir() / "gen_a", b = dir() / "gen_b";
  for (const auto& d : {a, b}) {
    REQUIRE(run({"gen-data", "--system", "es", "--n-bodies", "3", "--train", "4", "--valid", "2", "--test", "2",
                 "--seed", "42", "--horizon", "10", "--out", s(d)}) == 0);
  }
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) {
    CHECK(clof::data::read_file(a / f) == clof::data::read_file(b / f));
  }
  const std::string side = clof::data::read_file(a / "gen-data.config.json");
  CHECK(side.find("\"seed\":42") != std::string::npos);
}

TEST_CASE("train, eval and equi-check") {
  const auto data = dir() / "gen_train";
  REQUIRE(run({"gen-data", "--n-bodies", "3", "--train", "8", "--valid", "4", "--test", "4", "--horizon", "10",
               "--out", s(data)}) == 0);
  clof::data::write_file(dir() / "cfg.json", "{\"hidden\":4,\"layers\":1,\"epochs\":2,\"batch\":4}");
  const auto ckpt = dir() / "model.json";
  const auto metrics = dir() / "m.csv";
  REQUIRE(run({"train", "--config", s(dir() / "cfg.json"), "--hidden", "6", "--data", s(data), "--out", s(ckpt),
               "--metrics", s(metrics)}) == 0);
  CHECK(fs::exists(metrics));
  const std::string side = clof::data::read_file(s(ckpt) + ".config.json");
  CHECK(side.find("\"hidden\":6") != std::string::npos);
  CHECK(side.find("\"layers\":1") != std::string::npos);
  CHECK(side.find('\n') == side.size() - 1);  // one line
  CHECK(run({"eval", "--ckpt", s(ckpt), "--data", s(data / "test.jsonl"), "--sidecar", s(dir() / "ev.json")}) == 0);
  CHECK(run({"equi-check", "--ckpt", s(ckpt), "--data", s(data / "test.jsonl"), "--sidecar",
             s(dir() / "eq.json")}) == 0);
  const std::string eq = clof::data::read_file(dir() / "eq.json");
  CHECK(eq.find('\n') == eq.size() - 1);
  CHECK(run({"equi-check", "--model", "gnn", "--n-bodies", "3", "--train", "1", "--valid", "1", "--test", "4",
             "--horizon", "10", "--sidecar", s(dir() / "eq2.json")}) == 2);
}

TEST_CASE("bad inputs") {
  clof::data::write_file(dir() / "bad_cfg.json", "{\"hidden\":\"wide\"}");
  CHECK(run({"train", "--config", s(dir() / "bad_cfg.json"), "--out", s(dir() / "never.json")}) == 1);
  clof::data::write_file(dir() / "bad.jsonl", "{\"id\":0}\n");
  clof::data::write_file(dir() / "fake_ckpt.json", "{}");
  CHECK(run({"eval", "--ckpt", s(dir() / "fake_ckpt.json"), "--data", s(dir() / "bad.jsonl"), "--sidecar",
             s(dir() / "ev2.json")}) == 2);
}
