#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "distmatch/app.hpp"
#include "distmatch/charfn.hpp"
#include "distmatch/error.hpp"
#include "distmatch/io.hpp"

using namespace distmatch;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("distmatch_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_lq(const fs::path& out) {
  json j = json::parse(R"({
    "env": {"kind": "lq", "params": {"horizon": 3}},
    "policy": {"architecture": "theory2layer", "width": 4, "seed": 1},
    "grid": {"K": 5, "L": 64, "alpha": 0.05},
    "target": {"kind": "lq-feedback", "gain": -0.5, "samples": 2048, "seed": 3},
    "train": {"M": 256, "max_iters": 5, "threshold": 0, "stall_window": 100, "restart_limit": 0,
              "seed": 1, "schedule": {"kind": "adam", "alpha": 0.01}}
  })");
  j["outputs"] = {{"dir", out.string()}};
  return j;
}

fs::path write_config(const fs::path& dir, const json& cfg) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("cmd_train: small LQ run writes every artifact") {
  const fs::path dir = scratch("train");
  json cfg = small_lq(dir / "run");
  cfg["outputs"]["checkpoint_every"] = 2;
  cfg["outputs"]["dump_trajectories"] = true;
  std::ostringstream log;
  // Threshold 0 never converges, so the run ends unconverged without a stall.
  const int code = app::cmd_train(write_config(dir, cfg), {}, log);
  CHECK(code == 3);
  const fs::path run = dir / "run";
  for (const char* f : {"metrics.csv", "cf.csv", "hist.csv", "samples_target.txt", "samples_learned.txt",
                        "params.json", "manifest.json", "trajectories.csv"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  CHECK(fs::exists(run / "checkpoints" / "iter_2.json"));

  const auto metrics = read_csv(run / "metrics.csv");
  REQUIRE(metrics.size() == 6);
  CHECK(metrics[0] == std::vector<std::string>{"iter", "loss", "grad_norm", "alpha"});
  for (std::size_t r = 1; r < metrics.size(); ++r) {
    CHECK(metrics[r][0] == std::to_string(r - 1));
    const double loss = io::parse_double(metrics[r][1]);
    CHECK(io::format_double(loss) == metrics[r][1]);
  }
  const auto cf = read_csv(run / "cf.csv");
  CHECK(cf.size() == 65);
  CHECK(cf[0] == std::vector<std::string>{"u", "target_re", "target_im", "learned_re", "learned_im"});
  const auto hist = read_csv(run / "hist.csv");
  CHECK(hist.size() == 65);
  CHECK(hist[0] == std::vector<std::string>{"bin_lo", "bin_hi", "target_count", "learned_count"});
  CHECK(read_samples(run / "samples_target.txt").size() == read_samples(run / "samples_learned.txt").size());

  const json manifest = json::parse(io::read_text(run / "manifest.json"));
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest["metrics"]["iterations"] == 5);
  CHECK(manifest["metrics"]["converged"] == false);

  std::ostringstream rlog;
  CHECK(app::cmd_report(run, rlog) == 0);
  const json summary = json::parse(io::read_text(run / "summary.json"));
  for (const char* key : {"final_loss", "W1", "iters", "restarts"}) CHECK(summary.contains(key));
  CHECK(summary["iters"] == 5);
  CHECK(summary["final_loss"].get<double>() == io::parse_double(metrics.back()[1]));
  fs::remove_all(dir);
}

TEST_CASE("cmd_train: converged run exits 0") {
  const fs::path dir = scratch("converge");
  json cfg = small_lq(dir / "run");
  cfg["train"]["threshold"] = 10.0;
  std::ostringstream log;
  CHECK(app::cmd_train(write_config(dir, cfg), {}, log) == 0);
  fs::remove_all(dir);
}

TEST_CASE("cmd_train: negative batch size names the offending key") {
  const fs::path dir = scratch("badm");
  json cfg = small_lq(dir / "run");
  cfg["train"]["M"] = -5;
  std::ostringstream log;
  CHECK(app::cmd_train(write_config(dir, cfg), {}, log) == 1);
  CHECK(log.str().find("train.M") != std::string::npos);
}

TEST_CASE("cmd_train: schema errors carry JSON paths") {
  const fs::path dir = scratch("schema");
  auto expect = [&](json cfg, const std::string& path) {
    std::ostringstream log;
    CHECK(app::cmd_train(write_config(dir, cfg), {}, log) == 1);
    CHECK_MESSAGE(log.str().find(path) != std::string::npos, log.str());
  };
  json a = small_lq(dir / "run");
  a["train"]["learning_rate"] = 0.1;
  expect(a, "train.learning_rate");
  json b = small_lq(dir / "run");
  b["grid"]["L"] = 1.5;
  expect(b, "grid.L");
  json c = small_lq(dir / "run");
  c["target"] = {{"kind", "wrapped-gaussian"}, {"mean", 0.0}, {"variance", 1.0}};
  expect(c, "target.kind");
  json d = small_lq(dir / "run");
  d["policy"]["depth"] = 3;
  expect(d, "policy.depth");
  std::ostringstream log;
  CHECK(app::cmd_train(dir / "missing.json", {}, log) == 1);
  fs::remove_all(dir);
}

TEST_CASE("cmd_train: unreachable Dirac target without restarts stalls") {
  const fs::path dir = scratch("stall");
  json cfg = small_lq(dir / "run");
  cfg["env"]["params"] = {{"horizon", 1}, {"sigma_eps", 0.0}};
  cfg["target"] = {{"kind", "dirac"}, {"location", 5.0}};
  cfg["train"]["threshold"] = 1e-3;
  cfg["train"]["stall_window"] = 5;
  cfg["train"]["max_iters"] = 200;
  cfg["train"]["restart_limit"] = 0;
  std::ostringstream log;
  CHECK(app::cmd_train(write_config(dir, cfg), {}, log) == 3);
  const json manifest = json::parse(io::read_text(dir / "run" / "manifest.json"));
  CHECK(manifest["metrics"]["converged"] == false);
  fs::remove_all(dir);
}

TEST_CASE("cmd_oracle: torus targets") {
  const fs::path dir = scratch("torus");
  json cfg = json::parse(R"({
    "env": {"kind": "torus", "params": {"horizon": 1, "sigma_eps": 0.5}},
    "grid": {"K": 8, "L": 16, "alpha": 0.05},
    "target": {"kind": "wrapped-gaussian", "mean": 1.0, "variance": 0.5},
    "oracle": {"kind": "torus-deconvolve", "s0": 0.0, "sigma": 0.5, "k_modes": 8,
               "target": {"kind": "wrapped-gaussian", "mean": 1.0, "variance": 0.5}}
  })");
  cfg["outputs"] = {{"dir", (dir / "ok").string()}};
  std::ostringstream log;
  CHECK(app::cmd_oracle(write_config(dir, cfg), {}, log) == 0);
  CHECK(read_csv(dir / "ok" / "nu_modes.csv").size() == 10);

  cfg["oracle"]["target"] = {{"kind", "dirac"}, {"location", 1.0}};
  cfg["outputs"] = {{"dir", (dir / "bad").string()}};
  std::ostringstream log2;
  CHECK(app::cmd_oracle(write_config(dir, cfg), {}, log2) == 4);
  CHECK(log2.str().find("infeasible") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cmd_oracle: Jacobi-Anger modes file") {
  const fs::path dir = scratch("ja");
  json cfg = json::parse(R"({
    "env": {"kind": "cosine"},
    "target": {"kind": "epanechnikov"},
    "oracle": {"kind": "jacobi-anger", "s0": 0.0, "sigma": 0.1, "V": 1.0, "k_modes": 16,
               "grid": {"K": 16, "L": 8001, "alpha": 0.05}, "target": {"kind": "epanechnikov"}}
  })");
  cfg["outputs"] = {{"dir", dir.string()}};
  std::ostringstream log;
  CHECK(app::cmd_oracle(write_config(dir, cfg), {}, log) == 0);
  const auto modes = read_csv(dir / "modes.csv");
  REQUIRE(modes.size() == 18);
  CHECK(modes[0] == std::vector<std::string>{"k", "re", "im", "abs"});
  for (std::size_t r = 1; r < modes.size(); ++r) {
    if (std::stoi(modes[r][0]) % 2 == 1) CHECK(io::parse_double(modes[r][3]) <= 1e-8);
  }
  CHECK(read_csv(dir / "density.csv")[0] == std::vector<std::string>{"x", "p"});
  fs::remove_all(dir);
}

TEST_CASE("cmd_report: missing artifacts") {
  const fs::path dir = scratch("empty");
  std::ostringstream log;
  CHECK(app::cmd_report(dir, log) == 1);
  fs::remove_all(dir);
}

TEST_CASE("cmd_verify: unknown suite") {
  std::ostringstream log;
  CHECK(app::cmd_verify("nonsense", 1, log) == 1);
  CHECK(app::cmd_verify("bernoulli", 1, log) == 0);
}

TEST_CASE("config_hash: independent of key order") {
  const json a = json::parse(R"({"train": {"M": 4, "seed": 1}, "grid": {"K": 2, "L": 8}})");
  const json b = json::parse(R"({"grid": {"L": 8, "K": 2}, "train": {"seed": 1, "M": 4}})");
  CHECK(app::config_hash(a) == app::config_hash(b));
  CHECK(app::config_hash(a).size() == 16);
  json c = b;
  c["train"]["M"] = 5;
  CHECK(app::config_hash(a) != app::config_hash(c));
}

TEST_CASE("parse_run_config: scales and overrides") {
  json doc = small_lq("run");
  doc["scales"] = {{"paper", {{"train", {{"M", 9999}}}}}};
  const auto desk = app::parse_run_config(doc);
  CHECK(desk.train.batch_size == 256);
  app::Overrides o;
  o.scale = "paper";
  o.seed = 42;
  o.threads = 3;
  const auto paper = app::parse_run_config(doc, o);
  CHECK(paper.train.batch_size == 9999);
  CHECK(paper.train.seed == 42);
  CHECK(paper.train.threads == 3);
  CHECK(paper.scale == "paper");
  o.scale = "huge";
  CHECK_THROWS_AS(app::parse_run_config(doc, o), ConfigError);
}

TEST_CASE("bundled presets parse") {
  const fs::path presets = fs::path(DISTMATCH_SOURCE_DIR) / "presets";
  for (const char* name : {"lq", "wealth-full", "wealth-uniform", "epanechnikov", "torus"}) {
    CAPTURE(name);
    CHECK_NOTHROW(app::load_run_config(presets / (std::string(name) + ".json")));
    app::Overrides o;
    o.scale = "paper";
    CHECK_NOTHROW(app::load_run_config(presets / (std::string(name) + ".json"), o));
  }
}
