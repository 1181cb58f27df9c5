// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "duma/cli.hpp"
#include "json.hpp"

using namespace duma;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "duma");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small enough that train finishes in a second or two.
fs::path tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({
    "model": { "d_model": 16, "heads": 2, "n_enc": 1, "max_len": 32 },
    "train": { "max_steps": 20, "batch_size": 4, "warmup_steps": 2, "eval_every": 10 },
    "data":  { "n_keys": 10, "n_values": 10, "pairs_per_passage": 3, "options": 3,
               "n_train": 64, "n_dev": 16, "n_test": 16, "seed": 2 }
  })";
  return p;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("duma_cli_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--no-such-flag"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"train", "--help"}).code == 0);

  const auto bad = run({"train", "--lr", "-1", "--out", scratch("bad").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: ", 0) == 0);
  CHECK(bad.err.find("peak_lr") != std::string::npos);
  CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);

  const auto fuse = run({"count-params", "--fuse", "max"});
  CHECK(fuse.code == 1);
  CHECK(fuse.err.rfind("error: ", 0) == 0);
}

TEST_CASE("help lists every subcommand and flag") {
  const auto top = run({"--help"});
  for (const char* sub : {"gen-data", "train", "eval", "ablate", "gradcheck", "count-params"})
    CHECK(top.out.find(sub) != std::string::npos);
  const auto train = run({"train", "--help"});
  for (const char* flag : {"--config", "--seed", "--out", "--data", "--checkpoint", "--k-layers",
                           "--fuse", "--direction", "--variant", "--head-mode", "--max-steps",
                           "--lr", "--batch-size", "--warmup-steps"})
    CHECK_MESSAGE(train.out.find(flag) != std::string::npos, flag);
  const auto ablate = run({"ablate", "--help"});
  for (const char* flag : {"--suite", "--seeds", "--parallel-seeds"})
    CHECK_MESSAGE(ablate.out.find(flag) != std::string::npos, flag);
}

TEST_CASE("gradcheck passes for each head") {
  for (const char* head : {"duma", "vanilla_sa", "sa_plus_ca"}) {
    const auto r = run({"gradcheck", "--head-mode", head});
    INFO(std::string(head) << ": " << r.out << r.err);
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).at("pass") == true);
  }
}

TEST_CASE("count-params reports the component split") {
  const fs::path dir = scratch("count");
  const auto cfg = tiny_config(dir);
  const auto r = run({"count-params", "--config", cfg.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("head") == 4 * 16 * 16);
  CHECK(j.at("decoder") == 32);
  CHECK(j.at("total") == j.at("encoder").get<int>() + j.at("head").get<int>() + 32);
  const auto one = nlohmann::json::parse(
      run({"count-params", "--config", cfg.string(), "--k-layers", "5"}).out);
  CHECK(one.at("total") == j.at("total"));
}

TEST_CASE("gen-data, train and eval reproduce byte-identical artifacts") {
  const fs::path root = scratch("pipeline");
  const auto cfg = tiny_config(root).string();

  for (const char* d : {"data_a", "data_b"}) {
    const auto r = run({"gen-data", "--config", cfg, "--out", (root / d).string()});
    REQUIRE(r.code == 0);
  }
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"})
    CHECK(slurp(root / "data_a" / f) == slurp(root / "data_b" / f));
  CHECK_FALSE(slurp(root / "data_a" / "train.jsonl").empty());

  std::string first_summary;
  for (const char* d : {"run_a", "run_b"}) {
    const auto r = run({"train", "--config", cfg, "--data", (root / "data_a").string(), "--out",
                        (root / d).string(), "--seed", "3"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    if (first_summary.empty()) first_summary = r.out;
    CHECK(r.out == first_summary);
  }
  for (const char* f : {"checkpoint.bin", "metrics.jsonl", "config.json"})
    CHECK_MESSAGE(slurp(root / "run_a" / f) == slurp(root / "run_b" / f), f);
  CHECK(fs::exists(root / "run_a" / "timing.jsonl"));

  const auto summary = nlohmann::json::parse(first_summary);
  CHECK(summary.at("steps") == 20);
  const auto ev = run({"eval", "--checkpoint", (root / "run_a" / "checkpoint.bin").string(),
                       "--data", (root / "data_a" / "test.jsonl").string()});
  REQUIRE(ev.code == 0);
  const auto acc = nlohmann::json::parse(ev.out);
  CHECK(acc.at("n") == 16);
  CHECK(acc.at("accuracy").get<double>() == summary.at("test_acc").get<double>());

  const auto missing = run({"eval", "--checkpoint", (root / "nope.bin").string(), "--data",
                            (root / "data_a" / "test.jsonl").string()});
  CHECK(missing.code == 2);
}

TEST_CASE("training resumes from a saved checkpoint") {
  const fs::path root = scratch("resume");
  const auto cfg = tiny_config(root).string();
  const auto full = run({"train", "--config", cfg, "--out", (root / "full").string()});
  REQUIRE(full.code == 0);
  const auto part = run({"train", "--config", cfg, "--max-steps", "20", "--out",
                         (root / "again").string(), "--checkpoint",
                         (root / "full" / "checkpoint.bin").string()});
  REQUIRE(part.code == 0);
  // A finished checkpoint stays finished: no further updates.
  CHECK(slurp(root / "full" / "metrics.jsonl") == slurp(root / "again" / "metrics.jsonl"));
}

TEST_CASE("ablate writes a report and per-run logs") {
  const fs::path root = scratch("ablate");
  const auto cfg = tiny_config(root).string();
  const auto r = run({"ablate", "--config", cfg, "--suite", "fuse_modes", "--seeds", "2",
                      "--max-steps", "4", "--out", (root / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(root / "out" / "report.tsv"));
  CHECK(fs::exists(root / "out" / "report.json"));
  CHECK(fs::exists(root / "out" / "runs" / "concat.seed2.metrics.jsonl"));
  CHECK(r.out.find("mul") != std::string::npos);
  CHECK(run({"ablate", "--suite", "nonsense", "--out", (root / "x").string()}).code == 1);
}
