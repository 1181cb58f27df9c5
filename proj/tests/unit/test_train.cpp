// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "duma/ablation.hpp"
#include "duma/checkpoint.hpp"
#include "duma/config.hpp"
#include "duma/errors.hpp"
#include "duma/train.hpp"
#include "test_util.hpp"

using namespace duma;
using duma::testing::bit_equal;
namespace fs = std::filesystem;

namespace {

SyntheticTaskConfig small_task() {
  SyntheticTaskConfig t;
  t.n_keys = 10;
  t.n_values = 10;
  t.pairs_per_passage = 3;
  t.options = 3;
  t.n_train = 96;
  t.n_dev = 24;
  t.n_test = 24;
  return t;
}

TrainConfig small_train() {
  TrainConfig cfg;
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.n_enc = 1;
  cfg.model.max_len = 32;
  cfg.batch_size = 4;
  cfg.max_steps = 40;
  cfg.warmup_steps = 5;
  cfg.eval_every = 10;
  cfg.patience = 0;
  return cfg;
}

struct Setup {
  DatasetSplits data = gen_synthetic(small_task(), 7);
  Vocab vocab = Vocab::build(data.train);
  std::vector<EncodedExample> train = encode_all(data.train, vocab, 32);
  std::vector<EncodedExample> dev = encode_all(data.dev, vocab, 32);
};

bool same_parameters(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bit_equal(pa[i].data(), pb[i].data())) return false;
  return true;
}

double batch_loss(const Model& m, std::span<const EncodedExample> batch) {
  NoGradGuard guard;
  double s = 0.0;
  for (const auto& ex : batch) s += loss(m.score_options(ex), ex.gold).item();
  return s / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.peak_lr = 1e-5;
  cfg.warmup_steps = 100;
  cfg.max_steps = 1100;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(50, cfg) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(lr_at(100, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(600, cfg) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(lr_at(1100, cfg) == 0.0);
  CHECK(lr_at(5000, cfg) == 0.0);
  cfg.constant_lr = true;
  CHECK(lr_at(1000, cfg) == 1e-5);
  cfg.warmup_steps = 0;
  CHECK(lr_at(0, cfg) == 1e-5);
}

TEST_CASE("fine-tuning preset and validation") {
  const auto d = TrainConfig::dream_finetune();
  CHECK(d.peak_lr == 1e-5);
  CHECK(d.batch_size == 8);
  CHECK(d.warmup_steps == 100);
  CHECK_NOTHROW(d.validate());
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.peak_lr = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.peak_lr = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.adam.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("a zero learning rate leaves every parameter bit-identical") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.peak_lr = 0.0;
  Trainer t(cfg, s.vocab, 1);
  const Model before = t.model();
  const auto snapshot = snapshot_parameters(before);
  const std::vector<std::size_t> ids{0, 1, 2, 3};
  t.step(std::span(s.train).subspan(0, 4), ids);
  CHECK(snapshot_parameters(t.model()) == snapshot);
}

TEST_CASE("loss on a fixed batch falls over the first 50 steps") {
  const auto data = gen_synthetic(SyntheticTaskConfig{}, 1);
  const Vocab vocab = Vocab::build(data.train);
  const auto batch = encode_all(std::span(data.train).subspan(0, 8), vocab, 64);
  const std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5, 6, 7};
  for (std::uint64_t seed : {1, 2, 3}) {
    Trainer t(TrainConfig{}, vocab, seed);
    const double start = batch_loss(t.model(), batch);
    for (int i = 0; i < 50; ++i) t.step(batch, ids);
    INFO("seed " << seed);
    CHECK(batch_loss(t.model(), batch) < start);
  }
}

TEST_CASE("accuracy counts argmax hits") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.model.vocab_size = s.vocab.size();
  cfg.model.init_std = 0.5;
  Model model(cfg.model, 3);
  std::vector<EncodedExample> four(s.dev.begin(), s.dev.begin() + 4);
  for (std::size_t i = 0; i < 4; ++i) {
    NoGradGuard guard;
    const auto pick = predict(model.score_options(four[i]).data());
    four[i].gold = i == 2 ? (pick + 1) % 3 : pick;
  }
  CHECK(evaluate(model, four) == 0.75);
  CHECK_THROWS_AS(evaluate(model, std::span<const EncodedExample>{}), ValidationError);
}

TEST_CASE("evaluation does not touch the model") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.model.vocab_size = s.vocab.size();
  Model model(cfg.model, 4);
  const auto before = snapshot_parameters(model);
  const double a = evaluate(model, s.dev), b = evaluate(model, s.dev);
  CHECK(a == b);
  CHECK(snapshot_parameters(model) == before);
  for (const auto& p : model.parameters()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("an untrained model guesses at chance") {
  SyntheticTaskConfig task;
  task.n_train = 200;
  const auto data = gen_synthetic(task, 1);
  const Vocab vocab = Vocab::build(data.train);
  TrainConfig cfg;
  cfg.model.vocab_size = vocab.size();
  Model model(cfg.model, 1);
  const double acc = evaluate(model, encode_all(data.test, vocab, 64));
  // n = 1000, p = 1/4: three binomial standard deviations.
  CHECK(std::fabs(acc - 0.25) <= 3.0 * std::sqrt(0.25 * 0.75 / 1000.0));
}

TEST_CASE("training is deterministic in the seed") {
  Setup s;
  Trainer a(small_train(), s.vocab, 5), b(small_train(), s.vocab, 5), c(small_train(), s.vocab, 6);
  a.run(s.train, s.dev);
  b.run(s.train, s.dev);
  c.run(s.train, s.dev);
  CHECK(a.log() == b.log());
  CHECK(a.log().to_jsonl() == b.log().to_jsonl());
  CHECK(same_parameters(a.model(), b.model()));
  CHECK_FALSE(same_parameters(a.model(), c.model()));
  CHECK(a.steps_done() == 40);
  CHECK(a.log().steps.size() == 40);
  CHECK(a.log().evals.size() == 4);
  REQUIRE(a.log().final);
  CHECK(a.log().final->best_dev == doctest::Approx(a.checkpoint().best_dev));
}

TEST_CASE("a resumed run follows the uninterrupted trajectory") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.model.attention_dropout = 0.1;  // exercises the saved RNG stream too
  Trainer full(cfg, s.vocab, 9, "abc");
  full.run(s.train, s.dev);

  Trainer first(cfg, s.vocab, 9, "abc");
  first.run(s.train, s.dev, 23);
  CHECK(first.steps_done() == 23);
  CHECK_FALSE(first.finished());
  const Checkpoint saved = deserialize_checkpoint(serialize_checkpoint(first.checkpoint()));
  Trainer second(saved);
  second.run(s.train, s.dev);

  CHECK(second.steps_done() == full.steps_done());
  CHECK(same_parameters(second.model(), full.model()));
  CHECK(second.log() == full.log());
  CHECK(second.checkpoint() == full.checkpoint());
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Setup s;
  Trainer t(small_train(), s.vocab, 2, "hash");
  t.run(s.train, s.dev);
  const Checkpoint c = t.checkpoint();
  CHECK(deserialize_checkpoint(serialize_checkpoint(c)) == c);
  CHECK(serialize_checkpoint(deserialize_checkpoint(serialize_checkpoint(c))) ==
        serialize_checkpoint(c));

  const fs::path p = fs::temp_directory_path() / "duma_test_ckpt.bin";
  save_checkpoint(p, c);
  const Checkpoint back = load_checkpoint(p);
  CHECK(back == c);
  CHECK(same_parameters(model_from_checkpoint(back, false), t.model()));
  CHECK(same_parameters(model_from_checkpoint(back), t.best_model()));
  CHECK(evaluate(back, s.data.dev) == evaluate(t.best_model(), s.dev));
}

TEST_CASE("damaged checkpoints are rejected") {
  Setup s;
  Trainer t(small_train(), s.vocab, 2);
  const std::string bytes = serialize_checkpoint(t.checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 9)), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 10)), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), ParseError);

  Model other([&] {
    ModelConfig c = small_train().model;
    c.vocab_size = s.vocab.size();
    c.d_model = 8;
    return c;
  }(), 1);
  CHECK_THROWS_AS(load_parameters(other, t.checkpoint().params), ValidationError);
}

TEST_CASE("a non-finite loss aborts with the step and batch") {
  Setup s;
  Trainer t(small_train(), s.vocab, 1);
  t.model().decoder.w.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<std::size_t> ids{7, 8};
  CHECK_THROWS_WITH_AS(t.step(std::span(s.train).subspan(7, 2), ids),
                       doctest::Contains("step 1"), TrainingError);
  try {
    t.step(std::span(s.train).subspan(7, 2), ids);
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("7 8") != std::string::npos);
    CHECK(std::string(e.what()).find("lr") != std::string::npos);
  }
}

TEST_CASE("early stopping waits for the patience budget") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.peak_lr = 0.0;
  cfg.patience = 2;
  cfg.max_steps = 1000;
  Trainer t(cfg, s.vocab, 1);
  t.run(s.train, s.dev);
  CHECK(t.finished());
  CHECK(t.steps_done() == 30);  // best at the first eval, then two misses
  REQUIRE(t.log().final);
  CHECK(t.log().final->best_step == 10);
}

TEST_CASE("the epoch cap ends training") {
  Setup s;
  TrainConfig cfg = small_train();
  cfg.epochs = 2;
  cfg.max_steps = 1000;
  cfg.eval_every = 1000;
  Trainer t(cfg, s.vocab, 1);
  t.run(s.train, s.dev);
  CHECK(t.finished());
  CHECK(t.steps_done() == 2 * 96 / 4);
}

TEST_CASE("metrics log round-trips through JSONL") {
  MetricsLog log;
  log.seed = 3;
  log.config_hash = "00ff";
  log.steps = {{1, 1.25, 1e-4}, {2, 0.5, 2e-4}};
  log.evals = {{2, 0.75}};
  log.final = FinalRecord{2, 0.75, 0.5};
  log.wall_seconds = {{2, 1.5}};
  const auto back = MetricsLog::from_jsonl(log.to_jsonl());
  CHECK(back == log);
  CHECK(back.wall_seconds.empty());
  CHECK(log.to_jsonl().find("wall") == std::string::npos);
  CHECK(log.timings_jsonl().find("1.5") != std::string::npos);
  CHECK_THROWS_WITH_AS(MetricsLog::from_jsonl(log.to_jsonl() + "{bad\n"),
                       doctest::Contains("line 6"), ParseError);
}

TEST_CASE("ablation medians are recomputable from the per-run logs") {
  DatasetSplits data = gen_synthetic(small_task(), 3);
  TrainConfig cfg = small_train();
  cfg.max_steps = 10;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto report = run_ablation(Suite::directions, cfg, data, seeds, 1, "h");
  REQUIRE(report.rows.size() == 3);
  CHECK(report.runs.size() == 9);
  for (const auto& row : report.rows) {
    std::vector<double> tests;
    for (const auto& run : report.runs)
      if (run.variant == row.variant) {
        REQUIRE(run.log.final);
        REQUIRE(run.log.final->test_acc);
        tests.push_back(*run.log.final->test_acc);
      }
    CHECK(tests.size() == 3);
    CHECK(median(tests) == row.median_test);
  }
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), ValidationError);
  REQUIRE(report.checks.size() == 1);
  CHECK(report.to_json()["checks"][0]["regression"] == !report.checks[0].holds);
}

TEST_CASE("parallel seeds give the same report as sequential ones") {
  DatasetSplits data = gen_synthetic(small_task(), 4);
  TrainConfig cfg = small_train();
  cfg.max_steps = 10;
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto a = run_ablation(Suite::head_modes, cfg, data, seeds, 1, "h");
  const auto b = run_ablation(Suite::head_modes, cfg, data, seeds, 3, "h");
  CHECK(a.to_tsv() == b.to_tsv());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.rows.size() == 4);
}

TEST_CASE("run configuration round-trips through JSON") {
  RunConfig rc;
  rc.train.peak_lr = 3e-4;
  rc.train.seeds = {4, 5};
  rc.train.model.duma.fuse = FuseMode::mul;
  rc.train.model.duma.direction = Direction::q2p_only;
  rc.train.model.head_mode = HeadMode::sa_plus_ca;
  rc.data.options = 3;
  rc.data_seed = 9;
  const auto j = to_json(rc);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(config_hash(back) == config_hash(rc));
  CHECK(config_hash(rc).size() == 16);
  CHECK(config_hash(RunConfig{}) != config_hash(rc));
  CHECK(to_json(run_config_from_json(nlohmann::json::object())) == to_json(RunConfig{}));
}

TEST_CASE("unknown or mistyped config keys are rejected") {
  using nlohmann::json;
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"trian", json::object()}}),
                       doctest::Contains("trian"), ValidationError);
  CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"peak_lr", "fast"}}}}), ValidationError);
  CHECK_THROWS_AS(run_config_from_json(json{{"model", {{"duma", {{"fuse", "max"}}}}}}),
                  ValidationError);
  const fs::path p = fs::temp_directory_path() / "duma_bad_config.json";
  std::ofstream(p) << "{ not json";
  CHECK_THROWS_AS(load_run_config(p), ValidationError);
}
