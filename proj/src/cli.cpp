// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "duma/ablation.hpp"
#include "duma/checkpoint.hpp"
#include "duma/config.hpp"
#include "duma/errors.hpp"
#include "duma/grad_check.hpp"
#include "duma/train.hpp"
#include "json.hpp"

namespace duma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fixed artifact names inside --out.
constexpr const char* kConfigFile = "config.json";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kTimingFile = "timing.jsonl";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kReportTsv = "report.tsv";
constexpr const char* kReportJson = "report.json";

// Flag values; unset optionals leave the config file (or default) alone.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "duma_out";
  std::string data;
  std::string checkpoint;
  std::string suite;
  std::string dims = "tiny";
  std::size_t seeds = 3;
  std::size_t parallel_seeds = 1;
  std::optional<std::size_t> max_steps, batch_size, warmup_steps, k_layers;
  std::optional<double> lr;
  std::optional<std::string> fuse, direction, variant, head_mode;
};

void add_config_flag(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration (flags override it)")
      ->check(CLI::ExistingFile);
}

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--k-layers", f.k_layers, "DUMA stacking depth k");
  cmd->add_option("--fuse", f.fuse, "fuse mode: mul | sum | concat");
  cmd->add_option("--direction", f.direction, "attention direction: both | p2q_only | q2p_only");
  cmd->add_option("--variant", f.variant, "DUMA block: plain | tb");
  cmd->add_option("--head-mode", f.head_mode, "head: duma | vanilla_sa | sa_plus_ca");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--max-steps", f.max_steps, "optimizer step budget");
  cmd->add_option("--lr", f.lr, "peak learning rate");
  cmd->add_option("--batch-size", f.batch_size, "examples per step");
  cmd->add_option("--warmup-steps", f.warmup_steps, "linear warmup length");
}

RunConfig resolve_config(const Flags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  TrainConfig& t = rc.train;
  ModelConfig& m = t.model;
  if (f.max_steps) t.max_steps = *f.max_steps;
  if (f.lr) t.peak_lr = *f.lr;
  if (f.batch_size) t.batch_size = *f.batch_size;
  if (f.warmup_steps) t.warmup_steps = *f.warmup_steps;
  if (f.k_layers) m.duma.layers = *f.k_layers;
  if (f.fuse) m.duma.fuse = parse_fuse_mode(*f.fuse);
  if (f.direction) m.duma.direction = parse_direction(*f.direction);
  if (f.variant) m.duma.variant = parse_variant(*f.variant);
  if (f.head_mode) m.head_mode = parse_head_mode(*f.head_mode);
  t.validate();
  rc.data.validate();
  return rc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// A .json file is read as a DREAM release file, anything else as canonical JSONL.
std::vector<McExample> load_examples(const fs::path& path) {
  if (path.extension() == ".json") return load_dream(path);
  return load_jsonl(path);
}

// --data DIR holds train.jsonl, dev.jsonl and test.jsonl (as written by
// gen-data); without it the synthetic task is generated from the config.
DatasetSplits load_splits(const Flags& f, const RunConfig& rc) {
  if (f.data.empty()) return gen_synthetic(rc.data, rc.data_seed);
  const fs::path dir(f.data);
  if (!fs::is_directory(dir)) throw ValidationError("--data " + f.data + " is not a directory");
  DatasetSplits s;
  s.train = load_jsonl(dir / "train.jsonl");
  if (fs::exists(dir / "dev.jsonl")) s.dev = load_jsonl(dir / "dev.jsonl");
  if (fs::exists(dir / "test.jsonl")) s.test = load_jsonl(dir / "test.jsonl");
  return s;
}

void prepare_out(const fs::path& out, const RunConfig& rc) {
  fs::create_directories(out);
  write_file(out / kConfigFile, to_json(rc).dump(2) + "\n");
}

int cmd_gen_data(const Flags& f, std::ostream& out) {
  RunConfig rc = resolve_config(f);
  if (f.seed) rc.data_seed = *f.seed;
  const DatasetSplits s = gen_synthetic(rc.data, rc.data_seed);
  const fs::path dir(f.out);
  prepare_out(dir, rc);
  save_jsonl(dir / "train.jsonl", s.train);
  save_jsonl(dir / "dev.jsonl", s.dev);
  save_jsonl(dir / "test.jsonl", s.test);
  out << json{{"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()},
              {"seed", rc.data_seed}, {"out", dir.string()}}
             .dump()
      << '\n';
  return 0;
}

int cmd_train(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve_config(f);
  const std::string hash = config_hash(rc);
  const std::uint64_t seed = f.seed.value_or(rc.train.seeds.front());
  const DatasetSplits data = load_splits(f, rc);
  const fs::path dir(f.out);

  std::optional<Trainer> trainer;
  Vocab vocab;
  if (!f.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(f.checkpoint);
    vocab = Vocab::from_tokens(ck.vocab);
    trainer.emplace(ck);
  } else {
    vocab = Vocab::build(data.train);
    trainer.emplace(rc.train, vocab, seed, hash);
  }
  prepare_out(dir, rc);
  const std::size_t max_len = trainer->model().config().max_len;
  trainer->run(encode_all(data.train, vocab, max_len), encode_all(data.dev, vocab, max_len));

  json summary{{"steps", trainer->steps_done()}, {"seed", trainer->log().seed},
               {"config_hash", trainer->log().config_hash}};
  if (!data.test.empty()) {
    const double test = evaluate(trainer->best_model(), encode_all(data.test, vocab, max_len));
    trainer->log().final->test_acc = test;
    summary["test_acc"] = test;
  }
  if (trainer->log().final) {
    summary["best_dev"] = trainer->log().final->best_dev;
    summary["best_step"] = trainer->log().final->best_step;
  }
  save_checkpoint(dir / kCheckpointFile, trainer->checkpoint());
  write_file(dir / kMetricsFile, trainer->log().to_jsonl());
  write_file(dir / kTimingFile, trainer->log().timings_jsonl());
  out << summary.dump() << '\n';
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  if (f.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
  if (f.data.empty()) throw ValidationError("eval needs --data");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const auto examples = load_examples(f.data);
  const double acc = evaluate(ck, examples);
  out << json{{"accuracy", acc}, {"n", examples.size()}}.dump() << '\n';
  return 0;
}

int cmd_ablate(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.suite.empty()) throw ValidationError("ablate needs --suite");
  const Suite suite = parse_suite(f.suite);
  if (f.seeds == 0) throw ValidationError("--seeds must be at least 1");
  const RunConfig rc = resolve_config(f);
  const std::string hash = config_hash(rc);
  std::vector<std::uint64_t> seeds;
  const std::uint64_t first = f.seed.value_or(1);
  for (std::size_t i = 0; i < f.seeds; ++i) seeds.push_back(first + i);
  const DatasetSplits data = load_splits(f, rc);
  const fs::path dir(f.out);
  prepare_out(dir, rc);
  fs::create_directories(dir / "runs");

  const AblationReport report =
      run_ablation(suite, rc.train, data, seeds, f.parallel_seeds, hash, [&](const AblationRun& r) {
        err << "done " << r.variant << " seed " << r.seed << " test " << r.test_acc << '\n';
      });
  for (const auto& r : report.runs)
    write_file(dir / "runs" / (r.variant + ".seed" + std::to_string(r.seed) + ".metrics.jsonl"),
               r.log.to_jsonl());
  write_file(dir / kReportTsv, report.to_tsv());
  write_file(dir / kReportJson, report.to_json().dump(2) + "\n");
  out << report.to_tsv();
  for (const auto& c : report.checks)
    out << (c.holds ? "ok " : "REGRESSION ") << c.name << ": " << c.detail << '\n';
  return 0;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  RunConfig rc = resolve_config(f);
  ModelConfig m = rc.train.model;
  if (f.dims == "tiny") {
    m.d_model = 8;
    m.heads = 2;
  } else if (f.dims == "small") {
    m.d_model = 16;
    m.heads = 4;
  } else {
    throw ValidationError("--dims must be tiny or small");
  }
  m.n_enc = 2;
  if (!f.k_layers) m.duma.layers = 2;
  m.max_len = 16;
  m.init_std = 0.5;  // keeps every gradient element well above finite-difference noise
  m.attention_dropout = 0.0;
  const McExample ex{"gradcheck", "k1 v2 k3 v4", "k3 ?", {"v2", "v4"}, 1};
  const Vocab vocab = Vocab::build(std::span(&ex, 1));
  m.vocab_size = vocab.size();
  const EncodedExample enc = encode_example(ex, vocab, m.max_len);
  Model model(m, f.seed.value_or(1));
  auto f_loss = [&] { return loss(model.score_options(enc), enc.gold); };

  // A tensor that shifts every option logit equally (e.g. the last LayerNorm
  // beta under sa_plus_ca pooling) has a gradient that is zero up to rounding;
  // relative error there only measures difference noise, so those tensors are
  // held to an absolute bound on the numeric slope instead.
  auto named = model.named_parameters();
  std::vector<Tensor> live, flat;
  std::vector<std::string> live_names, flat_names;
  for (auto& [name, p] : named) p.zero_grad();
  backward(f_loss());
  for (auto& [name, p] : named) {
    bool zero = true;
    for (double g : p.grad()) zero = zero && std::fabs(g) <= 1e-12;
    (zero ? flat : live).push_back(p);
    (zero ? flat_names : live_names).push_back(name);
  }
  const GradCheckResult r = grad_check_detailed(f_loss, live, 1e-5);
  double flat_slope = 0.0;
  for (auto& p : flat) {
    auto d = p.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double keep = d[i];
      d[i] = keep + 1e-5;
      const double up = f_loss().item();
      d[i] = keep - 1e-5;
      const double down = f_loss().item();
      d[i] = keep;
      flat_slope = std::max(flat_slope, std::fabs(up - down) / 2e-5);
    }
  }
  const bool pass = r.max_relative_error <= 1e-4 && flat_slope <= 1e-8;
  out << json{{"max_relative_error", r.max_relative_error},
              {"worst_parameter", live_names.empty() ? "" : live_names[r.param_index]},
              {"worst_element", r.element_index},
              {"zero_gradient_parameters", flat_names},
              {"max_zero_gradient_slope", flat_slope},
              {"pass", pass}}
             .dump()
      << '\n';
  return pass ? 0 : 1;
}

int cmd_count_params(const Flags& f, std::ostream& out) {
  const RunConfig rc = resolve_config(f);
  ModelConfig m = rc.train.model;
  const DatasetSplits data = load_splits(f, rc);
  m.vocab_size = Vocab::build(data.train).size();
  const ParamCount c = count_params(m);
  out << json{{"encoder", c.encoder}, {"head", c.head}, {"decoder", c.decoder},
              {"total", c.total()}, {"vocab_size", m.vocab_size}}
             .dump()
      << '\n';
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DUMA multi-choice reading comprehension toolkit", "duma"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic task as train/dev/test JSONL");
  add_config_flag(gen, f);
  gen->add_option("--seed", f.seed, "data seed (default: config data.seed)");
  gen->add_option("--out", f.out, "output directory");

  auto* train = app.add_subcommand("train", "train one seed and score the test split");
  add_config_flag(train, f);
  train->add_option("--seed", f.seed, "training seed (default: first of train.seeds)");
  train->add_option("--out", f.out, "output directory");
  train->add_option("--data", f.data, "directory with train/dev/test.jsonl (default: synthetic)");
  train->add_option("--checkpoint", f.checkpoint, "resume from this checkpoint")
      ->check(CLI::ExistingFile);
  add_train_flags(train, f);
  add_model_flags(train, f);

  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", f.data, "JSONL file, or a DREAM .json file")->required()->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "run an ablation suite over several seeds");
  add_config_flag(ablate, f);
  ablate->add_option("--suite", f.suite, "fuse_modes | directions | layer_sweep | head_modes")
      ->required();
  ablate->add_option("--seeds", f.seeds, "number of seeds");
  ablate->add_option("--seed", f.seed, "first seed (default 1)");
  ablate->add_option("--parallel-seeds", f.parallel_seeds, "runs trained concurrently");
  ablate->add_option("--out", f.out, "output directory");
  ablate->add_option("--data", f.data, "directory with train/dev/test.jsonl (default: synthetic)");
  add_train_flags(ablate, f);
  add_model_flags(ablate, f);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  add_config_flag(gradcheck, f);
  gradcheck->add_option("--dims", f.dims, "tiny (d_model 8, 2 heads) | small (16, 4)");
  gradcheck->add_option("--seed", f.seed, "initialisation seed");
  add_model_flags(gradcheck, f);

  auto* count = app.add_subcommand("count-params", "parameter counts per component");
  add_config_flag(count, f);
  count->add_option("--data", f.data, "directory with train.jsonl (sets the vocabulary)");
  add_model_flags(count, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run 'duma --help' for usage\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(f, out);
    if (train->parsed()) return cmd_train(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    if (ablate->parsed()) return cmd_ablate(f, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(f, out);
    if (count->parsed()) return cmd_count_params(f, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << '\n';
    return 1;
  }
  return 2;
}

}  // namespace duma
