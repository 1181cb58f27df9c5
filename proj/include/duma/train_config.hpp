// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "duma/model.hpp"

namespace duma {

// Adam moments. Weight decay is not applied.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 100;
  std::size_t batch_size = 8;
  std::size_t max_steps = 5000;
  std::size_t epochs = 0;  // 0 = no epoch cap
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t eval_every = 250;
  std::size_t patience = 3;  // evaluations without dev improvement; 0 disables
  bool constant_lr = false;  // hold peak_lr after warmup instead of decaying
  double grad_clip = 0.0;    // global L2 norm bound; 0 disables
  AdamConfig adam;
  ModelConfig model;

  void validate() const;

  // lr 1e-5, batch 8, 100 warmup steps: the DREAM fine-tuning settings.
  static TrainConfig dream_finetune();
};

// Linear warmup 0 -> peak over warmup_steps, then linear decay to 0 at
// max_steps (or constant at peak when cfg.constant_lr).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  bool operator==(const StepRecord&) const = default;
};

struct EvalRecord {
  std::size_t step = 0;
  double dev_acc = 0.0;
  bool operator==(const EvalRecord&) const = default;
};

struct FinalRecord {
  std::size_t best_step = 0;
  double best_dev = 0.0;
  std::optional<double> test_acc;
  bool operator==(const FinalRecord&) const = default;
};

// Append-only training record. Serialises to line-delimited JSON without
// wall-clock data; timings go to a separate channel.
struct MetricsLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::optional<FinalRecord> final;
  std::vector<std::pair<std::size_t, double>> wall_seconds;  // (step, elapsed) per eval

  std::string to_jsonl() const;
  std::string timings_jsonl() const;
  static MetricsLog from_jsonl(const std::string& text);
  bool operator==(const MetricsLog& other) const;
};

}  // namespace duma
