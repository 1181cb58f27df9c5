// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "duma/checkpoint.hpp"
#include "duma/data.hpp"
#include "duma/model.hpp"
#include "duma/train_config.hpp"

namespace duma {

// Fraction of examples whose argmax option is the gold one. Runs without
// building a graph. ValidationError on an empty dataset.
double evaluate(const Model& model, std::span<const EncodedExample> data);
// Encodes with the checkpoint's vocabulary and scores its best parameters.
double evaluate(const Checkpoint& ckpt, std::span<const McExample> data);

// One seed's optimisation loop. Owns the model, Adam moments, data order and
// RNG; checkpoint() captures all of it, so a Trainer rebuilt from that
// checkpoint continues the exact same trajectory.
class Trainer {
 public:
  // cfg.model.vocab_size must already match vocab.
  Trainer(const TrainConfig& cfg, const Vocab& vocab, std::uint64_t seed,
          std::string config_hash = "");
  explicit Trainer(const Checkpoint& ckpt);

  // Trains until max_steps, the epoch cap or early stopping. With pause_at,
  // returns once that many updates are done (the run can be continued).
  // TrainingError on a non-finite loss.
  void run(std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
           std::optional<std::size_t> pause_at = std::nullopt);

  // One Adam update on the given batch; returns the mean loss.
  double step(std::span<const EncodedExample> batch, std::span<const std::size_t> ids);

  bool finished() const { return finished_; }
  std::size_t steps_done() const { return step_; }
  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const MetricsLog& log() const { return log_; }
  MetricsLog& log() { return log_; }
  // Model holding the best-dev parameters (the current ones if never evaluated).
  Model best_model() const;
  Checkpoint checkpoint() const;

 private:
  void evaluate_dev(std::span<const EncodedExample> dev);
  void reshuffle(std::size_t n);

  TrainConfig cfg_;
  Vocab vocab_;
  std::uint64_t seed_;
  Model model_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<TensorBlob> best_;
  std::mt19937_64 rng_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  double best_dev_ = -1.0;
  std::size_t best_step_ = 0;
  std::size_t evals_since_best_ = 0;
  bool finished_ = false;
  MetricsLog log_;
  std::chrono::steady_clock::time_point started_;
  double elapsed_before_ = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  MetricsLog log;
  double test_acc = 0.0;
};

// Builds the vocabulary from the train split, trains one seed and scores the test
// split with the best-dev parameters.
TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, std::uint64_t seed,
                  const std::string& config_hash = "");

}  // namespace duma
