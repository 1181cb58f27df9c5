// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

// JSON run configuration. Every section is optional and falls back to the
// struct defaults; unknown keys are rejected. Layout:
//
//   {
//     "model": { "d_model": 64, "heads": 4, "n_enc": 2, "ffn_multiplier": 4,
//                "max_len": 64, "share_encoder_layers": false,
//                "init_std": 0.02, "attention_dropout": 0.0,
//                "head_mode": "duma",
//                "duma": { "fuse": "concat", "direction": "both", "layers": 2,
//                          "variant": "plain", "share_directions": true,
//                          "share_layers": true } },
//     "train": { "peak_lr": 1e-3, "warmup_steps": 100, "batch_size": 8,
//                "max_steps": 5000, "epochs": 0, "seeds": [1, 2, 3],
//                "eval_every": 250, "patience": 3, "constant_lr": false,
//                "grad_clip": 0.0,
//                "adam": { "beta1": 0.9, "beta2": 0.999, "eps": 1e-8 } },
//     "data":  { "n_keys": 24, "n_values": 24, "pairs_per_passage": 6,
//                "options": 4, "n_train": 8000, "n_dev": 1000,
//                "n_test": 1000, "seed": 1 }
//   }
//
// model.vocab_size is not part of the file; it is derived from the data.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "duma/data.hpp"
#include "duma/train_config.hpp"
#include "json.hpp"

namespace duma {

struct RunConfig {
  TrainConfig train;
  SyntheticTaskConfig data;
  std::uint64_t data_seed = 1;
};

nlohmann::json to_json(const DumaConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);  // includes "model"
nlohmann::json to_json(const SyntheticTaskConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

// Overlay j onto base; throws ValidationError on unknown keys or bad types.
DumaConfig duma_config_from_json(const nlohmann::json& j, DumaConfig base = {});
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SyntheticTaskConfig synthetic_config_from_json(const nlohmann::json& j,
                                               SyntheticTaskConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::json& j);
std::string config_hash(const RunConfig& cfg);

}  // namespace duma
