// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

// Everything needed to rebuild a model, or to continue training exactly where
// it stopped. On disk:
//
//   "DUMACKPT"  u32 version  u64 header_bytes  header (JSON)  blob data
//
// The header lists each blob by name, shape and byte offset into the data
// section; blobs are raw little-endian IEEE doubles. Blob names are prefixed
// param/, adam_m/, adam_v/ and best/.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "duma/data.hpp"
#include "duma/model.hpp"
#include "duma/train_config.hpp"

namespace duma {

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const TensorBlob&) const = default;
};

struct Checkpoint {
  TrainConfig config;  // config.model.vocab_size matches vocab
  std::vector<std::string> vocab;
  std::uint64_t seed = 0;

  std::vector<TensorBlob> params;  // in Model::named_parameters() order
  std::vector<TensorBlob> best;    // parameters at the best dev evaluation; may be empty
  std::vector<TensorBlob> adam_m;
  std::vector<TensorBlob> adam_v;

  // Loop state.
  std::size_t step = 0;  // completed updates
  std::size_t epoch = 0;
  std::vector<std::size_t> order;  // current epoch's shuffled example order
  std::size_t cursor = 0;          // next position in order
  std::string rng_state;
  double best_dev = -1.0;
  std::size_t best_step = 0;
  std::size_t evals_since_best = 0;
  bool finished = false;
  MetricsLog log;

  bool operator==(const Checkpoint&) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// ParseError on a damaged or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Rebuilds the model; prefers the best-dev parameters when present.
Model model_from_checkpoint(const Checkpoint& ckpt, bool prefer_best = true);
void load_parameters(Model& model, const std::vector<TensorBlob>& blobs);
std::vector<TensorBlob> snapshot_parameters(const Model& model);

}  // namespace duma
