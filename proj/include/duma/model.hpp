// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "duma/attention.hpp"
#include "duma/data.hpp"
#include "duma/duma_layer.hpp"
#include "duma/layers.hpp"
#include "duma/tensor.hpp"

namespace duma {

// What sits between the encoder and the option decoder.
//   duma       - dual co-attention over the passage / question-answer split
//   vanilla_sa - one self-attention pass over the whole sequence, mean-pooled
//   sa_plus_ca - encoder self-attention replaced by segment co-attention,
//                encoder output mean-pooled directly
enum class HeadMode { duma, vanilla_sa, sa_plus_ca };

std::string to_string(HeadMode mode);
HeadMode parse_head_mode(std::string_view text);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t n_enc = 2;
  std::size_t ffn_multiplier = 4;  // encoder FFN inner width = ffn_multiplier * d_model
  std::size_t vocab_size = 0;      // set from the data vocabulary
  std::size_t max_len = 64;
  bool share_encoder_layers = false;
  double init_std = 0.02;
  double attention_dropout = 0.0;
  HeadMode head_mode = HeadMode::duma;
  DumaConfig duma;

  void validate() const;
  // Width l of the vector the decoder scores.
  std::size_t head_width() const;
};

struct EncoderBlock {
  MhaParams attn;
  BlockSublayers sub;
};

struct EncoderParams {
  Tensor tok_emb;  // [vocab, d_model]
  Tensor pos_emb;  // [max_len, d_model]
  Tensor seg_emb;  // [2, d_model]
  std::vector<EncoderBlock> blocks;  // 1 when share_encoder_layers, else n_enc
};

struct DecoderParams {
  Tensor w;  // [head_width]
};

using NamedTensor = std::pair<std::string, Tensor>;

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Embedding sum through the encoder blocks; returns [L, d_model].
  Tensor encode(std::span<const int> token_ids, std::span<const int> seg_ids,
                std::span<const std::uint8_t> pad_mask, AttentionDropout drop = {}) const;
  // Head output O_i for one option sequence.
  Tensor option_vector(const EncodedOption& option, AttentionDropout drop = {}) const;
  // One logit per option, each option scored independently.
  Tensor score_options(const EncodedExample& example, AttentionDropout drop = {}) const;

  // Stable order; names are unique and used by checkpoints.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;

  EncoderParams encoder;
  std::optional<DumaParams> duma;
  std::optional<MhaParams> vanilla;
  DecoderParams decoder;

 private:
  ModelConfig cfg_;
};

// -log softmax(logits)[gold]
Tensor loss(const Tensor& logits, std::size_t gold);
// Argmax; ties go to the lowest index.
std::size_t predict(std::span<const double> logits);

struct ParamCount {
  std::size_t encoder = 0;
  std::size_t head = 0;
  std::size_t decoder = 0;
  std::size_t total() const { return encoder + head + decoder; }
  bool operator==(const ParamCount&) const = default;
};

// Closed form, with d = d_model, f = ffn_multiplier * d:
//   encoder = V d + L_max d + 2 d + B (4 d^2 + 2 d f + f + d + 4 d),
//             B = 1 if share_encoder_layers else n_enc
//   head    = duma:       N (4 d^2 + [tb] (8 d^2 + 4 d + d + 4 d)), N = distinct blocks
//             vanilla_sa: 4 d^2
//             sa_plus_ca: 0
//   decoder = head_width
ParamCount count_params(const ModelConfig& cfg);
// Sum of the model's actual tensor sizes, by component.
ParamCount count_params(const Model& model);

}  // namespace duma
