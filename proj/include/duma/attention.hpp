// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "duma/tensor.hpp"

namespace duma {

using Mask = std::vector<std::uint8_t>;

// Projection matrices of one multi-head attention unit. Heads are stored
// side by side: columns [i*d_head, (i+1)*d_head) of w_q/w_k/w_v belong to
// head i, and w_o maps the concatenated heads back to d_model. No biases.
struct MhaParams {
  Tensor w_q;  // [d_model, heads * d_head]
  Tensor w_k;
  Tensor w_v;
  Tensor w_o;  // [heads * d_head, d_model]
  std::size_t heads = 1;
  std::size_t d_head = 0;

  // d_head = d_model / heads; throws ValidationError if it does not divide.
  static MhaParams init(std::size_t d_model, std::size_t heads, double stddev,
                        std::mt19937_64& rng);

  std::size_t d_model() const { return w_q.dim(0); }
  std::vector<Tensor> tensors() const { return {w_q, w_k, w_v, w_o}; }
  std::size_t num_scalars() const;
};

struct AttentionResult {
  Tensor context;  // [l_q, d_v]
  Tensor weights;  // [l_q, l_k]
};

// Optional attention-probability dropout. Inactive unless rng is set and p > 0.
struct AttentionDropout {
  double p = 0.0;
  std::mt19937_64* rng = nullptr;
};

// softmax(q k^T / sqrt(d)) v with keys whose mask entry is 0 excluded.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask,
                                     AttentionDropout drop = {});

// Concat(head_1..head_h) W_o with head_i = Attention(query W_q_i, kv W_k_i, kv W_v_i).
Tensor multi_head_attention(const MhaParams& p, const Tensor& query, const Tensor& kv,
                            std::span<const std::uint8_t> kv_mask, AttentionDropout drop = {});

}  // namespace duma
