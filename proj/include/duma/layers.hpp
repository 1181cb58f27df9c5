// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "duma/tensor.hpp"

namespace duma {

inline constexpr double kLayerNormEps = 1e-12;

struct LayerNormParams {
  Tensor gamma;  // [d], initialised to 1
  Tensor beta;   // [d], initialised to 0

  static LayerNormParams init(std::size_t d);
  Tensor apply(const Tensor& x) const { return layer_norm(x, gamma, beta, kLayerNormEps); }
};

// relu(x W1 + b1) W2 + b2
struct FeedForward {
  Tensor w1, b1, w2, b2;

  static FeedForward init(std::size_t d_model, std::size_t inner, double stddev,
                          std::mt19937_64& rng);
  Tensor apply(const Tensor& x) const;
};

// LN + FFN + LN around an attention sublayer, post-norm ordering.
struct BlockSublayers {
  LayerNormParams ln1;
  FeedForward ffn;
  LayerNormParams ln2;

  static BlockSublayers init(std::size_t d_model, std::size_t ffn_inner, double stddev,
                             std::mt19937_64& rng);
  // h = LN1(residual + attended); returns LN2(h + FFN(h)).
  Tensor apply(const Tensor& residual, const Tensor& attended) const;
  std::vector<Tensor> tensors() const;
};

}  // namespace duma
