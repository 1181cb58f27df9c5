// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/layers.hpp"

namespace duma {

LayerNormParams LayerNormParams::init(std::size_t d) {
  return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

FeedForward FeedForward::init(std::size_t d_model, std::size_t inner, double stddev,
                              std::mt19937_64& rng) {
  FeedForward f;
  f.w1 = Tensor::randn({d_model, inner}, stddev, rng, true);
  f.b1 = Tensor::zeros({inner}, true);
  f.w2 = Tensor::randn({inner, d_model}, stddev, rng, true);
  f.b2 = Tensor::zeros({d_model}, true);
  return f;
}

Tensor FeedForward::apply(const Tensor& x) const {
  return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
}

BlockSublayers BlockSublayers::init(std::size_t d_model, std::size_t ffn_inner, double stddev,
                                    std::mt19937_64& rng) {
  BlockSublayers b;
  b.ln1 = LayerNormParams::init(d_model);
  b.ffn = FeedForward::init(d_model, ffn_inner, stddev, rng);
  b.ln2 = LayerNormParams::init(d_model);
  return b;
}

Tensor BlockSublayers::apply(const Tensor& residual, const Tensor& attended) const {
  Tensor h = ln1.apply(add(residual, attended));
  return ln2.apply(add(h, ffn.apply(h)));
}

std::vector<Tensor> BlockSublayers::tensors() const {
  return {ln1.gamma, ln1.beta, ffn.w1, ffn.b1, ffn.w2, ffn.b2, ln2.gamma, ln2.beta};
}

}  // namespace duma
