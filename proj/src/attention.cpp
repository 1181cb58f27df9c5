// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/attention.hpp"

#include <cmath>
#include <string>

namespace duma {

MhaParams MhaParams::init(std::size_t d_model, std::size_t heads, double stddev,
                          std::mt19937_64& rng) {
  if (d_model == 0 || heads == 0) throw ValidationError("attention: d_model and heads must be positive");
  if (d_model % heads != 0)
    throw ValidationError("attention: d_model " + std::to_string(d_model) +
                          " is not divisible by " + std::to_string(heads) + " heads");
  MhaParams p;
  p.heads = heads;
  p.d_head = d_model / heads;
  const std::size_t inner = heads * p.d_head;
  p.w_q = Tensor::randn({d_model, inner}, stddev, rng, true);
  p.w_k = Tensor::randn({d_model, inner}, stddev, rng, true);
  p.w_v = Tensor::randn({d_model, inner}, stddev, rng, true);
  p.w_o = Tensor::randn({inner, d_model}, stddev, rng, true);
  return p;
}

std::size_t MhaParams::num_scalars() const {
  return w_q.numel() + w_k.numel() + w_v.numel() + w_o.numel();
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask,
                                     AttentionDropout drop) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("scaled_dot_attention: expected rank-2 q/k/v, got " +
                         shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()));
  if (q.dim(1) != k.dim(1))
    throw DimensionError("scaled_dot_attention: query width " + shape_str(q.shape()) +
                         " vs key width " + shape_str(k.shape()));
  if (k.dim(0) != v.dim(0))
    throw DimensionError("scaled_dot_attention: " + shape_str(k.shape()) + " keys vs " +
                         shape_str(v.shape()) + " values");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
  Tensor weights = softmax_last(mask_keys(scores, key_mask));
  Tensor attended = (drop.rng && drop.p > 0.0) ? dropout(weights, drop.p, *drop.rng) : weights;
  return {matmul(attended, v), weights};
}

Tensor multi_head_attention(const MhaParams& p, const Tensor& query, const Tensor& kv,
                            std::span<const std::uint8_t> kv_mask, AttentionDropout drop) {
  const std::size_t d_model = p.d_model();
  if (query.rank() != 2 || query.dim(1) != d_model || kv.rank() != 2 || kv.dim(1) != d_model)
    throw DimensionError("multi_head_attention: inputs " + shape_str(query.shape()) + " and " +
                         shape_str(kv.shape()) + " do not match d_model " +
                         std::to_string(d_model));
  Tensor q = matmul(query, p.w_q);
  Tensor k = matmul(kv, p.w_k);
  Tensor v = matmul(kv, p.w_v);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t begin = h * p.d_head;
    heads.push_back(scaled_dot_attention(slice_last(q, begin, p.d_head),
                                         slice_last(k, begin, p.d_head),
                                         slice_last(v, begin, p.d_head), kv_mask, drop)
                        .context);
  }
  Tensor joined = p.heads == 1 ? heads.front() : concat_last(heads);
  return matmul(joined, p.w_o);
}

}  // namespace duma
