// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major float64 tensors with tape-free reverse-mode autodiff.
//
// Every op returns a fresh tensor. When any input requires gradients, the
// result records a graph node holding its parents and a backward rule. The
// graph lives exactly as long as the tensors that reference it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "duma/errors.hpp"

namespace duma {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// Reads out.pending (upstream gradient) and accumulates into parents.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;     // persistent; empty until the first backward
  std::vector<double> pending;  // scratch for the backward pass in flight
  bool requires_grad = false;
  std::shared_ptr<Node> node;   // null for leaves

  // Zero-initialised on first touch within a backward pass.
  std::span<double> pending_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Entries drawn i.i.d. from Normal(0, stddev).
  static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutating a tensor that already feeds a live graph invalidates that graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Op tag of the node that produced this tensor, empty for leaves.
  std::string op() const;
  // Deep copy of the values with no graph attached.
  Tensor detach() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_result(Shape, std::vector<double>, std::string,
                            std::vector<Tensor>, detail::BackwardFn);
};

// Builds an op output. The backward rule is attached only when some parent
// requires gradients and grad recording is enabled.
Tensor make_result(Shape shape, std::vector<double> values, std::string op,
                   std::vector<Tensor> parents, detail::BackwardFn backward);

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad on every requires_grad tensor reachable from `loss`.
// Leaf gradients accumulate across calls; interior gradients are replaced.
void backward(const Tensor& loss);

void zero_grads(std::span<Tensor> params);

// ---------------------------------------------------------------------------
// Differentiable ops.

// Matrix product over the last two axes; leading (batch) axes must match.
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes of a rank-2 tensor.
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[..., d] + bias[d]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Softmax over the last axis. -inf entries map to exactly 0; a slice that is
// entirely -inf throws MaskError("fully masked row").
Tensor softmax_last(const Tensor& x);
// Sets columns whose key mask is 0 to -inf. Equivalent to adding -inf on
// finite scores, and stays well defined when a masked score overflows.
Tensor mask_keys(const Tensor& scores, std::span<const std::uint8_t> key_mask);
// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// Mean over rows whose mask entry is 1. x is [l, d]; result is [d].
Tensor mean_pool_rows(const Tensor& x, std::span<const std::uint8_t> mask);
Tensor concat_last(const Tensor& x, const Tensor& y);
Tensor concat_last(std::span<const Tensor> parts);
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t width);
// Vertical concatenation of rank-2 tensors with equal widths.
Tensor concat_rows(std::span<const Tensor> parts);
// Rows of a rank-2 tensor in the given order; also serves as embedding lookup.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

// Per-row standardisation with population variance, then gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

Tensor sum(const Tensor& x);
// Inner product of two rank-1 tensors of equal length.
Tensor dot(const Tensor& a, const Tensor& b);
// Packs scalar tensors into a rank-1 tensor.
Tensor stack_scalars(std::span<const Tensor> scalars);
// -log softmax(logits)[gold] for rank-1 logits.
Tensor cross_entropy(const Tensor& logits, std::size_t gold);

}  // namespace duma
