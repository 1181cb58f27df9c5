// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace duma {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

std::string two_shapes(const std::string& op, const Tensor& a, const Tensor& b) {
  return op + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape());
}

std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols);

// Register tile for the matmul kernels: kMr rows of C by kNr columns are
// accumulated in place while p sweeps the shared dimension. Each C element
// still sums its products in ascending p, so results match the plain triple
// loop exactly.
constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 16;

template <std::size_t MR, std::size_t NR>
inline void tile_nn(const double* __restrict a, std::size_t lda, const double* __restrict b,
                    std::size_t ldb, double* __restrict c, std::size_t ldc, std::size_t k,
                    std::size_t rows, std::size_t cols) {
  double acc[MR][NR];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) acc[r][j] = (r < rows && j < cols) ? c[r * ldc + j] : 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    double bv[NR];
    for (std::size_t j = 0; j < NR; ++j) bv[j] = j < cols ? bp[j] : 0.0;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = r < rows ? a[r * lda + p] : 0.0;
      for (std::size_t j = 0; j < NR; ++j) acc[r][j] += av * bv[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
}

// Full-size tile without edge guards, on GCC/Clang vector types.
using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof(v)); }

inline void tile_nn_full(const double* __restrict a, std::size_t lda, const double* __restrict b,
                         std::size_t ldb, double* __restrict c, std::size_t ldc, std::size_t k) {
  static_assert(kMr == 4 && kNr == 16);
  Vec8 c00 = load8(c), c01 = load8(c + 8);
  Vec8 c10 = load8(c + ldc), c11 = load8(c + ldc + 8);
  Vec8 c20 = load8(c + 2 * ldc), c21 = load8(c + 2 * ldc + 8);
  Vec8 c30 = load8(c + 3 * ldc), c31 = load8(c + 3 * ldc + 8);
  for (std::size_t p = 0; p < k; ++p) {
    const Vec8 b0 = load8(b + p * ldb), b1 = load8(b + p * ldb + 8);
    const double a0 = a[p], a1 = a[lda + p], a2 = a[2 * lda + p], a3 = a[3 * lda + p];
    c00 += a0 * b0;
    c01 += a0 * b1;
    c10 += a1 * b0;
    c11 += a1 * b1;
    c20 += a2 * b0;
    c21 += a2 * b1;
    c30 += a3 * b0;
    c31 += a3 * b1;
  }
  store8(c, c00);
  store8(c + 8, c01);
  store8(c + ldc, c10);
  store8(c + ldc + 8, c11);
  store8(c + 2 * ldc, c20);
  store8(c + 2 * ldc + 8, c21);
  store8(c + 3 * ldc, c30);
  store8(c + 3 * ldc + 8, c31);
}

inline void tile_1x16(const double* __restrict a, const double* __restrict b, std::size_t ldb,
                      double* __restrict c, std::size_t k) {
  Vec8 c0 = load8(c), c1 = load8(c + 8);
  for (std::size_t p = 0; p < k; ++p) {
    c0 += a[p] * load8(b + p * ldb);
    c1 += a[p] * load8(b + p * ldb + 8);
  }
  store8(c, c0);
  store8(c + 8, c1);
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; i += kMr) {
    const std::size_t rows = std::min(kMr, m - i);
    for (std::size_t j = 0; j < n; j += kNr) {
      const std::size_t cols = std::min(kNr, n - j);
      if (rows == kMr && cols == kNr)
        tile_nn_full(a + i * k, k, b + j, n, c + i * n + j, n, k);
      else if (cols == kNr)
        for (std::size_t r = 0; r < rows; ++r)
          tile_1x16(a + (i + r) * k, b + j, n, c + (i + r) * n + j, k);
      else
        tile_nn<kMr, kNr>(a + i * k, k, b + j, n, c + i * n + j, n, k, rows, cols);
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  auto at = transposed(a, m, k);
  gemm_nn(at.data(), b, c, k, m, n);
}

std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::TensorImpl::pending_grad() {
  if (pending.empty()) pending.assign(data.size(), 0.0);
  return pending;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = normal(rng);
  return from(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(impl_->shape));
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at(i, j) on " + shape_str(shape()));
  return impl_->data.at(i * impl_->shape[1] + j);
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

std::string Tensor::op() const { return impl_->node ? impl_->node->op : std::string(); }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor make_result(Shape shape, std::vector<double> values, std::string op,
                   std::vector<Tensor> parents, detail::BackwardFn backward) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    node->op = std::move(op);
    for (auto& p : parents) node->parents.push_back(p.impl_ptr());
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward() needs a scalar root, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;

  // Post-order DFS; reversed it is a topological order from the root.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  seen.insert(loss.impl());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->parents.size()) {
      detail::TensorImpl* parent = impl->node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  loss.impl()->pending_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    if (impl->node && !impl->pending.empty()) impl->node->backward(*impl);
  }
  for (detail::TensorImpl* impl : order) {
    if (impl->pending.empty()) impl->pending.assign(impl->data.size(), 0.0);
    if (impl->node) {
      impl->grad = std::move(impl->pending);
    } else if (impl->grad.empty()) {
      impl->grad = std::move(impl->pending);
    } else {
      for (std::size_t i = 0; i < impl->grad.size(); ++i) impl->grad[i] += impl->pending[i];
    }
    impl->pending.clear();
    impl->pending.shrink_to_fit();
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() >= 2 && a.rank() == b.rank(), two_shapes("matmul", a, b));
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) check(a.dim(i) == b.dim(i), two_shapes("matmul", a, b));
  const std::size_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 1);
  check(b.dim(r - 2) == k, two_shapes("matmul", a, b));
  const std::size_t batch = a.numel() / (m * k);

  Shape out_shape = a.shape();
  out_shape[r - 1] = n;
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi)
    gemm_nn(a.data().data() + bi * m * k, b.data().data() + bi * k * n, out.data() + bi * m * n,
            m, k, n);

  auto ai = a.impl_ptr(), bimpl = b.impl_ptr();
  return make_result(std::move(out_shape), std::move(out), "matmul", {a, b},
                     [ai, bimpl, batch, m, k, n](detail::TensorImpl& o) {
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         const double* dc = o.pending.data() + bi * m * n;
                         if (ai->requires_grad) {
                           auto bt = transposed(bimpl->data.data() + bi * k * n, k, n);
                           gemm_nn(dc, bt.data(), ai->pending_grad().data() + bi * m * k, m, n, k);
                         }
                         if (bimpl->requires_grad)
                           gemm_tn(ai->data.data() + bi * m * k, dc,
                                   bimpl->pending_grad().data() + bi * k * n, m, k, n);
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  check(x.rank() == 2, "transpose: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto xi = x.impl_ptr();
  return make_result({cols, rows}, transposed(x.data().data(), rows, cols), "transpose", {x},
                     [xi, rows, cols](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < cols; ++j)
                           g[i * cols + j] += o.pending[j * rows + i];
                     });
}

namespace {

template <typename F, typename Da, typename Db>
Tensor binary_same_shape(const char* op, const Tensor& a, const Tensor& b, F f, Da da, Db db) {
  check(a.shape() == b.shape(), two_shapes(op, a, b));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i], b.data()[i]);
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return make_result(a.shape(), std::move(out), op, {a, b}, [ai, bi, da, db](detail::TensorImpl& o) {
    const std::size_t n = o.pending.size();
    if (ai->requires_grad) {
      auto g = ai->pending_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += da(o.pending[i], ai->data[i], bi->data[i]);
    }
    if (bi->requires_grad) {
      auto g = bi->pending_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += db(o.pending[i], ai->data[i], bi->data[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto xi = x.impl_ptr();
  return make_result(x.shape(), std::move(out), "scale", {x}, [xi, factor](detail::TensorImpl& o) {
    auto g = xi->pending_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.pending[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check(bias.rank() == 1 && bias.dim(0) == last_dim(x), two_shapes("add_bias", x, bias));
  const std::size_t d = bias.dim(0), rows = x.numel() / d;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias.data()[j];
  auto xi = x.impl_ptr(), bi = bias.impl_ptr();
  return make_result(x.shape(), std::move(out), "add_bias", {x, bias},
                     [xi, bi, rows, d](detail::TensorImpl& o) {
                       if (xi->requires_grad) {
                         auto g = xi->pending_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.pending[i];
                       }
                       if (bi->requires_grad) {
                         auto g = bi->pending_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) g[j] += o.pending[r * d + j];
                       }
                     });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  auto xi = x.impl_ptr();
  return make_result(x.shape(), std::move(out), "relu", {x}, [xi](detail::TensorImpl& o) {
    auto g = xi->pending_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xi->data[i] > 0.0) g[i] += o.pending[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto xi = x.impl_ptr();
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                     "reshape", {x}, [xi](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.pending[i];
                     });
}

Tensor softmax_last(const Tensor& x) {
  const std::size_t n = last_dim(x), rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const double* in = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in + r * n;
    double* dst = out.data() + r * n;
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    if (mx == kNegInf) throw MaskError("fully masked row");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = row[j] == kNegInf ? 0.0 : std::exp(row[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  auto xi = x.impl_ptr();
  return make_result(x.shape(), std::move(out), "softmax_last", {x},
                     [xi, rows, n](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* p = o.data.data() + r * n;
                         const double* dp = o.pending.data() + r * n;
                         double inner = 0.0;
                         for (std::size_t j = 0; j < n; ++j) inner += p[j] * dp[j];
                         for (std::size_t j = 0; j < n; ++j) g[r * n + j] += p[j] * (dp[j] - inner);
                       }
                     });
}

Tensor mask_keys(const Tensor& scores, std::span<const std::uint8_t> key_mask) {
  const std::size_t n = last_dim(scores), rows = scores.numel() / n;
  check(key_mask.size() == n, "mask_keys: mask of length " + std::to_string(key_mask.size()) +
                                  " for scores " + shape_str(scores.shape()));
  std::vector<double> out(scores.data().begin(), scores.data().end());
  std::vector<std::uint8_t> keep(key_mask.begin(), key_mask.end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j)
      if (!keep[j]) out[r * n + j] = kNegInf;
  auto si = scores.impl_ptr();
  return make_result(scores.shape(), std::move(out), "mask_keys", {scores},
                     [si, keep = std::move(keep), rows, n](detail::TensorImpl& o) {
                       auto g = si->pending_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < n; ++j)
                           if (keep[j]) g[r * n + j] += o.pending[r * n + j];
                     });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  auto xi = x.impl_ptr();
  return make_result(x.shape(), std::move(out), "dropout", {x},
                     [xi, mask = std::move(mask)](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.pending[i] * mask[i];
                     });
}

Tensor mean_pool_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  check(x.rank() == 2, "mean_pool_rows: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t l = x.dim(0), d = x.dim(1);
  check(mask.size() == l, "mean_pool_rows: mask of length " + std::to_string(mask.size()) +
                              " for " + shape_str(x.shape()));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < l; ++i)
    if (mask[i]) rows.push_back(i);
  if (rows.empty()) throw MaskError("mean_pool_rows: mask has no unmasked row");
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<double> out(d, 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[r * d + j];
  for (auto& v : out) v *= inv;
  auto xi = x.impl_ptr();
  return make_result({d}, std::move(out), "mean_pool_rows", {x},
                     [xi, rows = std::move(rows), d, inv](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (auto r : rows)
                         for (std::size_t j = 0; j < d; ++j) g[r * d + j] += o.pending[j] * inv;
                     });
}

Tensor concat_last(const Tensor& x, const Tensor& y) {
  const Tensor parts[] = {x, y};
  return concat_last(std::span<const Tensor>(parts));
}

Tensor concat_last(std::span<const Tensor> parts) {
  check(!parts.empty(), "concat_last: nothing to concatenate");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    check(pl == lead, two_shapes("concat_last", parts[0], p));
    widths.push_back(last_dim(p));
    total += last_dim(p);
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data().data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl_ptr());
  return make_result(std::move(shape), std::move(out), "concat_last",
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [impls, widths, rows, total](detail::TensorImpl& o) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         if (impls[k]->requires_grad) {
                           auto g = impls[k]->pending_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[r * widths[k] + j] += o.pending[r * total + offset + j];
                         }
                         offset += widths[k];
                       }
                     });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t width) {
  const std::size_t n = last_dim(x), rows = x.numel() / n;
  check(width > 0 && begin + width <= n, "slice_last: [" + std::to_string(begin) + ", " +
                                             std::to_string(begin + width) + ") outside " +
                                             shape_str(x.shape()));
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().data() + r * n + begin, width, out.data() + r * width);
  Shape shape = x.shape();
  shape.back() = width;
  auto xi = x.impl_ptr();
  return make_result(std::move(shape), std::move(out), "slice_last", {x},
                     [xi, rows, n, begin, width](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < width; ++j)
                           g[r * n + begin + j] += o.pending[r * width + j];
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  check(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t d = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.dim(1) == d, two_shapes("concat_rows", parts[0], p));
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * d);
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    impls.push_back(p.impl_ptr());
  }
  return make_result({rows, d}, std::move(out), "concat_rows",
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [impls](detail::TensorImpl& o) {
                       std::size_t offset = 0;
                       for (const auto& impl : impls) {
                         const std::size_t n = impl->data.size();
                         if (impl->requires_grad) {
                           auto g = impl->pending_grad();
                           for (std::size_t i = 0; i < n; ++i) g[i] += o.pending[offset + i];
                         }
                         offset += n;
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  check(x.rank() == 2, "gather_rows: expected rank 2, got " + shape_str(x.shape()));
  check(!rows.empty(), "gather_rows: empty row list");
  const std::size_t l = x.dim(0), d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= l)
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                           shape_str(x.shape()));
    std::copy_n(x.data().data() + rows[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  auto xi = x.impl_ptr();
  return make_result({rows.size(), d}, std::move(out), "gather_rows", {x},
                     [xi, idx = std::move(idx), d](detail::TensorImpl& o) {
                       auto g = xi->pending_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.pending[i * d + j];
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x), rows = x.numel() / d;
  check(gamma.rank() == 1 && gamma.dim(0) == d, two_shapes("layer_norm", x, gamma));
  check(beta.rank() == 1 && beta.dim(0) == d, two_shapes("layer_norm", x, beta));
  std::vector<double> xhat(x.numel()), inv_std(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mean) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  auto xi = x.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr();
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
       d](detail::TensorImpl& o) {
        const double dd = static_cast<double>(d);
        if (gi->requires_grad) {
          auto g = gi->pending_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += o.pending[r * d + j] * xhat[r * d + j];
        }
        if (bi->requires_grad) {
          auto g = bi->pending_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += o.pending[r * d + j];
        }
        if (xi->requires_grad) {
          auto g = xi->pending_grad();
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = o.pending[r * d + j] * gi->data[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[r * d + j];
            }
            mean_d /= dd;
            mean_dx /= dd;
            for (std::size_t j = 0; j < d; ++j)
              g[r * d + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[r * d + j] * mean_dx);
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto xi = x.impl_ptr();
  return make_result({1}, {total}, "sum", {x}, [xi](detail::TensorImpl& o) {
    auto g = xi->pending_grad();
    for (auto& v : g) v += o.pending[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check(a.rank() == 1 && a.shape() == b.shape(), two_shapes("dot", a, b));
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.data()[i] * b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return make_result({1}, {total}, "dot", {a, b}, [ai, bi](detail::TensorImpl& o) {
    const double g0 = o.pending[0];
    if (ai->requires_grad) {
      auto g = ai->pending_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bi->data[i];
    }
    if (bi->requires_grad) {
      auto g = bi->pending_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * ai->data[i];
    }
  });
}

Tensor stack_scalars(std::span<const Tensor> scalars) {
  check(!scalars.empty(), "stack_scalars: nothing to stack");
  std::vector<double> out;
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& s : scalars) {
    check(s.numel() == 1, "stack_scalars: non-scalar " + shape_str(s.shape()));
    out.push_back(s.data()[0]);
    impls.push_back(s.impl_ptr());
  }
  return make_result({scalars.size()}, std::move(out), "stack_scalars",
                     std::vector<Tensor>(scalars.begin(), scalars.end()),
                     [impls](detail::TensorImpl& o) {
                       for (std::size_t i = 0; i < impls.size(); ++i)
                         if (impls[i]->requires_grad) impls[i]->pending_grad()[0] += o.pending[i];
                     });
}

Tensor cross_entropy(const Tensor& logits, std::size_t gold) {
  check(logits.rank() == 1, "cross_entropy: expected rank-1 logits, got " + shape_str(logits.shape()));
  const std::size_t s = logits.dim(0);
  if (gold >= s)
    throw ValidationError("cross_entropy: gold index " + std::to_string(gold) +
                          " out of range for " + std::to_string(s) + " options");
  const double* z = logits.data().data();
  const double mx = *std::max_element(z, z + s);
  std::vector<double> probs(s);
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    probs[i] = std::exp(z[i] - mx);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  const double loss = -(z[gold] - mx - std::log(total));
  auto li = logits.impl_ptr();
  return make_result({1}, {loss}, "cross_entropy", {logits},
                     [li, probs = std::move(probs), gold](detail::TensorImpl& o) {
                       auto g = li->pending_grad();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += o.pending[0] * (probs[i] - (i == gold ? 1.0 : 0.0));
                     });
}

}  // namespace duma
