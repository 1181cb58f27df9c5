// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace duma {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const double v = f().item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, std::span<Tensor> params,
                                    double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3], got " +
                                std::to_string(eps));
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw std::domain_error("grad_check: objective is not finite");
  backward(loss);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(f);
      values[i] = saved - eps;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[i] - numeric) / denom;
      if (err > result.max_relative_error || (pi == 0 && i == 0)) {
        result = {err, pi, i, analytic[i], numeric};
      }
    }
  }
  return result;
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  return grad_check_detailed(f, params, eps).max_relative_error;
}

}  // namespace duma
