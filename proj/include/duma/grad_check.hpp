// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "duma/tensor.hpp"

namespace duma {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t param_index = 0;    // location of the worst element
  std::size_t element_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares backward() gradients of f against central differences
// (f(p + eps) - f(p - eps)) / (2 eps), element by element. The relative error
// of one element is |a - n| / max(|a|, |n|, 1e-8). f must rebuild its graph
// from the current parameter values on every call. Parameter gradients are
// zeroed before and left holding the analytic gradient afterwards.
GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, std::span<Tensor> params,
                                    double eps = 1e-5);

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps = 1e-5);

}  // namespace duma
