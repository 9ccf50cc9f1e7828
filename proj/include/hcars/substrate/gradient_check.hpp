/*
 * Copyright 2026 The hcars Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcars/substrate/param_store.hpp"
#include "hcars/substrate/tape.hpp"

namespace hcars {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates_checked = 0;
};

struct GradientCheckOptions {
  std::size_t num_coordinates = 64;  // at least 50 unless the store is smaller
  double step = 1e-4;
  // Denominator floor for the relative error, so that near-zero gradients
  // are compared in absolute terms.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

// Records a scalar loss on the given tape (already bound to the store).
using LossBuilder = std::function<Var(Tape&)>;

// Analytic gradients via one backward pass, compared against central finite
// differences on a random subsample of parameter coordinates. The relative
// error per coordinate is |analytic - numeric| / max(|numeric|, floor).
GradientCheckResult gradient_check(const LossBuilder& loss, ParamStore& store,
                                   const GradientCheckOptions& opts = {});

// Same comparison against caller-supplied analytic gradients (aligned with
// the store's parameters).
GradientCheckResult compare_gradients(const LossBuilder& loss, ParamStore& store,
                                      const std::vector<Tensor>& analytic,
                                      const GradientCheckOptions& opts = {});

// Analytic gradients of `loss` without modifying the store's grad buffers.
std::vector<Tensor> analytic_gradients(const LossBuilder& loss, ParamStore& store);

}  // namespace hcars
