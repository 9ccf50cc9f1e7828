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

#include <span>

#include "hcars/substrate/param_store.hpp"

namespace hcars {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update using the gradients held in the store.
// Non-trainable parameters are skipped; the step count always advances.
void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {});

// Same, with gradients supplied externally (aligned with the store's
// parameters). Throws ShapeError on any misalignment.
void adam_step(ParamStore& store, std::span<const Tensor> grads, double lr,
               const AdamConfig& cfg = {});

}  // namespace hcars
