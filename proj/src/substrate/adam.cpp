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

#include "hcars/substrate/adam.hpp"

#include <cmath>

#include "hcars/substrate/error.hpp"

namespace hcars {
namespace {

void update(Parameter& p, std::span<const double> g, double lr, double bc1,
            double bc2, const AdamConfig& cfg) {
  auto value = p.value.values();
  auto m = p.first_moment.values();
  auto v = p.second_moment.values();
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

void adam_step(ParamStore& store, std::span<const Tensor> grads, double lr,
               const AdamConfig& cfg) {
  if (grads.size() != store.size()) {
    throw ShapeError("adam_step: gradient count does not match parameters");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!grads[i].same_shape(store[i].value)) {
      throw ShapeError("adam_step: gradient for '" + store[i].name + "' has shape " +
                       grads[i].shape_string() + ", expected " +
                       store[i].value.shape_string());
    }
  }
  store.increment_step();
  const double t = static_cast<double>(store.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    update(store[i], grads[i].values(), lr, bc1, bc2, cfg);
  }
}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg) {
  store.increment_step();
  const double t = static_cast<double>(store.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store) {
    if (!p.trainable) continue;
    update(p, p.grad.values(), lr, bc1, bc2, cfg);
  }
}

}  // namespace hcars
