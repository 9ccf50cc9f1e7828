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

#include "hcars/substrate/param_store.hpp"

#include <cmath>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars {

ParamId ParamStore::add(std::string name, Tensor init, bool trainable) {
  for (const auto& p : params_) {
    if (p.name == name) throw PreconditionError("duplicate parameter '" + name + "'");
  }
  Parameter p;
  p.name = std::move(name);
  p.grad = init;
  p.grad.fill(0.0);
  p.first_moment = p.grad;
  p.second_moment = p.grad;
  p.value = std::move(init);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw PreconditionError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<Tensor> ParamStore::gradients() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.grad);
  return out;
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

void init_normal(Tensor& t, double stddev, Rng& rng) {
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
}

void init_glorot(Tensor& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace hcars
