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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hcars/substrate/tensor.hpp"

namespace hcars {

class Rng;

// One named trainable tensor with its gradient buffer and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  bool trainable = true;
};

using ParamId = std::size_t;

// Owns all parameters of one model. Parameters are addressed by the index
// returned from add(), so copies of a store stay internally consistent.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor init, bool trainable = true);

  Parameter& operator[](ParamId id) { return params_.at(id); }
  const Parameter& operator[](ParamId id) const { return params_.at(id); }
  ParamId find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  std::uint64_t step_count() const { return steps_; }
  void increment_step() { ++steps_; }

  void zero_grad();
  std::vector<Tensor> gradients() const;
  bool all_finite() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::uint64_t steps_ = 0;
};

// Fills a tensor with N(0, stddev).
void init_normal(Tensor& t, double stddev, Rng& rng);
// Glorot/Xavier uniform for a rows x cols weight matrix.
void init_glorot(Tensor& t, Rng& rng);

}  // namespace hcars
