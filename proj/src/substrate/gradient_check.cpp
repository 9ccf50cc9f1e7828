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

#include "hcars/substrate/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars {
namespace {

double evaluate(const LossBuilder& loss, ParamStore& store) {
  Tape tape(store);
  tape.set_frozen(true);
  const double v = tape.scalar_value(loss(tape));
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss");
  return v;
}

}  // namespace

std::vector<Tensor> analytic_gradients(const LossBuilder& loss, ParamStore& store) {
  std::vector<Tensor> saved = store.gradients();
  store.zero_grad();
  Tape tape(store);
  Var l = loss(tape);
  if (!std::isfinite(tape.scalar_value(l))) {
    throw NumericError("gradient_check: non-finite loss");
  }
  tape.backward(l);
  std::vector<Tensor> out = store.gradients();
  for (std::size_t i = 0; i < store.size(); ++i) store[i].grad = saved[i];
  return out;
}

GradientCheckResult gradient_check(const LossBuilder& loss, ParamStore& store,
                                   const GradientCheckOptions& opts) {
  return compare_gradients(loss, store, analytic_gradients(loss, store), opts);
}

GradientCheckResult compare_gradients(const LossBuilder& loss, ParamStore& store,
                                      const std::vector<Tensor>& analytic,
                                      const GradientCheckOptions& opts) {
  if (analytic.size() != store.size()) {
    throw ShapeError("compare_gradients: gradient count mismatch");
  }
  // Flat index over trainable coordinates.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < store.size(); ++p) {
    if (!store[p].trainable) continue;
    if (!analytic[p].same_shape(store[p].value)) {
      throw ShapeError("compare_gradients: shape mismatch for '" + store[p].name + "'");
    }
    for (std::size_t i = 0; i < store[p].value.size(); ++i) coords.emplace_back(p, i);
  }
  Rng rng(opts.seed);
  const std::size_t want = std::min(coords.size(), std::max<std::size_t>(opts.num_coordinates, 50));
  std::vector<std::size_t> picks = rng.sample_without_replacement(coords.size(), want);
  std::sort(picks.begin(), picks.end());

  GradientCheckResult result;
  for (std::size_t pick : picks) {
    auto [p, i] = coords[pick];
    double& x = store[p].value[i];
    const double orig = x;
    x = orig + opts.step;
    const double up = evaluate(loss, store);
    x = orig - opts.step;
    const double down = evaluate(loss, store);
    x = orig;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double err = std::abs(analytic[p][i] - numeric) /
                       std::max(std::abs(numeric), opts.floor);
    if (result.worst_parameter.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_parameter = store[p].name;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace hcars
