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

#include "hcars/substrate/tensor.hpp"

namespace hcars {

// Clamp bounds for mapped similarities so log() stays finite.
inline constexpr double kSimFloor = 1e-7;
inline constexpr double kSimCeil = 1.0 - 1e-7;

// y = W x + b with W of shape out x in.
Tensor affine(std::span<const double> x, const Tensor& W, std::span<const double> b);
// Same, writing into a caller-provided buffer of length out.
void affine_into(std::span<const double> x, const Tensor& W,
                 std::span<const double> b, std::span<double> out);

Tensor relu(std::span<const double> x);
void relu_inplace(std::span<double> x);

Tensor concat(std::span<const double> a, std::span<const double> b);

// a.b / (|a||b|). Throws DomainError on a zero-norm input.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// (1 + cos) / 2 clamped to [kSimFloor, kSimCeil].
double sim_hat(std::span<const double> a, std::span<const double> b);
double map_cosine(double cosine);

double sigmoid(double z);
// log(sigmoid(z)) computed without overflow.
double log_sigmoid(double z);
// log(1 + exp(z)) computed without overflow.
double softplus(double z);

}  // namespace hcars
