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

#include "hcars/substrate/ops.hpp"

#include <algorithm>
#include <cmath>

#include "hcars/substrate/error.hpp"

namespace hcars {

void affine_into(std::span<const double> x, const Tensor& W,
                 std::span<const double> b, std::span<double> out) {
  if (W.rank() != 2 || W.cols() != x.size() || W.rows() != b.size() ||
      out.size() != b.size()) {
    throw ShapeError("affine: W" + W.shape_string() + " x[" +
                     std::to_string(x.size()) + "] b[" +
                     std::to_string(b.size()) + "]");
  }
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double* w = W.values().data() + o * in;
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
    out[o] = s;
  }
}

Tensor affine(std::span<const double> x, const Tensor& W, std::span<const double> b) {
  Tensor y(b.size());
  affine_into(x, W, b, y.values());
  return y;
}

Tensor relu(std::span<const double> x) {
  Tensor y = Tensor::vector(x);
  relu_inplace(y.values());
  return y;
}

void relu_inplace(std::span<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

Tensor concat(std::span<const double> a, std::span<const double> b) {
  Tensor y(a.size() + b.size());
  std::copy(a.begin(), a.end(), y.values().begin());
  std::copy(b.begin(), b.end(), y.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_sim: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DomainError("cosine_sim: zero-norm input");
  const double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

double map_cosine(double cosine) {
  return std::clamp(0.5 * (1.0 + cosine), kSimFloor, kSimCeil);
}

double sim_hat(std::span<const double> a, std::span<const double> b) {
  return map_cosine(cosine_sim(a, b));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double log_sigmoid(double z) { return -softplus(-z); }

}  // namespace hcars
