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

#include <array>
#include <cstddef>
#include <string_view>

namespace hcars::surrogate {

inline constexpr std::size_t kNumLaws = 9;

inline constexpr std::array<std::string_view, kNumLaws> kLawNames = {
    "double_negation", "or_idempotence",  "and_idempotence",
    "or_annihilator",  "and_identity",    "or_identity",
    "excluded_middle", "non_contradiction", "negation_distinct"};

// Residuals of the logical laws for one vector w, in kLawNames order. Each
// equality law contributes 1 - sim(lhs, rhs); the last law contributes
// sim(w, NOT w). `L` supplies Vec/Scalar types and the operations, so the
// same definitions run on plain vectors, on a tape, or on an exact Boolean
// algebra in tests.
template <class L>
std::array<typename L::Scalar, kNumLaws> law_residuals(L& ops, const typename L::Vec& w) {
  const auto T = ops.truth();
  const auto F = ops.falsity();
  const auto nw = ops.not_(w);
  return {ops.one_minus(ops.sim(ops.not_(nw), w)),
          ops.one_minus(ops.sim(ops.or_(w, w), w)),
          ops.one_minus(ops.sim(ops.and_(w, w), w)),
          ops.one_minus(ops.sim(ops.or_(w, T), T)),
          ops.one_minus(ops.sim(ops.and_(w, T), w)),
          ops.one_minus(ops.sim(ops.or_(w, F), w)),
          ops.one_minus(ops.sim(ops.or_(w, nw), T)),
          ops.one_minus(ops.sim(ops.and_(w, nw), F)),
          ops.sim(w, nw)};
}

}  // namespace hcars::surrogate
