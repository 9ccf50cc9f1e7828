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

#include <vector>

#include "hcars/data/interactions.hpp"

namespace hcars::attack {

// A controlled account: the id it will receive once injected after the
// legitimate users, the surrogate user embedding it was crafted with (empty
// for baselines that do not use one) and its sorted interaction set.
struct FakeUserProfile {
  data::UserId user = 0;
  std::vector<double> embedding;
  std::vector<data::ItemId> items;
};

}  // namespace hcars::attack
