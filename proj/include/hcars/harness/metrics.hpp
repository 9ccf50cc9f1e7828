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
#include <functional>
#include <span>
#include <vector>

#include "hcars/data/interactions.hpp"
#include "hcars/surrogate/surrogate.hpp"
#include "hcars/target/ncf.hpp"

namespace hcars::harness {

using data::InteractionMatrix;
using data::ItemId;
using data::UserId;

// Top-k list of a user with the user's row of `history` excluded.
using Ranker =
    std::function<target::RankedList(UserId u, std::size_t k, const InteractionMatrix& history)>;

Ranker ranker_of(const target::NcfModel& model);
Ranker ranker_of(const surrogate::SurrogateScorer& scorer);

struct HitStats {
  std::vector<char> hit;           // per user: some target in the top-k
  std::vector<double> per_target;  // per target: share of users with it in the top-k
  double hr = 0.0;
};

HitStats hit_stats(const Ranker& rank, std::span<const UserId> users,
                   std::span<const ItemId> targets, std::size_t k,
                   const InteractionMatrix& history);

// Share of `users` whose top-k holds at least one target.
double hit_ratio(const Ranker& rank, std::span<const UserId> users,
                 std::span<const ItemId> targets, std::size_t k, const InteractionMatrix& history);
double hit_ratio(const target::NcfModel& model, std::span<const UserId> users,
                 std::span<const ItemId> targets, std::size_t k, const InteractionMatrix& history);

// Hit ratio over the users that were not hit before. Returns 0 when every
// user was already hit.
double fresh_hit_ratio(std::span<const char> before, std::span<const char> after);

// Mean over users of |top_k(a) & top_k(b)| / k.
double precision_at_k(const Ranker& a, const Ranker& b, std::span<const UserId> users,
                      std::size_t k, const InteractionMatrix& history);
double precision_at_k(const surrogate::SurrogateModel& surrogate, const target::NcfModel& target,
                      std::span<const UserId> users, std::size_t k,
                      const InteractionMatrix& history);

// Users with a nonempty row.
std::vector<UserId> active_users(const InteractionMatrix& matrix);

}  // namespace hcars::harness
