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

#include "hcars/harness/metrics.hpp"

#include <algorithm>

#include "hcars/substrate/error.hpp"

namespace hcars::harness {

Ranker ranker_of(const target::NcfModel& model) {
  return [&model](UserId u, std::size_t k, const InteractionMatrix& history) {
    return model.top_k(u, k, history);
  };
}

Ranker ranker_of(const surrogate::SurrogateScorer& scorer) {
  return [&scorer](UserId u, std::size_t k, const InteractionMatrix& history) {
    return scorer.top_k(u, k, history);
  };
}

HitStats hit_stats(const Ranker& rank, std::span<const UserId> users,
                   std::span<const ItemId> targets, std::size_t k,
                   const InteractionMatrix& history) {
  if (users.empty()) throw PreconditionError("hit_ratio: no users");
  if (k == 0) throw PreconditionError("hit_ratio: k must be at least 1");
  HitStats out;
  out.hit.assign(users.size(), 0);
  out.per_target.assign(targets.size(), 0.0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto top = rank(users[i], k, history);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (!top.contains(targets[t])) continue;
      out.per_target[t] += 1.0;
      out.hit[i] = 1;
    }
    hits += out.hit[i];
  }
  const double n = static_cast<double>(users.size());
  for (auto& v : out.per_target) v /= n;
  out.hr = static_cast<double>(hits) / n;
  return out;
}

double hit_ratio(const Ranker& rank, std::span<const UserId> users,
                 std::span<const ItemId> targets, std::size_t k, const InteractionMatrix& history) {
  return hit_stats(rank, users, targets, k, history).hr;
}

double hit_ratio(const target::NcfModel& model, std::span<const UserId> users,
                 std::span<const ItemId> targets, std::size_t k, const InteractionMatrix& history) {
  return hit_ratio(ranker_of(model), users, targets, k, history);
}

double fresh_hit_ratio(std::span<const char> before, std::span<const char> after) {
  if (before.size() != after.size()) throw ShapeError("fresh_hit_ratio: length mismatch");
  std::size_t fresh = 0, hits = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i]) continue;
    ++fresh;
    hits += after[i] ? 1 : 0;
  }
  return fresh == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(fresh);
}

double precision_at_k(const Ranker& a, const Ranker& b, std::span<const UserId> users,
                      std::size_t k, const InteractionMatrix& history) {
  if (users.empty()) throw PreconditionError("precision_at_k: no users");
  if (k == 0) throw PreconditionError("precision_at_k: k must be at least 1");
  double total = 0.0;
  for (const UserId u : users) {
    const auto la = a(u, k, history);
    const auto lb = b(u, k, history);
    std::size_t common = 0;
    for (const auto& s : la.items) common += lb.contains(s.item) ? 1 : 0;
    total += static_cast<double>(common) / static_cast<double>(k);
  }
  return total / static_cast<double>(users.size());
}

double precision_at_k(const surrogate::SurrogateModel& surrogate, const target::NcfModel& target,
                      std::span<const UserId> users, std::size_t k,
                      const InteractionMatrix& history) {
  if (surrogate.users() < history.users() || target.users() < history.users() ||
      surrogate.items() != target.items()) {
    throw ShapeError("precision_at_k: models cover different id spaces");
  }
  const surrogate::SurrogateScorer scorer(surrogate);
  return precision_at_k(ranker_of(scorer), ranker_of(target), users, k, history);
}

std::vector<UserId> active_users(const InteractionMatrix& matrix) {
  std::vector<UserId> out;
  for (UserId u = 0; u < matrix.users(); ++u) {
    if (!matrix.history(u).empty()) out.push_back(u);
  }
  return out;
}

}  // namespace hcars::harness
