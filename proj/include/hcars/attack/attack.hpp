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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "hcars/attack/fake_profile.hpp"
#include "hcars/data/interactions.hpp"
#include "hcars/surrogate/surrogate.hpp"

namespace hcars::attack {

using data::InteractionMatrix;
using data::ItemId;
using data::UserId;
using surrogate::SurrogateModel;

struct AttackConfig {
  std::vector<ItemId> targets;
  std::size_t budget = 1;         // controlled users
  std::size_t n_f = 100;          // max interactions per controlled user
  double rho = 0.0;               // shift radius; <= 0 picks default_radius()
  std::size_t shift_steps = 50;
  double shift_lr = 0.25;         // first step length, as a fraction of rho
  std::size_t user_sample = 64;   // legitimate users per shift
  std::size_t pool_size = 500;    // popular items offered to the greedy step
  std::size_t rounds = 3;         // continuous/discrete alternations
  std::size_t embed_steps = 5;    // ascent steps on m per round
  double embed_lr = 0.1;          // first step length on m, absolute
  bool strict_greedy = false;     // stop adding once the best item lowers the objective
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmbeddingShift {
  ItemId target = 0;
  std::vector<double> epsilon;
  double objective = 0.0;       // mean score with t + epsilon
  double base_objective = 0.0;  // mean score with t
};

struct AscentResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> trace;  // accepted values, starting with f(x0)
};

// Value and (optionally) gradient of an objective to maximise.
using Objective = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

// Normalised-gradient ascent. A step that lowers the value is retried at
// half length; after max_halvings failures the search stops. With
// radius > 0 every iterate is projected onto the ball of that radius.
AscentResult projected_ascent(const Objective& f, std::vector<double> x0, double step,
                              std::size_t steps, double radius, std::size_t max_halvings = 20);

// 0.5 x the median L2 norm of the surrogate's item embeddings.
double default_radius(const SurrogateModel& model);

// `count` items with at least one interaction that lie outside the top 10%
// of the popularity ranking, drawn uniformly and returned sorted.
std::vector<ItemId> select_targets(const InteractionMatrix& observed, std::size_t count,
                                   std::uint64_t seed);

// Mean over users of sim_hat(c_{u, t + eps}, T) under inference order.
double shift_objective(const SurrogateModel& model, ItemId t, std::span<const double> eps,
                       std::span<const UserId> users, const InteractionMatrix& observed);

// shift_objective as a function of epsilon, with its gradient from the
// tape. The surrogate must outlive the returned object.
Objective shift_objective_fn(const SurrogateModel& model, ItemId t, std::span<const UserId> users,
                             const InteractionMatrix& observed);

EmbeddingShift optimal_shift(const SurrogateModel& model, ItemId t, std::span<const UserId> users,
                             const InteractionMatrix& observed, double rho, std::size_t steps,
                             double lr);

// Mean over shifts of sim_hat(c_{m, t + eps_t}, T). The clause for target t
// runs over `chain` with t left out, in chain order; with nothing left the
// expression is the candidate event alone.
double craft_objective(const SurrogateModel& model, std::span<const double> m,
                       std::span<const ItemId> chain, std::span<const EmbeddingShift> shifts);

struct CraftTrace {
  std::vector<double> greedy_objectives;  // after each accepted addition
  std::vector<ItemId> chain;              // targets, then fillers in order
};

// Alternates ascent on m with greedy filler additions from `pool` for
// cfg.rounds rounds, spreading the n_f - |T| filler slots evenly. Each
// addition takes the item with the highest resulting objective; with
// strict_greedy the round ends instead once that item would lower it.
FakeUserProfile craft_fake_user(const SurrogateModel& model, std::span<const EmbeddingShift> shifts,
                                std::span<const ItemId> pool, std::span<const double> m0,
                                const AttackConfig& cfg, CraftTrace* trace = nullptr);

// Popular-item pool: the top pool_size items of `observed` plus the
// targets, sorted.
std::vector<ItemId> candidate_pool(const InteractionMatrix& observed, const AttackConfig& cfg);

// Crafts cfg.budget controlled users in sequence; user ids continue after
// the legitimate ones.
std::vector<FakeUserProfile> run_hcars(const SurrogateModel& model,
                                       const InteractionMatrix& observed,
                                       const AttackConfig& cfg);

struct ShiftCheck {
  bool passed = false;
  double loss_before = 0.0;  // -sum_u sim_hat(c_{u,t}, T)
  double loss_after = 0.0;
  double delta = 0.0;        // loss_after - loss_before
};

ShiftCheck shift_condition_check(const SurrogateModel& before, const SurrogateModel& after,
                                 ItemId t, std::span<const UserId> users,
                                 const InteractionMatrix& observed);

// Targets plus fillers drawn without replacement from the top 10% most
// popular items (or the whole ranking when that is too small).
std::vector<FakeUserProfile> bandwagon(const InteractionMatrix& observed,
                                       const data::PopularityTable& pop, const AttackConfig& cfg);
// Targets plus uniformly drawn fillers.
std::vector<FakeUserProfile> random_attack(const InteractionMatrix& observed,
                                           const AttackConfig& cfg);

// Newline-delimited JSON {"fake_user": id, "items": [...]}.
void write_profiles(const std::filesystem::path& path, std::span<const FakeUserProfile> profiles);
std::vector<FakeUserProfile> read_profiles(const std::filesystem::path& path);

}  // namespace hcars::attack
