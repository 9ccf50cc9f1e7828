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
#include <span>
#include <vector>

#include "hcars/data/interactions.hpp"
#include "hcars/substrate/error.hpp"
#include "hcars/target/ncf.hpp"

namespace hcars::explainer {

using data::InteractionMatrix;
using data::ItemId;
using data::UserId;

// No subset of the history evicts the target.
class InfeasibleExplanation : public Error {
 public:
  using Error::Error;
};

struct ExplainerConfig {
  std::size_t k = 10;
  // Removal is simulated by fine-tuning a copy of the user row on the
  // reduced history with the network frozen.
  std::size_t ft_steps = 20;
  double ft_lr = 1.0;
  std::size_t ft_negatives = 20;  // fixed per-user negative sample
  std::uint64_t seed = 0;
};

struct CounterfactualExplanation {
  UserId user = 0;
  ItemId target = 0;
  std::vector<ItemId> removed;  // sorted
  std::size_t k = 10;
  bool valid = false;
};

// Counterfactual re-ranking for one user. The user vector after removing R
// is h_u + FT(R) - FT(empty), where FT(R) runs the fine-tuning from h_u with
// I_u \ R labelled 1 and R plus the negative sample labelled 0. Removing
// nothing therefore reproduces the model exactly. Candidates are the items
// outside the original history.
class UserContext {
 public:
  UserContext(const target::NcfModel& model, const target::NcfScorer& scorer, UserId u,
              const InteractionMatrix& history, const ExplainerConfig& cfg);

  std::span<const ItemId> history() const { return history_; }
  std::vector<double> user_vector(std::span<const ItemId> removed) const;
  // Logits of every item under the counterfactual user vector.
  std::vector<double> logits(std::span<const ItemId> removed) const;

  // Number of candidates ranked ahead of t (higher logit, or equal logit
  // and smaller id).
  std::size_t rank_of(ItemId t, std::span<const double> logits) const;
  bool in_top_k(ItemId t, std::span<const ItemId> removed) const;
  // s(t) minus the k-th best candidate other than t. Negative once evicted.
  double margin(ItemId t, std::span<const ItemId> removed) const;

  std::size_t evaluations() const { return evaluations_; }

 private:
  std::vector<double> fine_tune(std::span<const ItemId> removed) const;

  const target::NcfScorer* scorer_;
  ExplainerConfig cfg_;
  std::vector<double> h_u_;
  std::vector<double> base_;  // FT(empty)
  std::vector<ItemId> history_;
  std::vector<ItemId> negatives_;
  std::vector<char> excluded_;  // item in original history
  mutable std::size_t evaluations_ = 0;
};

class Explainer {
 public:
  Explainer(const target::NcfModel& model, const ExplainerConfig& cfg);

  const ExplainerConfig& config() const { return cfg_; }
  const target::NcfScorer& scorer() const { return scorer_; }
  const target::NcfModel& model() const { return *model_; }

  // Greedy removal by smallest margin, then single-element pruning to a
  // fixed point.
  CounterfactualExplanation explain(UserId u, ItemId t, const InteractionMatrix& history) const;
  // Minimum-cardinality valid subset by size-ordered lexicographic
  // enumeration.
  CounterfactualExplanation brute_force(UserId u, ItemId t, const InteractionMatrix& history,
                                        std::size_t max_history = 12) const;
  bool is_valid(UserId u, ItemId t, const InteractionMatrix& history,
                std::span<const ItemId> removed) const;
  // True iff no single element of `removed` can be dropped.
  bool is_subset_minimal(UserId u, ItemId t, const InteractionMatrix& history,
                         std::span<const ItemId> removed) const;

 private:
  UserContext context(UserId u, const InteractionMatrix& history) const;
  void require_recommended(const UserContext& ctx, UserId u, ItemId t) const;

  const target::NcfModel* model_;
  ExplainerConfig cfg_;
  target::NcfScorer scorer_;
};

CounterfactualExplanation explain(const target::NcfModel& model, UserId u, ItemId t, std::size_t k,
                                  const InteractionMatrix& history, ExplainerConfig cfg = {});
CounterfactualExplanation brute_force_cf(const target::NcfModel& model, UserId u, ItemId t,
                                         std::size_t k, const InteractionMatrix& history,
                                         std::size_t max_history = 12, ExplainerConfig cfg = {});
bool is_valid_cf(const target::NcfModel& model, UserId u, ItemId t, std::size_t k,
                 const InteractionMatrix& history, std::span<const ItemId> removed,
                 ExplainerConfig cfg = {});

struct HarvestConfig {
  double user_fraction = 0.6;     // share of eligible users queried
  std::size_t max_history = 60;   // users with longer histories are skipped
  std::size_t max_queries = 0;    // 0 = no cap
  std::uint64_t seed = 0;
};

struct HarvestStats {
  std::size_t eligible = 0;
  std::size_t queried = 0;
  std::size_t infeasible = 0;
};

// Queries the explainer for a random share of users, each with a target
// drawn uniformly from the user's current top-k. Infeasible queries are
// counted and skipped.
std::vector<CounterfactualExplanation> harvest(const Explainer& explainer,
                                               const InteractionMatrix& history,
                                               const HarvestConfig& cfg,
                                               HarvestStats* stats = nullptr);

// Newline-delimited JSON: {"user", "target", "removed", "k"} per line.
void write_archive(const std::filesystem::path& path,
                   std::span<const CounterfactualExplanation> cfs);
std::vector<CounterfactualExplanation> read_archive(const std::filesystem::path& path);

}  // namespace hcars::explainer
