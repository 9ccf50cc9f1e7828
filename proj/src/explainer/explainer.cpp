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

#include "hcars/explainer/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "hcars/substrate/rng.hpp"

namespace hcars::explainer {

namespace {

bool contains_sorted(std::span<const ItemId> v, ItemId x) {
  return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

UserContext::UserContext(const target::NcfModel& model, const target::NcfScorer& scorer, UserId u,
                         const InteractionMatrix& history, const ExplainerConfig& cfg)
    : scorer_(&scorer), cfg_(cfg) {
  const auto e = model.user_embedding(u);
  h_u_.assign(e.begin(), e.end());
  const auto h = history.history(u);
  history_.assign(h.begin(), h.end());
  const std::size_t n = model.items();
  excluded_.assign(n, 0);
  for (ItemId i : history_) excluded_[i] = 1;

  const std::size_t free = n - history_.size();
  const std::size_t want = std::min(cfg.ft_negatives, free);
  Rng rng = Rng(cfg.seed).split("explainer-negatives").split(static_cast<std::uint64_t>(u));
  std::vector<char> taken(n, 0);
  while (negatives_.size() < want) {
    const auto j = static_cast<ItemId>(rng.index(n));
    if (excluded_[j] || taken[j]) continue;
    taken[j] = 1;
    negatives_.push_back(j);
  }
  base_ = fine_tune({});
}

std::vector<double> UserContext::fine_tune(std::span<const ItemId> removed) const {
  std::vector<ItemId> items(history_);
  items.insert(items.end(), negatives_.begin(), negatives_.end());
  std::vector<double> labels(items.size(), 0.0);
  for (std::size_t j = 0; j < history_.size(); ++j) {
    labels[j] = contains_sorted(removed, history_[j]) ? 0.0 : 1.0;
  }
  std::vector<double> h(h_u_), g(h_u_.size());
  const double step = cfg_.ft_lr / static_cast<double>(items.size());
  for (std::size_t s = 0; s < cfg_.ft_steps; ++s) {
    scorer_->bce_and_grad(h, items, labels, g);
    for (std::size_t c = 0; c < h.size(); ++c) h[c] -= step * g[c];
  }
  return h;
}

std::vector<double> UserContext::user_vector(std::span<const ItemId> removed) const {
  if (removed.empty()) return h_u_;
  auto ft = fine_tune(removed);
  for (std::size_t c = 0; c < ft.size(); ++c) ft[c] = h_u_[c] + (ft[c] - base_[c]);
  return ft;
}

std::vector<double> UserContext::logits(std::span<const ItemId> removed) const {
  ++evaluations_;
  std::vector<double> out(scorer_->items());
  scorer_->logits(user_vector(removed), out);
  return out;
}

std::size_t UserContext::rank_of(ItemId t, std::span<const double> l) const {
  std::size_t ahead = 0;
  const double st = l[t];
  for (ItemId c = 0; c < l.size(); ++c) {
    if (c == t || excluded_[c]) continue;
    if (l[c] > st || (l[c] == st && c < t)) ++ahead;
  }
  return ahead;
}

bool UserContext::in_top_k(ItemId t, std::span<const ItemId> removed) const {
  return rank_of(t, logits(removed)) < cfg_.k;
}

double UserContext::margin(ItemId t, std::span<const ItemId> removed) const {
  const auto l = logits(removed);
  std::vector<double> others;
  others.reserve(l.size());
  for (ItemId c = 0; c < l.size(); ++c) {
    if (c != t && !excluded_[c]) others.push_back(l[c]);
  }
  if (others.size() < cfg_.k) return std::numeric_limits<double>::infinity();
  auto kth = others.begin() + static_cast<std::ptrdiff_t>(cfg_.k - 1);
  std::nth_element(others.begin(), kth, others.end(), std::greater<>());
  return l[t] - *kth;
}

Explainer::Explainer(const target::NcfModel& model, const ExplainerConfig& cfg)
    : model_(&model), cfg_(cfg), scorer_(model) {
  if (cfg.k == 0) throw PreconditionError("explainer: k must be at least 1");
}

UserContext Explainer::context(UserId u, const InteractionMatrix& history) const {
  if (u >= model_->users() || u >= history.users()) throw ShapeError("explainer: user id out of range");
  return UserContext(*model_, scorer_, u, history, cfg_);
}

void Explainer::require_recommended(const UserContext& ctx, UserId u, ItemId t) const {
  if (t >= model_->items()) throw ShapeError("explainer: item id out of range");
  if (ctx.history().empty()) throw PreconditionError("explainer: user has an empty history");
  if (contains_sorted(ctx.history(), t) || !ctx.in_top_k(t, {})) {
    throw PreconditionError("explainer: item " + std::to_string(t) + " is not in the top-" +
                            std::to_string(cfg_.k) + " of user " + std::to_string(u));
  }
}

CounterfactualExplanation Explainer::explain(UserId u, ItemId t,
                                             const InteractionMatrix& history) const {
  const auto ctx = context(u, history);
  require_recommended(ctx, u, t);
  const auto h = ctx.history();

  std::vector<ItemId> removed;
  std::vector<ItemId> trial;
  while (true) {
    ItemId best = 0;
    double best_margin = std::numeric_limits<double>::infinity();
    bool found = false;
    for (ItemId x : h) {
      if (contains_sorted(removed, x)) continue;
      trial = removed;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), x), x);
      const double m = ctx.margin(t, trial);
      if (!found || m < best_margin) {
        best = x;
        best_margin = m;
        found = true;
      }
    }
    removed.insert(std::upper_bound(removed.begin(), removed.end(), best), best);
    // A positive margin means t still beats the k-th competitor.
    if (best_margin <= 0.0 && !ctx.in_top_k(t, removed)) break;
    if (removed.size() == h.size()) {
      throw InfeasibleExplanation("explainer: no removal from the history of user " +
                                  std::to_string(u) + " evicts item " + std::to_string(t));
    }
  }

  // Drop single elements while the explanation stays valid.
  bool changed = true;
  while (changed && removed.size() > 1) {
    changed = false;
    for (std::size_t j = 0; j < removed.size(); ++j) {
      trial = removed;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(j));
      if (!ctx.in_top_k(t, trial)) {
        removed = std::move(trial);
        changed = true;
        break;
      }
    }
  }
  return {u, t, std::move(removed), cfg_.k, true};
}

CounterfactualExplanation Explainer::brute_force(UserId u, ItemId t,
                                                 const InteractionMatrix& history,
                                                 std::size_t max_history) const {
  const auto ctx = context(u, history);
  const auto h = ctx.history();
  if (h.size() > max_history) {
    throw ShapeError("brute_force_cf: history of " + std::to_string(h.size()) +
                     " items exceeds the limit of " + std::to_string(max_history));
  }
  require_recommended(ctx, u, t);
  const std::size_t n = h.size();
  std::vector<std::size_t> idx;
  std::vector<ItemId> subset;
  for (std::size_t size = 1; size <= n; ++size) {
    idx.resize(size);
    for (std::size_t j = 0; j < size; ++j) idx[j] = j;
    while (true) {
      subset.clear();
      for (std::size_t j : idx) subset.push_back(h[j]);
      if (!ctx.in_top_k(t, subset)) return {u, t, subset, cfg_.k, true};
      // Next combination in lexicographic order.
      std::size_t j = size;
      while (j > 0 && idx[j - 1] == n - size + (j - 1)) --j;
      if (j == 0) break;
      ++idx[j - 1];
      for (std::size_t r = j; r < size; ++r) idx[r] = idx[r - 1] + 1;
    }
  }
  throw InfeasibleExplanation("brute_force_cf: no subset evicts the target");
}

bool Explainer::is_valid(UserId u, ItemId t, const InteractionMatrix& history,
                         std::span<const ItemId> removed) const {
  const auto ctx = context(u, history);
  std::vector<ItemId> r(removed.begin(), removed.end());
  std::sort(r.begin(), r.end());
  for (ItemId x : r) {
    if (!contains_sorted(ctx.history(), x)) throw PreconditionError("is_valid_cf: removed item not in history");
  }
  return !ctx.in_top_k(t, r);
}

bool Explainer::is_subset_minimal(UserId u, ItemId t, const InteractionMatrix& history,
                                  std::span<const ItemId> removed) const {
  const auto ctx = context(u, history);
  std::vector<ItemId> r(removed.begin(), removed.end());
  std::sort(r.begin(), r.end());
  for (std::size_t j = 0; j < r.size(); ++j) {
    auto trial = r;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(j));
    if (!ctx.in_top_k(t, trial)) return false;
  }
  return true;
}

namespace {

ExplainerConfig with_k(ExplainerConfig cfg, std::size_t k) {
  cfg.k = k;
  return cfg;
}

}  // namespace

CounterfactualExplanation explain(const target::NcfModel& model, UserId u, ItemId t, std::size_t k,
                                  const InteractionMatrix& history, ExplainerConfig cfg) {
  return Explainer(model, with_k(cfg, k)).explain(u, t, history);
}

CounterfactualExplanation brute_force_cf(const target::NcfModel& model, UserId u, ItemId t,
                                         std::size_t k, const InteractionMatrix& history,
                                         std::size_t max_history, ExplainerConfig cfg) {
  return Explainer(model, with_k(cfg, k)).brute_force(u, t, history, max_history);
}

bool is_valid_cf(const target::NcfModel& model, UserId u, ItemId t, std::size_t k,
                 const InteractionMatrix& history, std::span<const ItemId> removed,
                 ExplainerConfig cfg) {
  return Explainer(model, with_k(cfg, k)).is_valid(u, t, history, removed);
}

std::vector<CounterfactualExplanation> harvest(const Explainer& explainer,
                                               const InteractionMatrix& history,
                                               const HarvestConfig& cfg, HarvestStats* stats) {
  HarvestStats local;
  std::vector<UserId> eligible;
  for (UserId u = 0; u < history.users(); ++u) {
    const auto n = history.history(u).size();
    if (n >= 1 && n <= cfg.max_history) eligible.push_back(u);
  }
  local.eligible = eligible.size();
  Rng rng = Rng(cfg.seed).split("harvest");
  rng.shuffle(eligible);
  std::size_t take = static_cast<std::size_t>(
      std::ceil(cfg.user_fraction * static_cast<double>(eligible.size()) - 1e-9));
  take = std::min(take, eligible.size());
  if (cfg.max_queries > 0) take = std::min(take, cfg.max_queries);

  const std::size_t k = explainer.config().k;
  std::vector<CounterfactualExplanation> out;
  std::vector<double> logits(explainer.scorer().items());
  std::vector<target::ScoredItem> cand;
  for (std::size_t q = 0; q < take; ++q) {
    const UserId u = eligible[q];
    const auto h = history.history(u);
    explainer.scorer().logits(explainer.model().user_embedding(u), logits);
    cand.clear();
    for (ItemId i = 0; i < logits.size(); ++i) {
      if (!contains_sorted(h, i)) cand.push_back({i, logits[i]});
    }
    target::rank_top_k(cand, k);
    if (cand.empty()) continue;
    const ItemId t = cand[rng.index(cand.size())].item;
    ++local.queried;
    try {
      out.push_back(explainer.explain(u, t, history));
    } catch (const InfeasibleExplanation&) {
      ++local.infeasible;
    }
  }
  if (stats) *stats = local;
  return out;
}

void write_archive(const std::filesystem::path& path,
                   std::span<const CounterfactualExplanation> cfs) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& cf : cfs) {
    nlohmann::json j = {{"user", cf.user}, {"target", cf.target}, {"removed", cf.removed}, {"k", cf.k}};
    out << j.dump() << '\n';
  }
}

std::vector<CounterfactualExplanation> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<CounterfactualExplanation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CounterfactualExplanation cf;
      cf.user = j.at("user").get<UserId>();
      cf.target = j.at("target").get<ItemId>();
      cf.removed = j.at("removed").get<std::vector<ItemId>>();
      cf.k = j.at("k").get<std::size_t>();
      std::sort(cf.removed.begin(), cf.removed.end());
      cf.valid = true;
      out.push_back(std::move(cf));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

}  // namespace hcars::explainer
