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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hcars/data/interactions.hpp"
#include "hcars/explainer/explainer.hpp"
#include "hcars/substrate/param_store.hpp"
#include "hcars/substrate/tape.hpp"
#include "hcars/surrogate/laws.hpp"
#include "hcars/target/ncf.hpp"

namespace hcars::surrogate {

using data::InteractionMatrix;
using data::ItemId;
using data::UserId;

enum class CfLossMode { kContrast, kAttract };

CfLossMode parse_cf_mode(const std::string& name);
std::string cf_mode_name(CfLossMode mode);

struct SurrogateTrainConfig {
  std::size_t d = 64;
  std::size_t d_h = 128;
  double lambda1 = 0.76;
  double lambda2 = 1e-4;
  double lr = 0.001;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;       // episodes per optimiser step
  std::size_t chunk = 8;             // positives per episode
  std::size_t max_antecedents = 16;  // history events per clause
  std::size_t reg_vectors = 8;       // law-sample vectors per step
  double alpha = 10.0;               // BPR sigmoid scale
  double init_std = 0.1;
  CfLossMode cf_mode = CfLossMode::kContrast;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLosses {
  double l_fa = 0.0;
  double l_cf = 0.0;
  double l_reg = 0.0;
  double total = 0.0;
};

// Neural-logic surrogate. An interaction (u, j) is encoded as an event
// vector; a candidate x for user u is scored by how close the clause
// NOT e_1 OR ... OR NOT e_n OR e_x is to the fixed truth anchor T.
class SurrogateModel {
 public:
  struct Ids {
    ParamId user, item;
    ParamId ev_wu, ev_wi, ev_b1, ev_w2, ev_b2;
    ParamId not_w1, not_b1, not_w2, not_b2;
    ParamId and_wa, and_wb, and_b1, and_w2, and_b2;
    ParamId or_wa, or_wb, or_b1, or_w2, or_b2;
  };

  SurrogateModel() = default;
  SurrogateModel(std::size_t users, std::size_t items, const SurrogateTrainConfig& cfg);

  std::size_t users() const { return users_; }
  std::size_t items() const { return items_; }
  std::size_t dim() const { return cfg_.d; }
  std::size_t hidden() const { return cfg_.d_h; }
  const SurrogateTrainConfig& config() const { return cfg_; }
  const Ids& ids() const { return ids_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::span<const double> truth() const { return truth_.values(); }
  const std::vector<EpochLosses>& curve() const { return curve_; }
  std::vector<EpochLosses>& curve() { return curve_; }

  std::span<const double> user_embedding(UserId u) const;
  std::span<const double> item_embedding(ItemId i) const;

  // Tape builders. The event's first layer is split into a user half
  // (carrying the bias) and an item half, which is W1 [u; j] + b1.
  Var user_part(Tape& tape, Var user) const;
  Var event(Tape& tape, Var user_part, Var item) const;
  Var not_(Tape& tape, Var x) const;
  Var and_(Tape& tape, Var a, Var b) const;
  Var or_(Tape& tape, Var a, Var b) const;
  Var truth(Tape& tape) const;
  // OR-chain of NOT(events) in the given order; throws on an empty list.
  Var prefix(Tape& tape, std::span<const Var> events) const;
  Var build_expression(Tape& tape, std::span<const Var> events, Var candidate) const;
  Var truth_score(Tape& tape, Var expression) const;

  // Inference antecedents: the whole observed history in ascending id
  // order, or a fixed per-user sample of max_antecedents items, sorted.
  std::vector<ItemId> antecedents(UserId u, const InteractionMatrix& observed) const;
  std::vector<ItemId> antecedents(std::span<const ItemId> history, std::uint64_t stream) const;

  // sim_hat(c_{u,x}, T) with the inference order.
  double score(UserId u, ItemId x, const InteractionMatrix& observed) const;

  // Copies the truth anchor and every parameter of `other`, which must have
  // the same shape apart from fewer or equal users. Extra user rows keep
  // their current values; gradients and optimiser moments are zeroed.
  void copy_parameters_from(const SurrogateModel& other);

  void save(const std::filesystem::path& path) const;
  static SurrogateModel load(const std::filesystem::path& path);

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  SurrogateTrainConfig cfg_;
  ParamStore params_;
  Ids ids_{};
  Tensor truth_;
  std::vector<EpochLosses> curve_;
};

// Plain-arithmetic evaluation of a (frozen) surrogate. Item halves of the
// event layer are precomputed; everything else is computed on demand.
class SurrogateScorer {
 public:
  using Vec = std::vector<double>;

  explicit SurrogateScorer(const SurrogateModel& model);

  const SurrogateModel& model() const { return *model_; }
  std::size_t dim() const { return d_; }

  Vec user_part(std::span<const double> h_u) const;
  Vec item_part(std::span<const double> h_j) const;
  std::span<const double> item_part(ItemId j) const;
  Vec event(std::span<const double> user_part, std::span<const double> item_part) const;
  Vec not_(std::span<const double> x) const;
  Vec and_(std::span<const double> a, std::span<const double> b) const;
  Vec or_(std::span<const double> a, std::span<const double> b) const;
  std::span<const double> truth() const { return model_->truth(); }

  Vec prefix(std::span<const double> user_part, std::span<const ItemId> antecedents) const;
  // sim_hat(OR(prefix, e), T) for every item.
  void scores(std::span<const double> user_part, std::span<const double> prefix,
              std::span<double> out) const;
  double score(std::span<const double> user_part, std::span<const double> prefix,
               std::span<const double> item_part) const;

  // Scores of every item for a legitimate user under inference order.
  std::vector<double> user_scores(UserId u, const InteractionMatrix& observed) const;
  target::RankedList top_k(UserId u, std::size_t k, const InteractionMatrix& observed) const;

 private:
  const SurrogateModel* model_;
  std::size_t d_, d_h_, n_;
  std::vector<double> item_parts_;  // n x d_h
};

// Law-residual backends.
struct PlainLogic {
  using Vec = std::vector<double>;
  using Scalar = double;
  const SurrogateScorer& s;
  Vec truth() const { return {s.truth().begin(), s.truth().end()}; }
  Vec falsity() const { return s.not_(s.truth()); }
  Vec not_(const Vec& x) const { return s.not_(x); }
  Vec and_(const Vec& a, const Vec& b) const { return s.and_(a, b); }
  Vec or_(const Vec& a, const Vec& b) const { return s.or_(a, b); }
  Scalar sim(const Vec& a, const Vec& b) const;
  Scalar one_minus(Scalar x) const { return 1.0 - x; }
};

struct TapeLogic {
  using Vec = Var;
  using Scalar = Var;
  Tape& tape;
  const SurrogateModel& model;
  Var t, f;
  TapeLogic(Tape& tape, const SurrogateModel& model);
  Vec truth() const { return t; }
  Vec falsity() const { return f; }
  Vec not_(Var x) const { return model.not_(tape, x); }
  Vec and_(Var a, Var b) const { return model.and_(tape, a, b); }
  Vec or_(Var a, Var b) const { return model.or_(tape, a, b); }
  Scalar sim(Var a, Var b) const { return tape.sim_hat(a, b); }
  Scalar one_minus(Var x) const { return tape.affine_scalar(x, -1.0, 1.0); }
};

// One factual training unit: a clause prefix over `antecedents` (in order)
// shared by each positive and its sampled negative.
struct Episode {
  UserId user = 0;
  std::vector<ItemId> antecedents;
  std::vector<ItemId> positives;
  std::vector<ItemId> negatives;  // one per positive, outside I_u
};

// A counterfactual pair: the same clause with and without the removed
// items, both ending in the explained target.
struct CfSample {
  UserId user = 0;
  ItemId target = 0;
  std::vector<ItemId> with_removed;
  std::vector<ItemId> without_removed;
};

// Per-pair terms: -log sigmoid(alpha (s+ - s-)), and the counterfactual
// term on two expression vectors.
Var fa_pair_loss(Tape& tape, Var s_pos, Var s_neg, double alpha);
Var cf_pair_loss(Tape& tape, Var c_pos, Var c_cf, CfLossMode mode);

// Mean over pairs of -log sigmoid(alpha (s+ - s-)). Event and prefix
// vectors built along the way are appended to `pool` when given.
Var loss_fa(Tape& tape, const SurrogateModel& model, std::span<const Episode> episodes,
            double alpha, std::vector<Var>* pool = nullptr);
// Contrast: mean of -log(1 - sim_hat(c+, cCF)); attract: mean of
// -log sim_hat(c+, cCF).
Var loss_cf(Tape& tape, const SurrogateModel& model, std::span<const CfSample> samples,
            CfLossMode mode);
// Mean over vectors and the nine laws of the law residuals.
Var loss_reg(Tape& tape, const SurrogateModel& model, std::span<const Var> vectors);

std::vector<Episode> make_episodes(const InteractionMatrix& observed,
                                   const SurrogateTrainConfig& cfg, Rng& rng);
// Turns an explanation into clause pairs; returns false (and leaves `out`
// untouched) when the reduced history would be empty or the ids do not fit.
bool make_cf_sample(const explainer::CounterfactualExplanation& cf,
                    const InteractionMatrix& observed, std::size_t max_antecedents, Rng& rng,
                    CfSample& out);

struct TrainStats {
  std::size_t cf_used = 0;
  std::size_t cf_skipped = 0;
};

// Adam on L_fa + lambda1 L_cf + lambda2 L_reg. The L_cf term is dropped when
// lambda1 is zero or no explanation survives filtering, and L_reg when
// lambda2 is zero.
SurrogateModel train_surrogate(const InteractionMatrix& observed,
                               std::span<const explainer::CounterfactualExplanation> cfs,
                               const SurrogateTrainConfig& cfg, TrainStats* stats = nullptr);

// train_surrogate starting from the parameters of `init` instead of a fresh
// initialisation. Users beyond init.users() start from the usual random
// rows.
SurrogateModel fine_tune_surrogate(const SurrogateModel& init, const InteractionMatrix& observed,
                                   std::span<const explainer::CounterfactualExplanation> cfs,
                                   const SurrogateTrainConfig& cfg, TrainStats* stats = nullptr);

// Loss curve as CSV `epoch,l_fa,l_cf,l_reg,total`.
void write_loss_curve(const std::filesystem::path& path, const SurrogateModel& model);

// Held-out vectors for law audits: events of uniformly drawn (user, item)
// pairs, fixed by `seed`.
std::vector<std::pair<UserId, ItemId>> sample_pairs(std::size_t users, std::size_t items,
                                                    std::size_t count, std::uint64_t seed);
std::array<double, kNumLaws> law_audit(const SurrogateModel& model,
                                       std::span<const std::pair<UserId, ItemId>> pairs);

// Mean sim_hat(c+, cCF) over explanations with a fixed antecedent draw.
double cf_similarity(const SurrogateModel& model, const InteractionMatrix& observed,
                     std::span<const explainer::CounterfactualExplanation> cfs,
                     std::uint64_t seed);

// Mean |score(order 1) - score(order 2)| over random antecedent
// permutations of observed users.
double permutation_gap(const SurrogateModel& model, const InteractionMatrix& observed,
                       std::size_t samples, std::uint64_t seed);

}  // namespace hcars::surrogate
