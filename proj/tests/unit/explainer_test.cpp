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

#include <filesystem>

#include "doctest.h"
#include "hcars/data/dataset.hpp"
#include "hcars/explainer/explainer.hpp"

namespace hcars::explainer {
namespace {

// Two-dimensional tower whose logit is relu(h0 + e0) + relu(h1 + e1):
// item 0 (the target) and item 1 live on axis 0, item 2 on axis 1, and
// items 3 and 4 are axis-1 competitors just below the target.
target::NcfModel single_driver_model() {
  target::TargetTrainConfig cfg;
  cfg.d = 2;
  target::NcfModel m(1, 5, cfg);
  auto& p = m.params();
  const auto& ids = m.ids();
  p[ids.user].value = Tensor::matrix({{0, 0}});
  p[ids.item].value = Tensor::matrix({{5, -10}, {5, -10}, {-10, 5}, {-10, 3}, {-10, 3}});
  p[ids.w1].value = Tensor::matrix({{1, 0, 1, 0}, {0, 1, 0, 1}});
  p[ids.b1].value.fill(0);
  p[ids.w2].value = Tensor::matrix({{1, 1}});
  p[ids.b2].value.fill(0);
  p[ids.w3].value = Tensor::matrix({{1}});
  p[ids.b3].value.fill(0);
  return m;
}

ExplainerConfig toy_config() {
  ExplainerConfig cfg;
  cfg.k = 2;
  cfg.ft_negatives = 0;
  return cfg;
}

TEST_CASE("only the driving item explains the target") {
  auto m = single_driver_model();
  auto hist = InteractionMatrix::from_histories(5, {{1, 2}});
  Explainer ex(m, toy_config());

  auto bf = ex.brute_force(0, 0, hist);
  CHECK(bf.removed == std::vector<ItemId>{1});
  auto g = ex.explain(0, 0, hist);
  CHECK(g.removed == std::vector<ItemId>{1});
  CHECK(g.valid);
  CHECK(g.k == 2);

  CHECK_FALSE(ex.is_valid(0, 0, hist, std::vector<ItemId>{}));
  CHECK(ex.is_valid(0, 0, hist, bf.removed));
  CHECK_FALSE(ex.is_valid(0, 0, hist, std::vector<ItemId>{2}));
  CHECK(ex.is_subset_minimal(0, 0, hist, g.removed));
  CHECK_FALSE(ex.is_subset_minimal(0, 0, hist, std::vector<ItemId>{1, 2}));
  CHECK(is_valid_cf(m, 0, 0, 2, hist, bf.removed, toy_config()));
}

TEST_CASE("single-item history") {
  auto m = single_driver_model();
  auto hist = InteractionMatrix::from_histories(5, {{1}});
  auto cf = explain(m, 0, 0, 2, hist, toy_config());
  CHECK(cf.removed == std::vector<ItemId>{1});
}

TEST_CASE("infeasible and unrecommended targets") {
  auto m = single_driver_model();
  auto hist = InteractionMatrix::from_histories(5, {{2}});
  Explainer ex(m, toy_config());
  CHECK_THROWS_AS(ex.explain(0, 0, hist), InfeasibleExplanation);
  CHECK_THROWS_AS(ex.brute_force(0, 0, hist), InfeasibleExplanation);
  CHECK_FALSE(ex.is_valid(0, 0, hist, std::vector<ItemId>{2}));

  // Items 3 and 4 tie; the larger id sits at rank 3.
  auto hist2 = InteractionMatrix::from_histories(5, {{1, 2}});
  CHECK_THROWS_AS(ex.explain(0, 4, hist2), PreconditionError);
  CHECK_THROWS_AS(ex.explain(0, 1, hist2), PreconditionError);
  CHECK_THROWS_AS(ex.brute_force(0, 0, hist2, 1), ShapeError);
  CHECK_THROWS_AS(ex.is_valid(0, 0, hist2, std::vector<ItemId>{3}), PreconditionError);
}

TEST_CASE("block dataset: greedy is valid, minimal and within twice the optimum") {
  auto ds = data::make_block_dataset(2, 20, 40, 0.25, 3);
  target::TargetTrainConfig tc;
  tc.d = 16;
  tc.epochs = 60;
  tc.lr = 0.002;
  tc.batch_size = 32;
  tc.seed = 1;
  auto model = target::train_target(ds.matrix, tc);
  ExplainerConfig ec;
  ec.k = 5;
  ec.ft_negatives = 5;
  Explainer ex(model, ec);

  std::size_t feasible = 0;
  for (UserId u = 0; u < 20; ++u) {
    for (ItemId t : model.top_k(u, ec.k, ds.matrix).ids()) {
      CounterfactualExplanation g;
      try {
        g = ex.explain(u, t, ds.matrix);
      } catch (const InfeasibleExplanation&) {
        CHECK_THROWS_AS(ex.brute_force(u, t, ds.matrix), InfeasibleExplanation);
        continue;
      }
      ++feasible;
      const auto bf = ex.brute_force(u, t, ds.matrix);
      CHECK(ex.is_valid(u, t, ds.matrix, g.removed));
      CHECK(ex.is_subset_minimal(u, t, ds.matrix, g.removed));
      CHECK(bf.removed.size() <= g.removed.size());
      CHECK(g.removed.size() <= 2 * bf.removed.size());
    }
  }
  CHECK(feasible >= 10);

  HarvestConfig hc;
  hc.seed = 2;
  HarvestStats stats;
  auto cfs = harvest(ex, ds.matrix, hc, &stats);
  CHECK(stats.eligible == 20);
  CHECK(stats.queried == 12);
  CHECK(cfs.size() + stats.infeasible == stats.queried);
  for (const auto& cf : cfs) CHECK(ex.is_valid(cf.user, cf.target, ds.matrix, cf.removed));

  auto p = std::filesystem::temp_directory_path() / "hcars_cf_archive.jsonl";
  write_archive(p, cfs);
  auto back = read_archive(p);
  REQUIRE(back.size() == cfs.size());
  for (std::size_t j = 0; j < cfs.size(); ++j) {
    CHECK(back[j].user == cfs[j].user);
    CHECK(back[j].target == cfs[j].target);
    CHECK(back[j].removed == cfs[j].removed);
    CHECK(back[j].k == cfs[j].k);
  }
}

}  // namespace
}  // namespace hcars::explainer
