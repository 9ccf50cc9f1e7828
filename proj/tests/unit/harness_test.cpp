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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "hcars/data/dataset.hpp"
#include "hcars/harness/config.hpp"
#include "hcars/harness/experiment.hpp"
#include "hcars/harness/metrics.hpp"
#include "hcars/substrate/error.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars::harness {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hcars_harness_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<UserId> all_users(std::size_t m) {
  std::vector<UserId> u(m);
  std::iota(u.begin(), u.end(), 0u);
  return u;
}

// Independent uniformly random ranking per (user, stream).
Ranker random_ranker(std::size_t n, std::uint64_t stream) {
  return [n, stream](UserId u, std::size_t k, const InteractionMatrix&) {
    Rng rng = Rng(stream).split(static_cast<std::uint64_t>(u));
    target::RankedList out;
    out.user = u;
    out.k = k;
    for (std::size_t j : rng.sample_without_replacement(n, k)) {
      out.items.push_back({static_cast<ItemId>(j), 0.0});
    }
    return out;
  };
}

// P(a uniformly random k-subset of n items meets a fixed set of size t).
double hit_probability(std::size_t n, std::size_t k, std::size_t t) {
  double miss = 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    miss *= static_cast<double>(n - t - j) / static_cast<double>(n - j);
  }
  return 1.0 - miss;
}

ExperimentConfig small_block_config() {
  ExperimentConfig c;
  c.dataset.kind = "block";
  c.dataset.groups = 2;
  c.dataset.users = 40;
  c.dataset.items = 30;
  c.dataset.density = 0.3;
  c.dataset.seed = 5;
  c.train_fraction = 0.8;
  c.cf_fraction = 0.5;
  c.k = 5;
  c.budgets = {10.0};
  c.seeds = {1, 2};
  c.methods = {Method::kRandom};
  c.num_targets = 2;
  c.target.d = 8;
  c.target.epochs = 5;
  c.target.lr = 0.01;
  c.target.batch_size = 64;
  c.surrogate.d = 8;
  c.surrogate.d_h = 16;
  c.surrogate.epochs = 3;
  c.surrogate.lr = 0.01;
  c.attack.n_f = 6;
  c.attack.pool_size = 30;
  return c;
}

}  // namespace

TEST_CASE("hit ratio is 1 when a target leads every list") {
  const auto obs = data::make_block_dataset(2, 20, 20, 0.3, 1).matrix;
  const std::vector<ItemId> targets = {7, 13};
  Ranker r = [&](UserId u, std::size_t k, const InteractionMatrix&) {
    target::RankedList out;
    out.user = u;
    out.k = k;
    out.items.push_back({targets[u % 2], 1.0});
    for (ItemId i = 0; out.items.size() < k; ++i) {
      if (i != targets[u % 2]) out.items.push_back({i, 0.0});
    }
    return out;
  };
  const auto users = all_users(obs.users());
  CHECK(hit_ratio(r, users, targets, 5, obs) == 1.0);
  const auto st = hit_stats(r, users, targets, 5, obs);
  CHECK(st.per_target[0] == doctest::Approx(0.5));
  CHECK(st.per_target[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(hit_ratio(r, std::vector<UserId>{}, targets, 5, obs), PreconditionError);
}

TEST_CASE("hit ratio matches a full per-user scan") {
  const auto obs = data::make_block_dataset(3, 45, 30, 0.3, 2).matrix;
  target::TargetTrainConfig cfg;
  cfg.d = 8;
  cfg.epochs = 10;
  cfg.lr = 0.01;
  cfg.batch_size = 32;
  cfg.seed = 3;
  const auto model = target::train_target(obs, cfg);
  const auto users = all_users(obs.users());
  for (std::size_t k : {1u, 5u, 10u}) {
    for (const std::vector<ItemId>& targets :
         {std::vector<ItemId>{0}, std::vector<ItemId>{4, 17}, std::vector<ItemId>{2, 11, 25}}) {
      std::size_t hits = 0;
      for (UserId u : users) {
        // Every unseen item, sorted by (score desc, id asc).
        const auto s = model.scores(u);
        std::vector<ItemId> cand;
        for (ItemId i = 0; i < obs.items(); ++i) {
          if (!obs.contains(u, i)) cand.push_back(i);
        }
        std::sort(cand.begin(), cand.end(), [&](ItemId a, ItemId b) {
          return s[a] != s[b] ? s[a] > s[b] : a < b;
        });
        cand.resize(std::min(k, cand.size()));
        bool hit = false;
        for (ItemId t : targets) hit |= std::find(cand.begin(), cand.end(), t) != cand.end();
        hits += hit ? 1 : 0;
      }
      const double expect = static_cast<double>(hits) / static_cast<double>(users.size());
      CHECK(hit_ratio(model, users, targets, k, obs) == expect);
    }
  }
}

TEST_CASE("random rankings give the hypergeometric hit rate") {
  const std::size_t n = 400, k = 10, users = 4000;
  const InteractionMatrix empty(users, n);
  const std::vector<ItemId> targets = {3, 50, 120, 260, 399};
  const double p = hit_probability(n, k, targets.size());
  const double h = hit_ratio(random_ranker(n, 9), all_users(users), targets, k, empty);
  const double se = std::sqrt(p * (1.0 - p) / users);
  MESSAGE("hit ratio " << h << " expected " << p);
  CHECK(std::abs(h - p) < 4.0 * se);
  // k |T| / n is the first-order approximation.
  CHECK(p == doctest::Approx(static_cast<double>(k * targets.size()) / n).epsilon(0.06));
}

TEST_CASE("untrained target model is near the null hit rate") {
  // Histories are random; the targets are never interacted with.
  const std::size_t n = 1682, m = 300, k = 10;
  std::vector<ItemId> targets = {100, 400, 800, 1200, 1600};
  std::vector<std::vector<ItemId>> hist(m);
  Rng rng(4);
  for (auto& h : hist) {
    for (std::size_t j : rng.sample_without_replacement(n, 20)) {
      if (std::find(targets.begin(), targets.end(), j) == targets.end()) {
        h.push_back(static_cast<ItemId>(j));
      }
    }
  }
  const auto obs = InteractionMatrix::from_histories(n, hist);
  const double expect = static_cast<double>(k * targets.size()) / n;
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    target::TargetTrainConfig cfg;
    cfg.seed = seed;
    const target::NcfModel model(m, n, cfg);
    mean += hit_ratio(model, all_users(m), targets, k, obs) / 10.0;
  }
  MESSAGE("mean hit ratio " << mean << " expected " << expect);
  CHECK(mean > expect / 3.0);
  CHECK(mean < expect * 3.0);
}

TEST_CASE("fresh hit ratio counts only users without a clean hit") {
  const std::vector<char> before = {1, 0, 0, 1, 0};
  const std::vector<char> after = {0, 1, 0, 1, 1};
  CHECK(fresh_hit_ratio(before, after) == doctest::Approx(2.0 / 3.0));
  CHECK(fresh_hit_ratio(std::vector<char>{1, 1}, std::vector<char>{0, 1}) == 0.0);
  CHECK_THROWS_AS(fresh_hit_ratio(before, std::vector<char>{1}), ShapeError);
}

TEST_CASE("precision at k") {
  const std::size_t n = 500, k = 10, users = 3000;
  const InteractionMatrix empty(users, n);
  const auto u = all_users(users);
  SUBCASE("identical rankings") {
    CHECK(precision_at_k(random_ranker(n, 1), random_ranker(n, 1), u, k, empty) == 1.0);
  }
  SUBCASE("independent rankings overlap by k/n") {
    const double p = precision_at_k(random_ranker(n, 1), random_ranker(n, 2), u, k, empty);
    // Overlap count is hypergeometric with mean k^2/n and variance below it.
    const double mean = static_cast<double>(k) / n;
    const double se = std::sqrt(static_cast<double>(k * k) / n / users) / k;
    MESSAGE("P@10 " << p << " expected " << mean);
    CHECK(std::abs(p - mean) < 4.0 * se);
  }
  SUBCASE("surrogate against target on shared id spaces") {
    const auto obs = data::make_block_dataset(2, 20, 16, 0.4, 1).matrix;
    target::TargetTrainConfig tc;
    tc.d = 4;
    tc.epochs = 2;
    const auto tgt = target::train_target(obs, tc);
    surrogate::SurrogateTrainConfig sc;
    sc.d = 4;
    sc.d_h = 8;
    sc.epochs = 1;
    const auto sur = surrogate::train_surrogate(obs, {}, sc);
    const double p = precision_at_k(sur, tgt, all_users(obs.users()), 3, obs);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    const surrogate::SurrogateModel other(obs.users(), 15, sc);
    CHECK_THROWS_AS(precision_at_k(other, tgt, all_users(obs.users()), 3, obs), ShapeError);
  }
}

TEST_CASE("budgets round up to whole users") {
  CHECK(budget_users(5.0, 943) == 48);
  CHECK(budget_users(1.0, 943) == 10);
  CHECK(budget_users(3.0, 943) == 29);
  CHECK(budget_users(0.5, 943) == 5);
  CHECK(budget_users(5.0, 100) == 5);
  CHECK(budget_users(1.0, 60) == 1);
}

TEST_CASE("config parsing and validation") {
  const auto c = small_block_config();
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);

  const nlohmann::json minimal = {{"dataset", {{"kind", "block"}}}};
  CHECK(config_from_json(minimal).k == 10);
  CHECK(config_from_json(minimal).budgets == std::vector<double>{0.5, 1, 3, 5});
  CHECK(config_from_json(minimal).cf_fraction == 0.6);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::object()), PreconditionError);

  auto bad = j;
  bad["surprise"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), ParseError);
  bad = j;
  bad["attack"]["typo"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), ParseError);
  bad = j;
  bad["train_fraction"] = 0.0;
  CHECK_THROWS_AS(config_from_json(bad), PreconditionError);
  bad = j;
  bad["cf_fraction"] = 1.5;
  CHECK_THROWS_AS(config_from_json(bad), PreconditionError);
  bad = j;
  bad["k"] = 0;
  CHECK_THROWS_AS(config_from_json(bad), PreconditionError);
  bad = j;
  bad["budgets"] = {1.0, -2.0};
  CHECK_THROWS_AS(config_from_json(bad), PreconditionError);
  bad = j;
  bad["methods"] = {"shill"};
  CHECK_THROWS_AS(config_from_json(bad), ParseError);
  bad = j;
  bad["k"] = "ten";
  CHECK_THROWS_AS(config_from_json(bad), ParseError);

  CHECK(parse_method("bandwagon") == Method::kBandwagon);
  CHECK(method_name(Method::kHcars) == "hcars");
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"block.json", "movielens.json", "movielens_low.json"}) {
    const auto cfg = load_config(fs::path(HCARS_CONFIG_DIR) / name);
    CHECK(cfg.k >= 1);
    if (cfg.dataset.kind == "file") CHECK(cfg.dataset.path.is_absolute());
  }
}

TEST_CASE("report cells round-trip") {
  Cell c;
  c.method = "hcars";
  c.budget_pct = 0.5;
  c.budget = 5;
  c.seed = 3;
  c.status = CellStatus::kOk;
  c.targets = {1, 2};
  c.hr_pre = 0.1;
  c.hr_post = 0.30000000000000004;
  c.hr_pre_per_target = {0.05, 0.05};
  c.hr_post_per_target = {0.2, 0.1};
  c.p_at_k_cf = 0.25;
  c.shift_deltas = {-1.0, 2.0};
  const auto back = cell_from_json(cell_to_json(c));
  CHECK(cell_to_json(back) == cell_to_json(c));
  CHECK(back.hr_post == c.hr_post);
  CHECK(!back.p_at_k_nocf);

  Cell f;
  f.method = "random";
  f.status = CellStatus::kFailed;
  f.reason = "boom";
  CHECK(cell_from_json(cell_to_json(f)).reason == "boom");
}

TEST_CASE("run_experiment cell accounting and determinism") {
  const auto cfg = small_block_config();
  const auto d1 = scratch("a"), d2 = scratch("b"), d3 = scratch("c");
  const auto r = run_experiment(cfg, d1);

  // One clean baseline plus one attack cell per seed.
  REQUIRE(r.cells.size() == 4);
  for (auto seed : cfg.seeds) {
    const auto* base = r.find("none", 0.0, seed);
    const auto* atk = r.find("random", 10.0, seed);
    REQUIRE(base);
    REQUIRE(atk);
    CHECK(base->status == CellStatus::kOk);
    CHECK(atk->status == CellStatus::kOk);
    CHECK(atk->budget == 4);
    CHECK(atk->hr_pre == base->hr_pre);
    CHECK(atk->targets.size() == 2);
    CHECK(atk->hr_post >= 0.0);
    CHECK(atk->hr_post <= 1.0);
    CHECK(base->p_at_k_cf);
    CHECK(base->p_at_k_nocf);
  }
  const auto lines = slurp(d1 / "report.jsonl");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 4);
  const auto csv = slurp(d1 / "report.csv");
  CHECK(csv.rfind("method,budget,seed,hr_pre,hr_post,p_at_10\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  run_experiment(cfg, d2);
  CHECK(slurp(d2 / "report.jsonl") == lines);
  CHECK(slurp(d2 / "report.csv") == csv);

  auto threaded = cfg;
  threaded.threads = 2;
  threaded.methods = {Method::kRandom, Method::kBandwagon};
  threaded.budgets = {5.0, 10.0};
  const auto rt = run_experiment(threaded, d3);
  CHECK(rt.cells.size() == 10);
  CHECK(cell_to_json(*rt.find("random", 10.0, 1)) == cell_to_json(*r.find("random", 10.0, 1)));
  for (auto seed : cfg.seeds) {
    const double pre = rt.find("none", 0.0, seed)->hr_pre;
    for (const auto& c : rt.cells) {
      if (c.seed == seed) CHECK(c.hr_pre == pre);
    }
  }

  // A second run over a finished directory keeps every cell.
  const auto before = fs::last_write_time(d1 / "seed_1" / "target.ckpt");
  run_experiment(cfg, d1);
  CHECK(slurp(d1 / "report.jsonl") == lines);
  CHECK(fs::last_write_time(d1 / "seed_1" / "target.ckpt") == before);

  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST_CASE("resume recomputes only missing cells") {
  const auto cfg = small_block_config();
  const auto d = scratch("resume");
  run_experiment(cfg, d);
  const auto full = slurp(d / "report.jsonl");
  // Drop the last cell as if the run had been interrupted.
  auto cut = full;
  cut.pop_back();
  cut.erase(cut.rfind('\n') + 1);
  {
    std::ofstream out(d / "report.jsonl");
    out << cut;
  }
  auto partial = resume_report(cfg, d);
  std::size_t pending = 0;
  for (const auto& c : partial.cells) pending += c.status == CellStatus::kPending ? 1 : 0;
  CHECK(pending == 1);
  run_experiment(cfg, d);
  CHECK(slurp(d / "report.jsonl") == full);
  fs::remove_all(d);
}

TEST_CASE("stage failures are recorded per cell") {
  auto cfg = small_block_config();
  cfg.dataset.kind = "file";
  cfg.dataset.path = "/nonexistent/ratings.tsv";
  const auto d = scratch("fail");
  const auto r = run_experiment(cfg, d);
  REQUIRE(r.cells.size() == 4);
  for (const auto& c : r.cells) {
    CHECK(c.status == CellStatus::kFailed);
    CHECK(!c.reason.empty());
  }
  CHECK(read_report(d / "report.jsonl").cells.size() == 4);
  fs::remove_all(d);
}

TEST_CASE("artifacts from other settings are refused") {
  auto cfg = small_block_config();
  const auto d = scratch("mismatch");
  SeedRun(cfg, 1, d).train();
  cfg.num_targets = 3;
  SeedRun other(cfg, 1, d);
  CHECK_THROWS_AS(other.train(), PreconditionError);
  fs::remove_all(d);
}

TEST_CASE("shift check cells carry one delta per target") {
  auto cfg = small_block_config();
  cfg.seeds = {1};
  cfg.methods = {Method::kHcars};
  cfg.shift_check = true;
  cfg.attack.user_sample = 8;
  cfg.attack.shift_steps = 5;
  for (const char* mode : {"retrain", "paired"}) {
    cfg.shift_check_mode = mode;
    cfg.shift_check_epochs = 2;
    const auto d = scratch(std::string("shift_") + mode);
    const auto r = run_experiment(cfg, d);
    const auto* c = r.find("hcars", 10.0, 1);
    REQUIRE(c);
    REQUIRE(c->status == CellStatus::kOk);
    CHECK(c->shift_deltas.size() == 2);
    fs::remove_all(d);
  }
}

}  // namespace hcars::harness
