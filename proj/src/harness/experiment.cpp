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

#include "hcars/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>

#include <spdlog/spdlog.h>

#include "hcars/harness/metrics.hpp"
#include "hcars/substrate/error.hpp"
#include "hcars/substrate/parallel.hpp"

namespace hcars::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Settings that determine the artifacts of one seed directory.
json pipeline_fingerprint(const ExperimentConfig& cfg, std::size_t max_budget_pct_users) {
  auto j = config_to_json(cfg);
  for (const char* key : {"seeds", "methods", "budgets", "threads", "with_ablation", "shift_check",
                          "shift_check_mode", "shift_check_epochs"}) {
    j.erase(key);
  }
  j["max_budget"] = max_budget_pct_users;
  return j;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

data::Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == "block") {
    return data::make_block_dataset(spec.groups, spec.users, spec.items, spec.density, spec.seed);
  }
  data::LoadOptions opts;
  opts.header = spec.header;
  return data::build_dataset(data::load_interactions(spec.path, spec.format, opts), spec.binarize);
}

SeedRun::SeedRun(const ExperimentConfig& cfg, std::uint64_t seed, fs::path out_dir)
    : cfg_(cfg), seed_(seed), dir_(std::move(out_dir) / ("seed_" + std::to_string(seed))) {
  cfg_.validate();
  cfg_.target.seed = seed;
  cfg_.explainer.seed = seed;
  cfg_.explainer.k = cfg.k;
  cfg_.harvest.seed = seed;
  cfg_.harvest.user_fraction = cfg.cf_fraction;
  cfg_.surrogate.seed = seed;
  fs::create_directories(dir_);
}

void SeedRun::prepare() {
  if (train_) return;
  const auto train_path = dir_ / "train.tsv";
  const auto test_path = dir_ / "test.tsv";
  if (fs::exists(train_path) && fs::exists(test_path)) {
    train_ = data::load_matrix(train_path).matrix;
    test_ = data::load_matrix(test_path).matrix;
  } else {
    const auto t0 = Clock::now();
    const auto ds = load_dataset(cfg_.dataset);
    // A fraction of 1 keeps every interaction and leaves the test set empty.
    data::Split sp;
    if (cfg_.train_fraction >= 1.0) {
      sp.train = ds.matrix;
      sp.test = data::InteractionMatrix(ds.matrix.users(), ds.matrix.items());
    } else {
      sp = data::split(ds.matrix, cfg_.train_fraction, seed_);
    }
    data::save_matrix(sp.train, train_path, ds.users, ds.items);
    data::save_matrix(sp.test, test_path, ds.users, ds.items);
    train_ = std::move(sp.train);
    test_ = std::move(sp.test);
    timings_["prepare"] = seconds_since(t0);
    spdlog::info("seed {}: {} users, {} items, {} train / {} test interactions", seed_,
                 train_->users(), train_->items(), train_->nnz(), test_->nnz());
  }
  // Artifacts in an existing directory must come from the same settings.
  const auto fp_path = dir_ / "pipeline.json";
  const auto fp = pipeline_fingerprint(cfg_, max_budget());
  if (fs::exists(fp_path)) {
    if (read_json(fp_path) != fp) {
      throw PreconditionError(dir_.string() + " holds artifacts from different settings");
    }
  } else {
    write_json(fp_path, fp);
  }
}

const data::InteractionMatrix& SeedRun::train() {
  prepare();
  return *train_;
}

const data::InteractionMatrix& SeedRun::test() {
  prepare();
  return *test_;
}

std::size_t SeedRun::legitimate_users() {
  if (!train_) prepare();
  return train_->users();
}

std::size_t SeedRun::max_budget() {
  double pct = 0.0;
  for (double b : cfg_.budgets) pct = std::max(pct, b);
  return budget_users(pct, train_->users());
}

attack::AttackConfig SeedRun::attack_config(std::size_t budget) {
  auto a = cfg_.attack;
  a.targets = targets();
  a.budget = budget;
  a.seed = seed_;
  return a;
}

const target::NcfModel& SeedRun::target() {
  if (target_) return *target_;
  const auto path = dir_ / "target.ckpt";
  if (fs::exists(path)) {
    target_ = target::NcfModel::load(path);
  } else {
    const auto& tr = train();
    const auto t0 = Clock::now();
    target_ = target::train_target(tr, cfg_.target);
    target_->save(path);
    timings_["train_target"] = seconds_since(t0);
    spdlog::info("seed {}: target trained, final loss {:.4f}", seed_,
                 target_->epoch_losses().empty() ? 0.0 : target_->epoch_losses().back());
  }
  return *target_;
}

const std::vector<explainer::CounterfactualExplanation>& SeedRun::explanations() {
  if (cfs_) return *cfs_;
  const auto path = dir_ / "cfs.jsonl";
  if (fs::exists(path)) {
    cfs_ = explainer::read_archive(path);
  } else {
    const auto& tgt = target();
    const auto t0 = Clock::now();
    explainer::Explainer ex(tgt, cfg_.explainer);
    explainer::HarvestStats stats;
    cfs_ = explainer::harvest(ex, train(), cfg_.harvest, &stats);
    explainer::write_archive(path, *cfs_);
    write_json(dir_ / "harvest.json", {{"eligible", stats.eligible},
                                       {"queried", stats.queried},
                                       {"infeasible", stats.infeasible},
                                       {"explanations", cfs_->size()}});
    timings_["explain"] = seconds_since(t0);
    spdlog::info("seed {}: {} explanations from {} queries ({} infeasible)", seed_, cfs_->size(),
                 stats.queried, stats.infeasible);
  }
  return *cfs_;
}

const surrogate::SurrogateModel& SeedRun::surrogate(bool with_cf) {
  auto& slot = with_cf ? sur_cf_ : sur_nocf_;
  if (slot) return *slot;
  const std::string name = with_cf ? "surrogate_cf" : "surrogate_nocf";
  const auto path = dir_ / (name + ".ckpt");
  if (fs::exists(path)) {
    slot = surrogate::SurrogateModel::load(path);
  } else {
    const auto& tr = train();
    std::span<const explainer::CounterfactualExplanation> cfs;
    if (with_cf) cfs = explanations();
    const auto t0 = Clock::now();
    surrogate::TrainStats stats;
    slot = surrogate::train_surrogate(tr, cfs, cfg_.surrogate, &stats);
    slot->save(path);
    surrogate::write_loss_curve(dir_ / (name + "_loss.csv"), *slot);
    timings_["train_" + name] = seconds_since(t0);
    spdlog::info("seed {}: {} trained ({} explanations used, {} skipped)", seed_, name,
                 stats.cf_used, stats.cf_skipped);
  }
  return *slot;
}

const std::vector<data::ItemId>& SeedRun::targets() {
  if (targets_) return *targets_;
  const auto path = dir_ / "targets.json";
  if (fs::exists(path)) {
    targets_ = read_json(path).at("targets").get<std::vector<data::ItemId>>();
  } else {
    targets_ = attack::select_targets(train(), cfg_.num_targets, seed_);
    write_json(path, {{"targets", *targets_}});
  }
  return *targets_;
}

const std::vector<attack::FakeUserProfile>& SeedRun::profiles(Method m) {
  if (auto it = profiles_.find(m); it != profiles_.end()) return it->second;
  const auto path = dir_ / ("profiles_" + method_name(m) + ".jsonl");
  std::vector<attack::FakeUserProfile> out;
  if (fs::exists(path)) {
    out = attack::read_profiles(path);
  } else {
    const auto& tr = train();
    const auto acfg = attack_config(max_budget());
    const auto t0 = Clock::now();
    switch (m) {
      case Method::kHcars:
        out = attack::run_hcars(surrogate(cfg_.surrogate.lambda1 > 0.0), tr, acfg);
        break;
      case Method::kBandwagon:
        out = attack::bandwagon(tr, data::popularity(tr), acfg);
        break;
      case Method::kRandom:
        out = attack::random_attack(tr, acfg);
        break;
    }
    attack::write_profiles(path, out);
    timings_["attack_" + method_name(m)] = seconds_since(t0);
    spdlog::info("seed {}: {} crafted {} profiles", seed_, method_name(m), out.size());
  }
  return profiles_[m] = std::move(out);
}

std::string Cell::key() const {
  return method + "|" + json(budget_pct).dump() + "|" + std::to_string(seed);
}

json cell_to_json(const Cell& c) {
  json j = {{"method", c.method}, {"budget_pct", c.budget_pct}, {"budget", c.budget},
            {"seed", c.seed}};
  if (c.status == CellStatus::kFailed) {
    j["status"] = "failed";
    j["reason"] = c.reason;
    return j;
  }
  j["status"] = c.status == CellStatus::kOk ? "ok" : "pending";
  j["targets"] = c.targets;
  j["hr_pre"] = c.hr_pre;
  j["hr_post"] = c.hr_post;
  j["hr_post_fresh"] = c.hr_post_fresh;
  j["hr_pre_per_target"] = c.hr_pre_per_target;
  j["hr_post_per_target"] = c.hr_post_per_target;
  j["p_at_k_cf"] = c.p_at_k_cf ? json(*c.p_at_k_cf) : json(nullptr);
  j["p_at_k_nocf"] = c.p_at_k_nocf ? json(*c.p_at_k_nocf) : json(nullptr);
  j["shift_deltas"] = c.shift_deltas;
  return j;
}

Cell cell_from_json(const json& j) {
  Cell c;
  try {
    c.method = j.at("method").get<std::string>();
    c.budget_pct = j.at("budget_pct").get<double>();
    c.budget = j.at("budget").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto status = j.at("status").get<std::string>();
    if (status == "failed") {
      c.status = CellStatus::kFailed;
      c.reason = j.value("reason", "");
      return c;
    }
    c.status = status == "ok" ? CellStatus::kOk : CellStatus::kPending;
    c.targets = j.at("targets").get<std::vector<data::ItemId>>();
    c.hr_pre = j.at("hr_pre").get<double>();
    c.hr_post = j.at("hr_post").get<double>();
    c.hr_post_fresh = j.at("hr_post_fresh").get<double>();
    c.hr_pre_per_target = j.at("hr_pre_per_target").get<std::vector<double>>();
    c.hr_post_per_target = j.at("hr_post_per_target").get<std::vector<double>>();
    if (!j.at("p_at_k_cf").is_null()) c.p_at_k_cf = j["p_at_k_cf"].get<double>();
    if (!j.at("p_at_k_nocf").is_null()) c.p_at_k_nocf = j["p_at_k_nocf"].get<double>();
    c.shift_deltas = j.at("shift_deltas").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("report cell: ") + e.what());
  }
  return c;
}

const Cell* Report::find(const std::string& method, double budget_pct, std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.method == method && c.budget_pct == budget_pct && c.seed == seed) return &c;
  }
  return nullptr;
}

Report read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Report r;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      r.cells.push_back(cell_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return r;
}

void write_report(const fs::path& path, const Report& report) {
  // Written to a side file and renamed so an interruption never leaves a
  // truncated report.
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    for (const auto& c : report.cells) {
      if (c.status != CellStatus::kPending) out << cell_to_json(c).dump() << '\n';
    }
  }
  fs::rename(tmp, path);
}

void write_report_csv(const fs::path& path, const Report& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "method,budget,seed,hr_pre,hr_post,p_at_10\n";
  for (const auto& c : report.cells) {
    if (c.status == CellStatus::kPending) continue;
    out << c.method << ',' << json(c.budget_pct).dump() << ',' << c.seed << ',';
    if (c.status == CellStatus::kOk) {
      out << json(c.hr_pre).dump() << ',' << json(c.hr_post).dump() << ',';
      if (c.p_at_k_cf) out << json(*c.p_at_k_cf).dump();
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

std::vector<Cell> planned_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  for (auto seed : cfg.seeds) {
    Cell base;
    base.method = "none";
    base.seed = seed;
    out.push_back(base);
    for (auto m : cfg.methods) {
      for (double b : cfg.budgets) {
        Cell c;
        c.method = method_name(m);
        c.budget_pct = b;
        c.seed = seed;
        out.push_back(c);
      }
    }
  }
  return out;
}

Report resume_report(const ExperimentConfig& cfg, const fs::path& out_dir) {
  Report report;
  report.cells = planned_cells(cfg);
  const auto path = out_dir / "report.jsonl";
  if (!fs::exists(path)) return report;
  const auto old = read_report(path);
  for (auto& c : report.cells) {
    const auto* prev = old.find(c.method, c.budget_pct, c.seed);
    if (prev && prev->status == CellStatus::kOk) c = *prev;
  }
  // Cells outside this plan (other seeds or methods) stay in the file.
  for (const auto& c : old.cells) {
    if (!report.find(c.method, c.budget_pct, c.seed)) report.cells.push_back(c);
  }
  return report;
}

void evaluate_seed(const ExperimentConfig& cfg, SeedRun& run, const fs::path& out_dir,
                   Report& report) {
  const auto seed = run.seed();
  std::vector<Cell*> pending;
  for (auto& c : report.cells) {
    if (c.seed == seed && c.status != CellStatus::kOk) pending.push_back(&c);
  }
  if (pending.empty()) return;

  std::mutex mu;
  auto persist = [&] {
    std::lock_guard lock(mu);
    write_report(out_dir / "report.jsonl", report);
  };
  auto log_time = [&](const std::string& what, double secs) {
    std::lock_guard lock(mu);
    std::ofstream out(out_dir / "timings.jsonl", std::ios::app);
    out << json{{"what", what}, {"seconds", secs}}.dump() << '\n';
  };
  auto fail_all = [&](const std::string& why) {
    spdlog::error("seed {}: {}", seed, why);
    for (auto* c : pending) {
      c->status = CellStatus::kFailed;
      c->reason = why;
    }
    persist();
  };

  // Shared stages. Any failure here takes down every cell of the seed.
  HitStats clean;
  std::vector<UserId> users;
  std::optional<double> p_cf, p_nocf;
  try {
    const auto& train = run.train();
    users = active_users(train);
    const auto& tgt = run.target();
    const auto& targets = run.targets();
    clean = hit_stats(ranker_of(tgt), users, targets, cfg.k, train);
    p_cf = precision_at_k(run.surrogate(true), tgt, users, cfg.k, train);
    if (cfg.with_ablation) p_nocf = precision_at_k(run.surrogate(false), tgt, users, cfg.k, train);
    if (cfg.shift_check) {
      run.surrogate(cfg.surrogate.lambda1 > 0.0);
      run.explanations();
    }
    for (auto* c : pending) {
      if (c->method != "none") run.profiles(parse_method(c->method));
    }
  } catch (const std::exception& e) {
    fail_all(e.what());
    return;
  }
  const auto& train = run.train();
  const auto& targets = run.targets();

  parallel_for(pending.size(), cfg.threads, [&](std::size_t i) {
    Cell& c = *pending[i];
    Cell out = c;
    out.targets = targets;
    out.hr_pre = clean.hr;
    out.hr_pre_per_target = clean.per_target;
    out.p_at_k_cf = p_cf;
    const auto t0 = Clock::now();
    try {
      if (c.method == "none") {
        out.hr_post = clean.hr;
        out.hr_post_fresh = 0.0;
        out.hr_post_per_target = clean.per_target;
        out.p_at_k_nocf = p_nocf;
      } else {
        const auto m = parse_method(c.method);
        out.budget = budget_users(c.budget_pct, train.users());
        const auto& all = run.profiles(m);
        if (out.budget > all.size()) throw PreconditionError("budget exceeds crafted profiles");
        const std::span<const attack::FakeUserProfile> fakes(all.data(), out.budget);
        auto tcfg = cfg.target;
        tcfg.seed = seed;
        const auto poisoned = target::inject_and_retrain(train, fakes, tcfg);
        const auto post = hit_stats(ranker_of(poisoned), users, targets, cfg.k, train);
        out.hr_post = post.hr;
        out.hr_post_per_target = post.per_target;
        out.hr_post_fresh = fresh_hit_ratio(clean.hit, post.hit);
        if (cfg.shift_check && m == Method::kHcars) {
          auto scfg = cfg.surrogate;
          scfg.seed = seed;
          const auto& attacked = run.surrogate(scfg.lambda1 > 0.0);
          std::span<const explainer::CounterfactualExplanation> cfs;
          if (scfg.lambda1 > 0.0) cfs = run.explanations();
          const auto poisoned_obs = target::inject(train, fakes);
          surrogate::SurrogateModel before, after;
          if (cfg.shift_check_mode == "paired") {
            // Both arms continue from the attacked surrogate for the same
            // number of epochs, one on clean and one on poisoned data.
            scfg.epochs = cfg.shift_check_epochs;
            before = surrogate::fine_tune_surrogate(attacked, train, cfs, scfg);
            after = surrogate::fine_tune_surrogate(attacked, poisoned_obs, cfs, scfg);
          } else {
            before = attacked;
            after = surrogate::train_surrogate(poisoned_obs, cfs, scfg);
          }
          for (auto t : targets) {
            out.shift_deltas.push_back(
                attack::shift_condition_check(before, after, t, users, train).delta);
          }
        }
      }
      out.status = CellStatus::kOk;
      spdlog::info("cell {}: hr_pre {:.4f} hr_post {:.4f}", out.key(), out.hr_pre, out.hr_post);
    } catch (const std::exception& e) {
      out = c;
      out.status = CellStatus::kFailed;
      out.reason = e.what();
      spdlog::error("cell {} failed: {}", c.key(), e.what());
    }
    {
      std::lock_guard lock(mu);
      c = std::move(out);
    }
    log_time(c.key(), seconds_since(t0));
    persist();
  });

  for (const auto& [stage, secs] : run.timings()) {
    log_time("seed " + std::to_string(seed) + " " + stage, secs);
  }
}

Report run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", config_to_json(cfg));
  auto report = resume_report(cfg, out_dir);
  write_report(out_dir / "report.jsonl", report);
  for (auto seed : cfg.seeds) {
    SeedRun run(cfg, seed, out_dir);
    evaluate_seed(cfg, run, out_dir, report);
  }
  write_report_csv(out_dir / "report.csv", report);
  return report;
}

}  // namespace hcars::harness
