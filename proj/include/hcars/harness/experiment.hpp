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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcars/attack/attack.hpp"
#include "hcars/explainer/explainer.hpp"
#include "hcars/harness/config.hpp"
#include "hcars/surrogate/surrogate.hpp"
#include "hcars/target/ncf.hpp"

namespace hcars::harness {

// Loads the configured dataset (file or synthetic block world).
data::Dataset load_dataset(const DatasetSpec& spec);

// One seed's pipeline. Every stage result is written under
// <out_dir>/seed_<seed>/ and read back from there when present, so
// interrupted runs resume and later stages can run on their own.
class SeedRun {
 public:
  SeedRun(const ExperimentConfig& cfg, std::uint64_t seed, std::filesystem::path out_dir);

  std::uint64_t seed() const { return seed_; }
  const std::filesystem::path& dir() const { return dir_; }

  const data::InteractionMatrix& train();
  const data::InteractionMatrix& test();
  const target::NcfModel& target();
  const std::vector<explainer::CounterfactualExplanation>& explanations();
  const surrogate::SurrogateModel& surrogate(bool with_cf);
  const std::vector<data::ItemId>& targets();
  // Profiles for the largest configured budget. Smaller budgets take a
  // prefix, which equals a separate run at that budget.
  const std::vector<attack::FakeUserProfile>& profiles(Method m);

  std::size_t legitimate_users();
  std::size_t max_budget();
  attack::AttackConfig attack_config(std::size_t budget);

  // Wall-clock seconds of the stages computed (not loaded) by this object.
  const std::map<std::string, double>& timings() const { return timings_; }

 private:
  void prepare();

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::filesystem::path dir_;
  std::optional<data::InteractionMatrix> train_, test_;
  std::optional<target::NcfModel> target_;
  std::optional<std::vector<explainer::CounterfactualExplanation>> cfs_;
  std::optional<surrogate::SurrogateModel> sur_cf_, sur_nocf_;
  std::optional<std::vector<data::ItemId>> targets_;
  std::map<Method, std::vector<attack::FakeUserProfile>> profiles_;
  std::map<std::string, double> timings_;
};

// One report line. method "none" with budget 0 is the per-seed clean
// baseline; it carries the surrogate fidelity figures.
enum class CellStatus { kPending, kOk, kFailed };

struct Cell {
  std::string method;
  double budget_pct = 0.0;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  CellStatus status = CellStatus::kPending;
  std::string reason;  // failure message
  std::vector<data::ItemId> targets;
  double hr_pre = 0.0;
  double hr_post = 0.0;
  double hr_post_fresh = 0.0;  // over users with no clean hit
  std::vector<double> hr_pre_per_target;
  std::vector<double> hr_post_per_target;
  std::optional<double> p_at_k_cf;
  std::optional<double> p_at_k_nocf;
  std::vector<double> shift_deltas;  // per target; empty unless measured

  std::string key() const;
};

nlohmann::json cell_to_json(const Cell& c);
Cell cell_from_json(const nlohmann::json& j);

struct Report {
  std::vector<Cell> cells;
  const Cell* find(const std::string& method, double budget_pct, std::uint64_t seed) const;
};

Report read_report(const std::filesystem::path& path);
// Pending cells are left out.
void write_report(const std::filesystem::path& path, const Report& report);
// `method,budget,seed,hr_pre,hr_post,p_at_10` with budget in percent.
void write_report_csv(const std::filesystem::path& path, const Report& report);

// Cells in report order for the configuration.
std::vector<Cell> planned_cells(const ExperimentConfig& cfg);

// Runs the pipeline for every seed and fills <out_dir>/report.jsonl one
// completed cell at a time. Cells already present with status ok are kept.
// Per-cell wall-clock times go to <out_dir>/timings.jsonl so that the
// report itself is reproducible byte for byte.
Report run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Fills the pending cells of run.seed() in `report` (the clean baseline and
// every method x budget), rewriting <out_dir>/report.jsonl after each one.
// A failing stage marks the affected cells failed and the rest continue.
void evaluate_seed(const ExperimentConfig& cfg, SeedRun& run, const std::filesystem::path& out_dir,
                   Report& report);

// Report skeleton for `cfg` with the ok cells of an existing report file
// carried over. Existing cells outside the plan are kept after it.
Report resume_report(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace hcars::harness
