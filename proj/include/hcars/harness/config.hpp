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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcars/attack/attack.hpp"
#include "hcars/data/dataset.hpp"
#include "hcars/explainer/explainer.hpp"
#include "hcars/surrogate/surrogate.hpp"
#include "hcars/target/ncf.hpp"

namespace hcars::harness {

enum class Method { kHcars, kBandwagon, kRandom };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct DatasetSpec {
  std::string kind = "file";  // "file" or "block"
  std::filesystem::path path;
  data::Format format = data::Format::kMovieLensTsv;
  bool binarize = true;
  bool header = false;
  // Synthetic block world.
  std::size_t groups = 4;
  std::size_t users = 60;
  std::size_t items = 40;
  double density = 0.3;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  double train_fraction = 0.8;
  double cf_fraction = 0.6;
  std::size_t k = 10;
  std::vector<double> budgets = {0.5, 1.0, 3.0, 5.0};  // % of legitimate users
  std::vector<std::uint64_t> seeds = {1};
  std::vector<Method> methods = {Method::kHcars, Method::kBandwagon, Method::kRandom};
  std::size_t num_targets = 5;
  bool with_ablation = true;   // also train a surrogate without explanations
  bool shift_check = false;    // retrain the surrogate on poisoned data
  // "retrain": the attacked surrogate against a fresh one trained on the
  // poisoned data with the same settings. "paired": both arms continue
  // training from the attacked surrogate for shift_check_epochs, on clean
  // and on poisoned data.
  std::string shift_check_mode = "retrain";
  std::size_t shift_check_epochs = 10;
  std::size_t threads = 1;
  target::TargetTrainConfig target;
  explainer::ExplainerConfig explainer;
  explainer::HarvestConfig harvest;
  surrogate::SurrogateTrainConfig surrogate;
  attack::AttackConfig attack;

  void validate() const;
};

// Controlled users for a budget given in percent, rounded up.
std::size_t budget_users(double percent, std::size_t legitimate);

// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace hcars::harness
