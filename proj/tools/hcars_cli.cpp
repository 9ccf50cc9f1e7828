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
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "hcars/harness/config.hpp"
#include "hcars/harness/experiment.hpp"
#include "hcars/harness/metrics.hpp"

namespace fs = std::filesystem;
using namespace hcars;
using namespace hcars::harness;

namespace {

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "runs";
  std::size_t threads = 0;
  std::vector<std::string> methods;
  std::string log_level = "info";
};

ExperimentConfig resolve(const Options& o) {
  auto cfg = load_config(o.config);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.threads > 0) cfg.threads = o.threads;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) cfg.methods.push_back(parse_method(m));
  }
  cfg.validate();
  return cfg;
}

template <class Fn>
void for_each_seed(const ExperimentConfig& cfg, const Options& o, Fn&& fn) {
  for (auto seed : cfg.seeds) {
    SeedRun run(cfg, seed, o.out_dir);
    fn(run);
  }
}

void print_summary(const Report& report) {
  std::map<std::pair<std::string, double>, std::vector<double>> post;
  for (const auto& c : report.cells) {
    if (c.status == CellStatus::kOk) post[{c.method, c.budget_pct}].push_back(c.hr_post);
  }
  std::printf("%-10s %8s %6s %10s\n", "method", "budget%", "seeds", "median_hr");
  for (auto& [key, v] : post) {
    std::sort(v.begin(), v.end());
    const double med = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    std::printf("%-10s %8g %6zu %10.4f\n", key.first.c_str(), key.second, v.size(), med);
  }
  std::size_t failed = 0;
  for (const auto& c : report.cells) {
    if (c.status == CellStatus::kFailed) {
      ++failed;
      std::printf("failed %s: %s\n", c.key().c_str(), c.reason.c_str());
    }
  }
  if (failed) std::printf("%zu failed cells\n", failed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual-guided poisoning attack experiments"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", o.seeds, "Run only these seeds");
  app.add_option("--out-dir", o.out_dir, "Artifact and report directory")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads for independent cells");
  app.add_option("--method", o.methods, "Attack methods")
      ->check(CLI::IsMember({"hcars", "bandwagon", "random"}));
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str();

  auto* prepare = app.add_subcommand("prepare-data", "Load, binarise and split the dataset");
  auto* train_target = app.add_subcommand("train-target", "Train the victim recommender");
  auto* explain = app.add_subcommand("explain", "Harvest counterfactual explanations");
  auto* train_surrogate = app.add_subcommand("train-surrogate", "Train the logic surrogates");
  auto* attack = app.add_subcommand("attack", "Select targets and craft controlled users");
  auto* evaluate = app.add_subcommand("evaluate", "Retrain on poisoned data and measure HR@k");
  auto* report = app.add_subcommand("report", "Write report.csv and print a summary");
  auto* run_all = app.add_subcommand("run-all", "Run every stage and write the report");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    const auto cfg = resolve(o);
    fs::create_directories(o.out_dir);
    if (prepare->parsed()) {
      for_each_seed(cfg, o, [](SeedRun& r) {
        const auto& tr = r.train();
        std::printf("seed %llu: %zu users, %zu items, %zu train, %zu test\n",
                    static_cast<unsigned long long>(r.seed()), tr.users(), tr.items(), tr.nnz(),
                    r.test().nnz());
      });
    } else if (train_target->parsed()) {
      for_each_seed(cfg, o, [](SeedRun& r) { r.target(); });
    } else if (explain->parsed()) {
      for_each_seed(cfg, o, [](SeedRun& r) {
        std::printf("seed %llu: %zu explanations\n", static_cast<unsigned long long>(r.seed()),
                    r.explanations().size());
      });
    } else if (train_surrogate->parsed()) {
      for_each_seed(cfg, o, [&](SeedRun& r) {
        const auto users = active_users(r.train());
        const double p_cf = precision_at_k(r.surrogate(true), r.target(), users, cfg.k, r.train());
        std::printf("seed %llu: P@%zu with explanations %.4f", static_cast<unsigned long long>(r.seed()),
                    cfg.k, p_cf);
        if (cfg.with_ablation) {
          std::printf(", without %.4f",
                      precision_at_k(r.surrogate(false), r.target(), users, cfg.k, r.train()));
        }
        std::printf("\n");
      });
    } else if (attack->parsed()) {
      for_each_seed(cfg, o, [&](SeedRun& r) {
        for (auto m : cfg.methods) r.profiles(m);
      });
    } else if (evaluate->parsed()) {
      auto rep = resume_report(cfg, o.out_dir);
      for_each_seed(cfg, o, [&](SeedRun& r) { evaluate_seed(cfg, r, o.out_dir, rep); });
      write_report_csv(fs::path(o.out_dir) / "report.csv", rep);
      print_summary(rep);
    } else if (report->parsed()) {
      const auto rep = read_report(fs::path(o.out_dir) / "report.jsonl");
      write_report_csv(fs::path(o.out_dir) / "report.csv", rep);
      print_summary(rep);
    } else if (run_all->parsed()) {
      print_summary(run_experiment(cfg, o.out_dir));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
