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

#include "hcars/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "hcars/substrate/error.hpp"

namespace hcars::harness {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "hcars") return Method::kHcars;
  if (name == "bandwagon") return Method::kBandwagon;
  if (name == "random") return Method::kRandom;
  throw ParseError("unknown attack method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kHcars: return "hcars";
    case Method::kBandwagon: return "bandwagon";
    case Method::kRandom: return "random";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  auto fraction = [](double f, const char* what) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw PreconditionError(std::string("config: ") + what + " must lie in (0, 1]");
    }
  };
  fraction(train_fraction, "train_fraction");
  fraction(cf_fraction, "cf_fraction");
  if (k < 1) throw PreconditionError("config: k must be at least 1");
  for (double b : budgets) {
    if (!(b > 0.0)) throw PreconditionError("config: budgets must be positive");
  }
  if (seeds.empty()) throw PreconditionError("config: no seeds");
  if (num_targets < 1) throw PreconditionError("config: num_targets must be at least 1");
  if (shift_check_mode != "retrain" && shift_check_mode != "paired") {
    throw PreconditionError("config: shift_check_mode must be retrain or paired");
  }
  if (shift_check && shift_check_epochs < 1) {
    throw PreconditionError("config: shift_check_epochs must be at least 1");
  }
  if (threads < 1) throw PreconditionError("config: threads must be at least 1");
  if (dataset.kind != "file" && dataset.kind != "block") {
    throw PreconditionError("config: dataset.kind must be file or block");
  }
  if (dataset.kind == "file" && dataset.path.empty()) {
    throw PreconditionError("config: dataset.path is required");
  }
  target.validate();
  surrogate.validate();
  if (attack.n_f < num_targets) throw PreconditionError("config: attack.n_f below num_targets");
}

std::size_t budget_users(double percent, std::size_t legitimate) {
  // Rounded to 1e-9 first so that 5% of 100 is 5, not 6.
  const double exact = percent / 100.0 * static_cast<double>(legitimate);
  const double cleaned = std::round(exact * 1e9) / 1e9;
  return static_cast<std::size_t>(std::ceil(cleaned));
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ParseError("config: " + where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ParseError("config: unknown key " + where + "." + key);
  }
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: bad value for ") + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, "", {"dataset", "train_fraction", "cf_fraction", "k", "budgets", "seeds",
                     "methods", "num_targets", "with_ablation", "shift_check", "shift_check_mode",
                     "shift_check_epochs", "threads",
                     "target", "explainer", "surrogate", "attack"});
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, "dataset", {"kind", "path", "format", "binarize", "header", "groups", "users",
                              "items", "density", "seed"});
    get(d, "kind", c.dataset.kind);
    std::string path, format;
    get(d, "path", path);
    c.dataset.path = path;
    get(d, "format", format);
    if (!format.empty()) c.dataset.format = data::parse_format(format);
    get(d, "binarize", c.dataset.binarize);
    get(d, "header", c.dataset.header);
    get(d, "groups", c.dataset.groups);
    get(d, "users", c.dataset.users);
    get(d, "items", c.dataset.items);
    get(d, "density", c.dataset.density);
    get(d, "seed", c.dataset.seed);
  }
  get(j, "train_fraction", c.train_fraction);
  get(j, "cf_fraction", c.cf_fraction);
  get(j, "k", c.k);
  get(j, "budgets", c.budgets);
  get(j, "seeds", c.seeds);
  if (j.contains("methods")) {
    std::vector<std::string> names;
    get(j, "methods", names);
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(parse_method(n));
  }
  get(j, "num_targets", c.num_targets);
  get(j, "with_ablation", c.with_ablation);
  get(j, "shift_check", c.shift_check);
  get(j, "shift_check_mode", c.shift_check_mode);
  get(j, "shift_check_epochs", c.shift_check_epochs);
  get(j, "threads", c.threads);
  if (j.contains("target")) {
    const auto& t = j["target"];
    check_keys(t, "target", {"d", "epochs", "lr", "negatives", "batch_size", "init_std"});
    get(t, "d", c.target.d);
    get(t, "epochs", c.target.epochs);
    get(t, "lr", c.target.lr);
    get(t, "negatives", c.target.negatives);
    get(t, "batch_size", c.target.batch_size);
    get(t, "init_std", c.target.init_std);
  }
  if (j.contains("explainer")) {
    const auto& e = j["explainer"];
    check_keys(e, "explainer", {"ft_steps", "ft_lr", "ft_negatives", "max_history", "max_queries"});
    get(e, "ft_steps", c.explainer.ft_steps);
    get(e, "ft_lr", c.explainer.ft_lr);
    get(e, "ft_negatives", c.explainer.ft_negatives);
    get(e, "max_history", c.harvest.max_history);
    get(e, "max_queries", c.harvest.max_queries);
  }
  if (j.contains("surrogate")) {
    const auto& s = j["surrogate"];
    check_keys(s, "surrogate", {"d", "d_h", "lambda1", "lambda2", "lr", "epochs", "batch_size",
                                "chunk", "max_antecedents", "reg_vectors", "alpha", "init_std",
                                "cf_mode"});
    get(s, "d", c.surrogate.d);
    get(s, "d_h", c.surrogate.d_h);
    get(s, "lambda1", c.surrogate.lambda1);
    get(s, "lambda2", c.surrogate.lambda2);
    get(s, "lr", c.surrogate.lr);
    get(s, "epochs", c.surrogate.epochs);
    get(s, "batch_size", c.surrogate.batch_size);
    get(s, "chunk", c.surrogate.chunk);
    get(s, "max_antecedents", c.surrogate.max_antecedents);
    get(s, "reg_vectors", c.surrogate.reg_vectors);
    get(s, "alpha", c.surrogate.alpha);
    get(s, "init_std", c.surrogate.init_std);
    std::string mode;
    get(s, "cf_mode", mode);
    if (!mode.empty()) c.surrogate.cf_mode = surrogate::parse_cf_mode(mode);
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    check_keys(a, "attack", {"n_f", "rho", "shift_steps", "shift_lr", "user_sample", "pool_size",
                             "rounds", "embed_steps", "embed_lr", "strict_greedy"});
    get(a, "n_f", c.attack.n_f);
    get(a, "rho", c.attack.rho);
    get(a, "shift_steps", c.attack.shift_steps);
    get(a, "shift_lr", c.attack.shift_lr);
    get(a, "user_sample", c.attack.user_sample);
    get(a, "pool_size", c.attack.pool_size);
    get(a, "rounds", c.attack.rounds);
    get(a, "embed_steps", c.attack.embed_steps);
    get(a, "embed_lr", c.attack.embed_lr);
    get(a, "strict_greedy", c.attack.strict_greedy);
  }
  c.explainer.k = c.k;
  c.harvest.user_fraction = c.cf_fraction;
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  json dataset = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "file") {
    dataset["path"] = c.dataset.path.string();
    dataset["format"] = data::format_name(c.dataset.format);
    dataset["binarize"] = c.dataset.binarize;
    dataset["header"] = c.dataset.header;
  } else {
    dataset["groups"] = c.dataset.groups;
    dataset["users"] = c.dataset.users;
    dataset["items"] = c.dataset.items;
    dataset["density"] = c.dataset.density;
    dataset["seed"] = c.dataset.seed;
  }
  return {
      {"dataset", dataset},
      {"train_fraction", c.train_fraction},
      {"cf_fraction", c.cf_fraction},
      {"k", c.k},
      {"budgets", c.budgets},
      {"seeds", c.seeds},
      {"methods", methods},
      {"num_targets", c.num_targets},
      {"with_ablation", c.with_ablation},
      {"shift_check", c.shift_check},
      {"shift_check_mode", c.shift_check_mode},
      {"shift_check_epochs", c.shift_check_epochs},
      {"threads", c.threads},
      {"target",
       {{"d", c.target.d},
        {"epochs", c.target.epochs},
        {"lr", c.target.lr},
        {"negatives", c.target.negatives},
        {"batch_size", c.target.batch_size},
        {"init_std", c.target.init_std}}},
      {"explainer",
       {{"ft_steps", c.explainer.ft_steps},
        {"ft_lr", c.explainer.ft_lr},
        {"ft_negatives", c.explainer.ft_negatives},
        {"max_history", c.harvest.max_history},
        {"max_queries", c.harvest.max_queries}}},
      {"surrogate",
       {{"d", c.surrogate.d},
        {"d_h", c.surrogate.d_h},
        {"lambda1", c.surrogate.lambda1},
        {"lambda2", c.surrogate.lambda2},
        {"lr", c.surrogate.lr},
        {"epochs", c.surrogate.epochs},
        {"batch_size", c.surrogate.batch_size},
        {"chunk", c.surrogate.chunk},
        {"max_antecedents", c.surrogate.max_antecedents},
        {"reg_vectors", c.surrogate.reg_vectors},
        {"alpha", c.surrogate.alpha},
        {"init_std", c.surrogate.init_std},
        {"cf_mode", surrogate::cf_mode_name(c.surrogate.cf_mode)}}},
      {"attack",
       {{"n_f", c.attack.n_f},
        {"rho", c.attack.rho},
        {"shift_steps", c.attack.shift_steps},
        {"shift_lr", c.attack.shift_lr},
        {"user_sample", c.attack.user_sample},
        {"pool_size", c.attack.pool_size},
        {"rounds", c.attack.rounds},
        {"embed_steps", c.attack.embed_steps},
        {"embed_lr", c.attack.embed_lr},
        {"strict_greedy", c.attack.strict_greedy}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  auto cfg = config_from_json(j);
  // Relative dataset paths are taken from the config's directory.
  if (cfg.dataset.kind == "file" && cfg.dataset.path.is_relative()) {
    cfg.dataset.path = path.parent_path() / cfg.dataset.path;
  }
  return cfg;
}

}  // namespace hcars::harness
