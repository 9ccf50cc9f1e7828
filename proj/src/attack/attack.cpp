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

#include "hcars/attack/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/ops.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars::attack {

using surrogate::SurrogateScorer;
using Vec = std::vector<double>;

void AttackConfig::validate() const {
  if (targets.empty()) throw PreconditionError("attack: at least one target item is required");
  std::vector<ItemId> t(targets);
  std::sort(t.begin(), t.end());
  if (std::adjacent_find(t.begin(), t.end()) != t.end()) {
    throw PreconditionError("attack: target items must be distinct");
  }
  if (n_f < targets.size()) throw PreconditionError("attack: n_f must be at least the number of targets");
  if (rounds == 0) throw PreconditionError("attack: rounds must be positive");
  if (user_sample == 0) throw PreconditionError("attack: user_sample must be positive");
}

namespace {

void check_items(std::span<const ItemId> items, std::size_t n) {
  for (ItemId i : items) {
    if (i >= n) throw ShapeError("attack: item id " + std::to_string(i) + " out of range");
  }
}

void project(Vec& x, double radius) {
  if (radius <= 0.0) return;
  const double n = l2_norm(x);
  if (n > radius) {
    for (double& v : x) v *= radius / n;
  }
}

// The objectives below only read the store; a frozen tape never writes
// gradients into it.
ParamStore& store_of(const SurrogateModel& model) {
  return const_cast<ParamStore&>(model.params());
}

}  // namespace

AscentResult projected_ascent(const Objective& f, std::vector<double> x0, double step,
                              std::size_t steps, double radius, std::size_t max_halvings) {
  AscentResult r;
  r.x = std::move(x0);
  project(r.x, radius);
  Vec g, gc, cand(r.x.size());
  r.value = f(r.x, &g);
  r.trace.push_back(r.value);
  for (std::size_t s = 0; s < steps; ++s) {
    const double norm = l2_norm(g);
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    bool accepted = false;
    for (std::size_t h = 0; h <= max_halvings; ++h) {
      for (std::size_t j = 0; j < cand.size(); ++j) cand[j] = r.x[j] + step * g[j] / norm;
      project(cand, radius);
      const double v = f(cand, &gc);
      if (v >= r.value) {
        r.x = cand;
        r.value = v;
        g.swap(gc);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    r.trace.push_back(r.value);
  }
  return r;
}

double default_radius(const SurrogateModel& model) {
  std::vector<double> norms(model.items());
  for (ItemId i = 0; i < model.items(); ++i) norms[i] = l2_norm(model.item_embedding(i));
  if (norms.empty()) throw PreconditionError("default_radius: model has no items");
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  const double median = n % 2 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
  return 0.5 * median;
}

std::vector<ItemId> select_targets(const InteractionMatrix& observed, std::size_t count,
                                   std::uint64_t seed) {
  const auto pop = data::popularity(observed);
  auto top = pop.top_fraction(0.1);
  std::sort(top.begin(), top.end());
  std::vector<ItemId> eligible;
  for (ItemId i = 0; i < observed.items(); ++i) {
    if (pop.counts[i] > 0 && !std::binary_search(top.begin(), top.end(), i)) eligible.push_back(i);
  }
  if (eligible.size() < count) throw PreconditionError("select_targets: not enough eligible items");
  Rng rng = Rng(seed).split("targets");
  std::vector<ItemId> out;
  for (std::size_t j : rng.sample_without_replacement(eligible.size(), count)) out.push_back(eligible[j]);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct UserClause {
  Vec up;      // user half of the event layer
  Vec prefix;  // OR-chain of NOT events under inference order
};

std::vector<UserClause> user_clauses(const SurrogateScorer& s, std::span<const UserId> users,
                                     const InteractionMatrix& observed) {
  const auto& model = s.model();
  std::vector<UserClause> out;
  out.reserve(users.size());
  for (UserId u : users) {
    if (u >= observed.users() || u >= model.users()) throw ShapeError("attack: user id out of range");
    const auto ante = model.antecedents(u, observed);
    if (ante.empty()) throw PreconditionError("attack: sampled user has an empty observed history");
    UserClause c;
    c.up = s.user_part(model.user_embedding(u));
    c.prefix = s.prefix(c.up, ante);
    out.push_back(std::move(c));
  }
  return out;
}

Vec shifted(const SurrogateModel& model, ItemId t, std::span<const double> eps) {
  const auto h = model.item_embedding(t);
  Vec out(h.begin(), h.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += eps[j];
  return out;
}

}  // namespace

double shift_objective(const SurrogateModel& model, ItemId t, std::span<const double> eps,
                       std::span<const UserId> users, const InteractionMatrix& observed) {
  if (users.empty()) throw PreconditionError("shift_objective: empty user sample");
  if (eps.size() != model.dim()) throw ShapeError("shift_objective: epsilon has wrong length");
  SurrogateScorer s(model);
  const auto clauses = user_clauses(s, users, observed);
  const auto ip = s.item_part(shifted(model, t, eps));
  double total = 0.0;
  for (const auto& c : clauses) total += s.score(c.up, c.prefix, ip);
  return total / static_cast<double>(clauses.size());
}

Objective shift_objective_fn(const SurrogateModel& model, ItemId t, std::span<const UserId> users,
                             const InteractionMatrix& observed) {
  if (users.empty()) throw PreconditionError("shift_objective_fn: empty user sample");
  if (t >= model.items()) throw ShapeError("shift_objective_fn: target id out of range");
  struct State {
    const SurrogateModel* model;
    ItemId t;
    std::vector<UserClause> clauses;
    Tape tape;
    std::vector<Var> terms;
    State(const SurrogateModel& m, ItemId t_, std::vector<UserClause> c)
        : model(&m), t(t_), clauses(std::move(c)), tape(store_of(m)) {
      tape.set_frozen(true);
    }
  };
  const SurrogateScorer s(model);
  auto st = std::make_shared<State>(model, t, user_clauses(s, users, observed));
  return [st](std::span<const double> x, Vec* grad) {
    const auto& m = *st->model;
    if (x.size() != m.dim()) throw ShapeError("shift objective: epsilon has wrong length");
    auto& tape = st->tape;
    tape.clear();
    st->terms.clear();
    Var eps = tape.variable(x);
    Var item = tape.add(tape.param_row(m.ids().item, st->t), eps);
    Var T = m.truth(tape);
    for (const auto& c : st->clauses) {
      Var e = m.event(tape, tape.constant(c.up), item);
      st->terms.push_back(tape.sim_hat(m.or_(tape, tape.constant(c.prefix), e), T));
    }
    Var J = tape.mean(st->terms);
    if (grad) {
      tape.backward(J);
      const auto g = tape.grad(eps);
      grad->assign(g.begin(), g.end());
    }
    return tape.scalar_value(J);
  };
}

EmbeddingShift optimal_shift(const SurrogateModel& model, ItemId t, std::span<const UserId> users,
                             const InteractionMatrix& observed, double rho, std::size_t steps,
                             double lr) {
  if (users.empty()) throw PreconditionError("optimal_shift: empty user sample");
  if (t >= model.items()) throw ShapeError("optimal_shift: target id out of range");
  if (rho < 0.0) throw PreconditionError("optimal_shift: rho must be non-negative");
  const std::size_t d = model.dim();
  const Objective f = shift_objective_fn(model, t, users, observed);

  EmbeddingShift out;
  out.target = t;
  Vec zero(d, 0.0), g0;
  out.base_objective = f(zero, &g0);
  out.epsilon = zero;
  out.objective = out.base_objective;
  if (rho == 0.0 || steps == 0) return out;
  if (l2_norm(g0) == 0.0) {
    spdlog::warn("optimal_shift: zero gradient at epsilon = 0 for item {}", t);
    return out;
  }
  auto r = projected_ascent(f, zero, lr * rho, steps, rho);
  out.epsilon = std::move(r.x);
  out.objective = r.value;
  return out;
}

namespace {

// Plain evaluation state for one fake user: per-target candidate events and
// clause prefixes over the current chain.
struct CraftState {
  const SurrogateScorer& s;
  std::span<const EmbeddingShift> shifts;
  Vec up;
  std::vector<Vec> cand;                 // event of t + eps per target
  std::vector<std::optional<Vec>> prefix;  // per target, over chain minus t

  CraftState(const SurrogateScorer& scorer, std::span<const EmbeddingShift> sh,
             std::span<const double> m, std::span<const ItemId> chain)
      : s(scorer), shifts(sh) {
    const auto& model = s.model();
    up = s.user_part(m);
    std::vector<Vec> nots;
    nots.reserve(chain.size());
    for (ItemId j : chain) nots.push_back(s.not_(s.event(up, s.item_part(j))));
    for (const auto& sh_t : shifts) {
      cand.push_back(s.event(up, s.item_part(shifted(model, sh_t.target, sh_t.epsilon))));
      std::optional<Vec> p;
      for (std::size_t k = 0; k < chain.size(); ++k) {
        if (chain[k] == sh_t.target) continue;
        p = p ? s.or_(*p, nots[k]) : nots[k];
      }
      prefix.push_back(std::move(p));
    }
  }

  double clause_score(std::size_t t, const std::optional<Vec>& p) const {
    return sim_hat(p ? s.or_(*p, cand[t]) : cand[t], s.truth());
  }

  double value() const {
    double total = 0.0;
    for (std::size_t t = 0; t < shifts.size(); ++t) total += clause_score(t, prefix[t]);
    return total / static_cast<double>(shifts.size());
  }

  // Value after appending an item whose NOT-event is `n`.
  double value_with(const Vec& n) const {
    double total = 0.0;
    for (std::size_t t = 0; t < shifts.size(); ++t) {
      const Vec p = prefix[t] ? s.or_(*prefix[t], n) : n;
      total += sim_hat(s.or_(p, cand[t]), s.truth());
    }
    return total / static_cast<double>(shifts.size());
  }

  void append(const Vec& n) {
    for (auto& p : prefix) p = p ? s.or_(*p, n) : n;
  }
};

}  // namespace

double craft_objective(const SurrogateModel& model, std::span<const double> m,
                       std::span<const ItemId> chain, std::span<const EmbeddingShift> shifts) {
  if (shifts.empty()) throw PreconditionError("craft_objective: no shifts");
  if (m.size() != model.dim()) throw ShapeError("craft_objective: embedding has wrong length");
  check_items(chain, model.items());
  SurrogateScorer s(model);
  return CraftState(s, shifts, m, chain).value();
}

FakeUserProfile craft_fake_user(const SurrogateModel& model, std::span<const EmbeddingShift> shifts,
                                std::span<const ItemId> pool, std::span<const double> m0,
                                const AttackConfig& cfg, CraftTrace* trace) {
  if (shifts.empty()) throw PreconditionError("craft_fake_user: no shifts");
  if (m0.size() != model.dim()) throw ShapeError("craft_fake_user: embedding has wrong length");
  if (pool.size() < cfg.n_f) throw ShapeError("craft_fake_user: candidate pool smaller than n_f");
  if (cfg.n_f < shifts.size()) throw PreconditionError("craft_fake_user: n_f below the number of targets");
  check_items(pool, model.items());
  for (const auto& sh : shifts) {
    if (sh.epsilon.size() != model.dim()) throw ShapeError("craft_fake_user: shift has wrong length");
    if (std::find(pool.begin(), pool.end(), sh.target) == pool.end()) {
      throw PreconditionError("craft_fake_user: pool must contain every target");
    }
  }

  SurrogateScorer s(model);
  std::vector<ItemId> chain;
  for (const auto& sh : shifts) chain.push_back(sh.target);
  Vec m(m0.begin(), m0.end());
  std::vector<double> greedy;

  Tape tape(store_of(model));
  tape.set_frozen(true);
  std::vector<Var> nots, terms;
  Objective f = [&](std::span<const double> x, Vec* grad) {
    tape.clear();
    nots.clear();
    terms.clear();
    Var mv = tape.variable(x);
    Var up = model.user_part(tape, mv);
    Var T = model.truth(tape);
    for (ItemId j : chain) {
      nots.push_back(model.not_(tape, model.event(tape, up, tape.param_row(model.ids().item, j))));
    }
    for (const auto& sh : shifts) {
      Var item = tape.add(tape.param_row(model.ids().item, sh.target), tape.constant(sh.epsilon));
      Var cand = model.event(tape, up, item);
      std::optional<Var> p;
      for (std::size_t k = 0; k < chain.size(); ++k) {
        if (chain[k] == sh.target) continue;
        p = p ? model.or_(tape, *p, nots[k]) : nots[k];
      }
      terms.push_back(tape.sim_hat(p ? model.or_(tape, *p, cand) : cand, T));
    }
    Var J = tape.mean(terms);
    if (grad) {
      tape.backward(J);
      const auto g = tape.grad(mv);
      grad->assign(g.begin(), g.end());
    }
    return tape.scalar_value(J);
  };

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    if (cfg.embed_steps > 0) {
      m = projected_ascent(f, m, cfg.embed_lr, cfg.embed_steps, 0.0).x;
    }
    CraftState st(s, shifts, m, chain);
    double current = st.value();
    greedy.push_back(current);
    const std::size_t room = cfg.n_f - chain.size();
    const std::size_t left_rounds = cfg.rounds - round;
    const std::size_t quota = (room + left_rounds - 1) / left_rounds;
    for (std::size_t a = 0; a < quota; ++a) {
      double best = -1.0;
      ItemId best_item = 0;
      Vec best_not;
      for (ItemId j : pool) {
        if (std::find(chain.begin(), chain.end(), j) != chain.end()) continue;
        Vec n = s.not_(s.event(st.up, s.item_part(j)));
        const double v = st.value_with(n);
        if (v > best) {
          best = v;
          best_item = j;
          best_not = std::move(n);
        }
      }
      if (cfg.strict_greedy && best < current) break;
      st.append(best_not);
      chain.push_back(best_item);
      current = best;
      greedy.push_back(current);
    }
  }

  FakeUserProfile out;
  out.embedding = m;
  out.items = chain;
  std::sort(out.items.begin(), out.items.end());
  if (trace) {
    trace->greedy_objectives = std::move(greedy);
    trace->chain = std::move(chain);
  }
  return out;
}

std::vector<ItemId> candidate_pool(const InteractionMatrix& observed, const AttackConfig& cfg) {
  const auto pop = data::popularity(observed);
  const std::size_t k = std::min(cfg.pool_size, pop.ranking.size());
  std::vector<ItemId> pool(pop.ranking.begin(), pop.ranking.begin() + static_cast<std::ptrdiff_t>(k));
  pool.insert(pool.end(), cfg.targets.begin(), cfg.targets.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  return pool;
}

std::vector<FakeUserProfile> run_hcars(const SurrogateModel& model,
                                       const InteractionMatrix& observed,
                                       const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.budget == 0) return {};
  check_items(cfg.targets, model.items());
  if (observed.users() > model.users() || observed.items() != model.items()) {
    throw ShapeError("run_hcars: observed matrix does not match the surrogate");
  }
  const double rho = cfg.rho > 0.0 ? cfg.rho : default_radius(model);
  const auto pool = candidate_pool(observed, cfg);
  std::vector<UserId> eligible;
  for (UserId u = 0; u < observed.users(); ++u) {
    if (!observed.history(u).empty()) eligible.push_back(u);
  }
  if (eligible.empty()) throw PreconditionError("run_hcars: no user has an observed history");

  const Rng root = Rng(cfg.seed).split("hcars");
  std::vector<FakeUserProfile> out;
  for (std::size_t f = 0; f < cfg.budget; ++f) {
    Rng rng = root.split(static_cast<std::uint64_t>(f));
    std::vector<UserId> sample;
    for (std::size_t j : rng.sample_without_replacement(eligible.size(),
                                                        std::min(cfg.user_sample, eligible.size()))) {
      sample.push_back(eligible[j]);
    }
    std::vector<EmbeddingShift> shifts;
    for (ItemId t : cfg.targets) {
      shifts.push_back(optimal_shift(model, t, sample, observed, rho, cfg.shift_steps, cfg.shift_lr));
    }
    const auto m0 = model.user_embedding(eligible[rng.index(eligible.size())]);
    auto p = craft_fake_user(model, shifts, pool, m0, cfg);
    p.user = static_cast<UserId>(observed.users() + f);
    spdlog::debug("run_hcars: fake user {} with {} items", p.user, p.items.size());
    out.push_back(std::move(p));
  }
  return out;
}

ShiftCheck shift_condition_check(const SurrogateModel& before, const SurrogateModel& after,
                                 ItemId t, std::span<const UserId> users,
                                 const InteractionMatrix& observed) {
  if (users.empty()) throw PreconditionError("shift_condition_check: empty user list");
  if (before.dim() != after.dim() || before.hidden() != after.hidden() ||
      before.items() != after.items()) {
    throw ShapeError("shift_condition_check: models differ in architecture");
  }
  auto loss = [&](const SurrogateModel& m) {
    SurrogateScorer s(m);
    double total = 0.0;
    const auto ip = s.item_part(t);
    for (const auto& c : user_clauses(s, users, observed)) total += s.score(c.up, c.prefix, ip);
    return -total;
  };
  ShiftCheck out;
  out.loss_before = loss(before);
  out.loss_after = loss(after);
  out.delta = out.loss_after - out.loss_before;
  out.passed = out.loss_after <= out.loss_before;
  return out;
}

namespace {

std::vector<FakeUserProfile> filler_profiles(const InteractionMatrix& observed,
                                             const AttackConfig& cfg,
                                             const std::vector<ItemId>& pool, Rng root) {
  const std::size_t need = cfg.n_f - cfg.targets.size();
  std::vector<FakeUserProfile> out;
  for (std::size_t f = 0; f < cfg.budget; ++f) {
    Rng rng = root.split(static_cast<std::uint64_t>(f));
    FakeUserProfile p;
    p.user = static_cast<UserId>(observed.users() + f);
    p.items = cfg.targets;
    for (std::size_t j : rng.sample_without_replacement(pool.size(), std::min(need, pool.size()))) {
      p.items.push_back(pool[j]);
    }
    std::sort(p.items.begin(), p.items.end());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ItemId> without_targets(std::vector<ItemId> items, const std::vector<ItemId>& targets) {
  std::erase_if(items, [&](ItemId i) {
    return std::find(targets.begin(), targets.end(), i) != targets.end();
  });
  return items;
}

}  // namespace

std::vector<FakeUserProfile> bandwagon(const InteractionMatrix& observed,
                                       const data::PopularityTable& pop, const AttackConfig& cfg) {
  cfg.validate();
  check_items(cfg.targets, observed.items());
  if (pop.ranking.size() != observed.items()) throw ShapeError("bandwagon: popularity table size mismatch");
  const std::size_t need = cfg.n_f - cfg.targets.size();
  auto pool = without_targets(pop.top_fraction(0.1), cfg.targets);
  if (pool.size() < need) pool = without_targets(pop.ranking, cfg.targets);
  return filler_profiles(observed, cfg, pool, Rng(cfg.seed).split("bandwagon"));
}

std::vector<FakeUserProfile> random_attack(const InteractionMatrix& observed,
                                           const AttackConfig& cfg) {
  cfg.validate();
  check_items(cfg.targets, observed.items());
  std::vector<ItemId> all(observed.items());
  for (ItemId i = 0; i < all.size(); ++i) all[i] = i;
  return filler_profiles(observed, cfg, without_targets(std::move(all), cfg.targets),
                         Rng(cfg.seed).split("random-attack"));
}

void write_profiles(const std::filesystem::path& path, std::span<const FakeUserProfile> profiles) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : profiles) {
    out << nlohmann::json{{"fake_user", p.user}, {"items", p.items}}.dump() << '\n';
  }
}

std::vector<FakeUserProfile> read_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<FakeUserProfile> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FakeUserProfile p;
      p.user = j.at("fake_user").get<UserId>();
      p.items = j.at("items").get<std::vector<ItemId>>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

}  // namespace hcars::attack
