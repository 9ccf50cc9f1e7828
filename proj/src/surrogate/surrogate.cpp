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

#include "hcars/surrogate/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "hcars/substrate/adam.hpp"
#include "hcars/substrate/checkpoint.hpp"
#include "hcars/substrate/error.hpp"
#include "hcars/substrate/ops.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars::surrogate {

CfLossMode parse_cf_mode(const std::string& name) {
  if (name == "contrast") return CfLossMode::kContrast;
  if (name == "attract") return CfLossMode::kAttract;
  throw PreconditionError("unknown cf loss mode '" + name + "'");
}

std::string cf_mode_name(CfLossMode mode) {
  return mode == CfLossMode::kContrast ? "contrast" : "attract";
}

void SurrogateTrainConfig::validate() const {
  if (d < 2 || d_h == 0) throw PreconditionError("surrogate: d must be >= 2 and d_h >= 1");
  if (epochs == 0 || batch_size == 0 || chunk == 0 || max_antecedents == 0) {
    throw PreconditionError("surrogate: epochs, batch size, chunk and max_antecedents must be positive");
  }
  if (lambda1 < 0.0 || lambda2 < 0.0) throw PreconditionError("surrogate: lambda1 and lambda2 must be >= 0");
  if (!(lr > 0.0) || !(alpha > 0.0) || !(init_std > 0.0)) {
    throw PreconditionError("surrogate: lr, alpha and init_std must be positive");
  }
}

SurrogateModel::SurrogateModel(std::size_t users, std::size_t items, const SurrogateTrainConfig& cfg)
    : users_(users), items_(items), cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.d, h = cfg.d_h;
  const Rng root = Rng(cfg.seed).split("surrogate-init");

  Rng rt = root.split("truth");
  truth_ = Tensor(d);
  for (double& v : truth_.values()) v = rt.normal();
  const double norm = l2_norm(truth_.values());
  for (double& v : truth_.values()) v /= norm;

  Tensor item_emb(items, d);
  Rng ri = root.split("items");
  init_normal(item_emb, cfg.init_std, ri);

  Rng rl = root.split("layers");
  auto glorot = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    init_glorot(t, rl);
    return t;
  };
  Tensor ev_wu = glorot(h, d), ev_wi = glorot(h, d), ev_w2 = glorot(d, h);
  Tensor not_w1 = glorot(d, d), not_w2 = glorot(d, d);
  Tensor and_wa = glorot(d, d), and_wb = glorot(d, d), and_w2 = glorot(d, d);
  Tensor or_wa = glorot(d, d), or_wb = glorot(d, d), or_w2 = glorot(d, d);

  // Small random biases keep ReLU outputs from collapsing to exact zeros,
  // which have no direction for the cosine.
  Rng rb = root.split("biases");
  auto bias = [&](std::size_t n) {
    Tensor t(n);
    init_normal(t, cfg.init_std, rb);
    return t;
  };

  Tensor user_emb(users, d);
  Rng ru = root.split("users");
  init_normal(user_emb, cfg.init_std, ru);

  auto& p = params_;
  ids_.user = p.add("user_embedding", std::move(user_emb));
  ids_.item = p.add("item_embedding", std::move(item_emb));
  ids_.ev_wu = p.add("event_w1_user", std::move(ev_wu));
  ids_.ev_wi = p.add("event_w1_item", std::move(ev_wi));
  ids_.ev_b1 = p.add("event_b1", bias(h));
  ids_.ev_w2 = p.add("event_w2", std::move(ev_w2));
  ids_.ev_b2 = p.add("event_b2", bias(d));
  ids_.not_w1 = p.add("not_w1", std::move(not_w1));
  ids_.not_b1 = p.add("not_b1", bias(d));
  ids_.not_w2 = p.add("not_w2", std::move(not_w2));
  ids_.not_b2 = p.add("not_b2", bias(d));
  ids_.and_wa = p.add("and_w1_left", std::move(and_wa));
  ids_.and_wb = p.add("and_w1_right", std::move(and_wb));
  ids_.and_b1 = p.add("and_b1", bias(d));
  ids_.and_w2 = p.add("and_w2", std::move(and_w2));
  ids_.and_b2 = p.add("and_b2", bias(d));
  ids_.or_wa = p.add("or_w1_left", std::move(or_wa));
  ids_.or_wb = p.add("or_w1_right", std::move(or_wb));
  ids_.or_b1 = p.add("or_b1", bias(d));
  ids_.or_w2 = p.add("or_w2", std::move(or_w2));
  ids_.or_b2 = p.add("or_b2", bias(d));
}

std::span<const double> SurrogateModel::user_embedding(UserId u) const {
  if (u >= users_) throw ShapeError("surrogate: user id out of range");
  return params_[ids_.user].value.row(u);
}

std::span<const double> SurrogateModel::item_embedding(ItemId i) const {
  if (i >= items_) throw ShapeError("surrogate: item id out of range");
  return params_[ids_.item].value.row(i);
}

Var SurrogateModel::user_part(Tape& tape, Var user) const {
  return tape.affine(tape.param(ids_.ev_wu), user, tape.param(ids_.ev_b1));
}

Var SurrogateModel::event(Tape& tape, Var up, Var item) const {
  Var hidden = tape.relu(tape.affine(tape.param(ids_.ev_wi), item, up));
  return tape.affine(tape.param(ids_.ev_w2), hidden, tape.param(ids_.ev_b2));
}

Var SurrogateModel::not_(Tape& tape, Var x) const {
  Var hidden = tape.relu(tape.affine(tape.param(ids_.not_w1), x, tape.param(ids_.not_b1)));
  return tape.affine(tape.param(ids_.not_w2), hidden, tape.param(ids_.not_b2));
}

Var SurrogateModel::and_(Tape& tape, Var a, Var b) const {
  Var left = tape.affine(tape.param(ids_.and_wa), a, tape.param(ids_.and_b1));
  Var hidden = tape.relu(tape.affine(tape.param(ids_.and_wb), b, left));
  return tape.affine(tape.param(ids_.and_w2), hidden, tape.param(ids_.and_b2));
}

Var SurrogateModel::or_(Tape& tape, Var a, Var b) const {
  Var left = tape.affine(tape.param(ids_.or_wa), a, tape.param(ids_.or_b1));
  Var hidden = tape.relu(tape.affine(tape.param(ids_.or_wb), b, left));
  return tape.affine(tape.param(ids_.or_w2), hidden, tape.param(ids_.or_b2));
}

Var SurrogateModel::truth(Tape& tape) const { return tape.constant(truth_.values()); }

Var SurrogateModel::prefix(Tape& tape, std::span<const Var> events) const {
  if (events.empty()) throw PreconditionError("surrogate: a clause needs at least one history event");
  Var p = not_(tape, events[0]);
  for (std::size_t j = 1; j < events.size(); ++j) p = or_(tape, p, not_(tape, events[j]));
  return p;
}

Var SurrogateModel::build_expression(Tape& tape, std::span<const Var> events, Var candidate) const {
  return or_(tape, prefix(tape, events), candidate);
}

Var SurrogateModel::truth_score(Tape& tape, Var expression) const {
  return tape.sim_hat(expression, truth(tape));
}

std::vector<ItemId> SurrogateModel::antecedents(std::span<const ItemId> history,
                                                std::uint64_t stream) const {
  std::vector<ItemId> out;
  if (history.size() <= cfg_.max_antecedents) {
    out.assign(history.begin(), history.end());
  } else {
    Rng rng = Rng(cfg_.seed).split("inference-antecedents").split(stream);
    for (std::size_t j : rng.sample_without_replacement(history.size(), cfg_.max_antecedents)) {
      out.push_back(history[j]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ItemId> SurrogateModel::antecedents(UserId u, const InteractionMatrix& observed) const {
  return antecedents(observed.history(u), static_cast<std::uint64_t>(u));
}

double SurrogateModel::score(UserId u, ItemId x, const InteractionMatrix& observed) const {
  SurrogateScorer s(*this);
  const auto up = s.user_part(user_embedding(u));
  const auto ante = antecedents(u, observed);
  if (ante.empty()) throw PreconditionError("surrogate_score: user has an empty observed history");
  return s.score(up, s.prefix(up, ante), s.item_part(item_embedding(x)));
}

void SurrogateModel::copy_parameters_from(const SurrogateModel& other) {
  if (other.items_ != items_ || other.cfg_.d != cfg_.d || other.cfg_.d_h != cfg_.d_h ||
      other.users_ > users_) {
    throw ShapeError("copy_parameters_from: incompatible surrogate shapes");
  }
  truth_ = other.truth_;
  for (ParamId id = 0; id < params_.size(); ++id) {
    auto& dst = params_[id];
    const auto& src = other.params_[id];
    if (id == ids_.user) {
      std::copy(src.value.values().begin(), src.value.values().end(), dst.value.values().begin());
    } else {
      dst.value = src.value;
    }
    for (auto* t : {&dst.grad, &dst.first_moment, &dst.second_moment}) {
      std::fill(t->values().begin(), t->values().end(), 0.0);
    }
  }
}

void SurrogateModel::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.kind = "surrogate";
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : curve_) curve.push_back({e.l_fa, e.l_cf, e.l_reg, e.total});
  ckpt.meta = {{"users", users_},
               {"items", items_},
               {"d", cfg_.d},
               {"d_h", cfg_.d_h},
               {"lambda1", cfg_.lambda1},
               {"lambda2", cfg_.lambda2},
               {"lr", cfg_.lr},
               {"epochs", cfg_.epochs},
               {"batch_size", cfg_.batch_size},
               {"chunk", cfg_.chunk},
               {"max_antecedents", cfg_.max_antecedents},
               {"reg_vectors", cfg_.reg_vectors},
               {"alpha", cfg_.alpha},
               {"init_std", cfg_.init_std},
               {"cf_mode", cf_mode_name(cfg_.cf_mode)},
               {"seed", cfg_.seed},
               {"curve", curve}};
  ckpt.params = params_;
  ckpt.extras["truth"] = truth_;
  write_checkpoint(path, ckpt);
}

SurrogateModel SurrogateModel::load(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.kind != "surrogate") throw ParseError(path.string() + ": not a surrogate checkpoint");
  const auto& m = ckpt.meta;
  SurrogateModel s;
  s.users_ = m.at("users").get<std::size_t>();
  s.items_ = m.at("items").get<std::size_t>();
  auto& c = s.cfg_;
  c.d = m.at("d").get<std::size_t>();
  c.d_h = m.at("d_h").get<std::size_t>();
  c.lambda1 = m.at("lambda1").get<double>();
  c.lambda2 = m.at("lambda2").get<double>();
  c.lr = m.at("lr").get<double>();
  c.epochs = m.at("epochs").get<std::size_t>();
  c.batch_size = m.at("batch_size").get<std::size_t>();
  c.chunk = m.at("chunk").get<std::size_t>();
  c.max_antecedents = m.at("max_antecedents").get<std::size_t>();
  c.reg_vectors = m.at("reg_vectors").get<std::size_t>();
  c.alpha = m.at("alpha").get<double>();
  c.init_std = m.at("init_std").get<double>();
  c.cf_mode = parse_cf_mode(m.at("cf_mode").get<std::string>());
  c.seed = m.at("seed").get<std::uint64_t>();
  for (const auto& e : m.at("curve")) {
    s.curve_.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(),
                        e.at(3).get<double>()});
  }
  s.params_ = std::move(ckpt.params);
  s.truth_ = ckpt.extras.at("truth");
  const auto& p = s.params_;
  s.ids_ = {p.find("user_embedding"), p.find("item_embedding"), p.find("event_w1_user"),
            p.find("event_w1_item"),  p.find("event_b1"),       p.find("event_w2"),
            p.find("event_b2"),       p.find("not_w1"),         p.find("not_b1"),
            p.find("not_w2"),         p.find("not_b2"),         p.find("and_w1_left"),
            p.find("and_w1_right"),   p.find("and_b1"),         p.find("and_w2"),
            p.find("and_b2"),         p.find("or_w1_left"),     p.find("or_w1_right"),
            p.find("or_b1"),          p.find("or_w2"),          p.find("or_b2")};
  return s;
}

// ---------------------------------------------------------------------------
// Plain evaluation

namespace {

using Vec = std::vector<double>;

// y = W x (+ b if given), W rows x cols row-major.
void matvec(const Tensor& W, std::span<const double> x, const double* b, double* y) {
  const std::size_t r = W.rows(), c = W.cols();
  const double* w = W.values().data();
  for (std::size_t o = 0; o < r; ++o) {
    const double* wr = w + o * c;
    double s = b ? b[o] : 0.0;
    for (std::size_t i = 0; i < c; ++i) s += wr[i] * x[i];
    y[o] = s;
  }
}

Vec two_layer(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
              std::span<const double> x) {
  Vec h(w1.rows()), y(w2.rows());
  matvec(w1, x, b1.values().data(), h.data());
  for (double& v : h) v = std::max(0.0, v);
  matvec(w2, h, b2.values().data(), y.data());
  return y;
}

Vec pair_module(const Tensor& wa, const Tensor& wb, const Tensor& b1, const Tensor& w2,
                const Tensor& b2, std::span<const double> a, std::span<const double> b) {
  Vec left(wa.rows()), h(wb.rows()), y(w2.rows());
  matvec(wa, a, b1.values().data(), left.data());
  matvec(wb, b, left.data(), h.data());
  for (double& v : h) v = std::max(0.0, v);
  matvec(w2, h, b2.values().data(), y.data());
  return y;
}

}  // namespace

SurrogateScorer::SurrogateScorer(const SurrogateModel& model)
    : model_(&model), d_(model.dim()), d_h_(model.hidden()), n_(model.items()) {
  const auto& p = model.params();
  const auto& ids = model.ids();
  const auto& ie = p[ids.item].value;
  item_parts_.assign(n_ * d_h_, 0.0);
  for (std::size_t j = 0; j < n_; ++j) {
    matvec(p[ids.ev_wi].value, ie.row(j), nullptr, item_parts_.data() + j * d_h_);
  }
}

SurrogateScorer::Vec SurrogateScorer::user_part(std::span<const double> h_u) const {
  if (h_u.size() != d_) throw ShapeError("surrogate: user vector has wrong length");
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  Vec out(d_h_);
  matvec(p[ids.ev_wu].value, h_u, p[ids.ev_b1].value.values().data(), out.data());
  return out;
}

SurrogateScorer::Vec SurrogateScorer::item_part(std::span<const double> h_j) const {
  if (h_j.size() != d_) throw ShapeError("surrogate: item vector has wrong length");
  Vec out(d_h_);
  matvec(model_->params()[model_->ids().ev_wi].value, h_j, nullptr, out.data());
  return out;
}

std::span<const double> SurrogateScorer::item_part(ItemId j) const {
  if (j >= n_) throw ShapeError("surrogate: item id out of range");
  return {item_parts_.data() + static_cast<std::size_t>(j) * d_h_, d_h_};
}

SurrogateScorer::Vec SurrogateScorer::event(std::span<const double> up,
                                            std::span<const double> ip) const {
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  Vec h(d_h_), e(d_);
  for (std::size_t j = 0; j < d_h_; ++j) h[j] = std::max(0.0, up[j] + ip[j]);
  matvec(p[ids.ev_w2].value, h, p[ids.ev_b2].value.values().data(), e.data());
  return e;
}

SurrogateScorer::Vec SurrogateScorer::not_(std::span<const double> x) const {
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  return two_layer(p[ids.not_w1].value, p[ids.not_b1].value, p[ids.not_w2].value,
                   p[ids.not_b2].value, x);
}

SurrogateScorer::Vec SurrogateScorer::and_(std::span<const double> a,
                                           std::span<const double> b) const {
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  return pair_module(p[ids.and_wa].value, p[ids.and_wb].value, p[ids.and_b1].value,
                     p[ids.and_w2].value, p[ids.and_b2].value, a, b);
}

SurrogateScorer::Vec SurrogateScorer::or_(std::span<const double> a,
                                          std::span<const double> b) const {
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  return pair_module(p[ids.or_wa].value, p[ids.or_wb].value, p[ids.or_b1].value,
                     p[ids.or_w2].value, p[ids.or_b2].value, a, b);
}

SurrogateScorer::Vec SurrogateScorer::prefix(std::span<const double> up,
                                             std::span<const ItemId> antecedents) const {
  if (antecedents.empty()) throw PreconditionError("surrogate: a clause needs at least one history event");
  Vec p = not_(event(up, item_part(antecedents[0])));
  for (std::size_t j = 1; j < antecedents.size(); ++j) {
    p = or_(p, not_(event(up, item_part(antecedents[j]))));
  }
  return p;
}

void SurrogateScorer::scores(std::span<const double> up, std::span<const double> prefix,
                             std::span<double> out) const {
  if (out.size() != n_) throw ShapeError("surrogate: score buffer has wrong length");
  const auto& p = model_->params();
  const auto& ids = model_->ids();
  Vec left(d_), hidden(d_), c(d_);
  matvec(p[ids.or_wa].value, prefix, p[ids.or_b1].value.values().data(), left.data());
  const auto& wb = p[ids.or_wb].value;
  const auto& w2 = p[ids.or_w2].value;
  const double* b2 = p[ids.or_b2].value.values().data();
  for (std::size_t j = 0; j < n_; ++j) {
    const auto e = event(up, item_part(static_cast<ItemId>(j)));
    matvec(wb, e, left.data(), hidden.data());
    for (double& v : hidden) v = std::max(0.0, v);
    matvec(w2, hidden, b2, c.data());
    out[j] = sim_hat(c, truth());
  }
}

double SurrogateScorer::score(std::span<const double> up, std::span<const double> prefix,
                              std::span<const double> ip) const {
  return sim_hat(or_(prefix, event(up, ip)), truth());
}

std::vector<double> SurrogateScorer::user_scores(UserId u, const InteractionMatrix& observed) const {
  const auto up = user_part(model_->user_embedding(u));
  const auto ante = model_->antecedents(u, observed);
  if (ante.empty()) throw PreconditionError("surrogate_score: user has an empty observed history");
  std::vector<double> out(n_);
  scores(up, prefix(up, ante), out);
  return out;
}

target::RankedList SurrogateScorer::top_k(UserId u, std::size_t k,
                                          const InteractionMatrix& observed) const {
  if (k == 0) throw PreconditionError("top_k: k must be at least 1");
  const auto s = user_scores(u, observed);
  const auto h = observed.history(u);
  std::vector<target::ScoredItem> cand;
  cand.reserve(n_);
  for (ItemId i = 0; i < n_; ++i) {
    if (!std::binary_search(h.begin(), h.end(), i)) cand.push_back({i, s[i]});
  }
  target::rank_top_k(cand, k);
  return {u, k, std::move(cand)};
}

double PlainLogic::sim(const Vec& a, const Vec& b) const { return sim_hat(a, b); }

TapeLogic::TapeLogic(Tape& tape_, const SurrogateModel& model_)
    : tape(tape_), model(model_), t(model_.truth(tape_)), f(model_.not_(tape_, t)) {}

// ---------------------------------------------------------------------------
// Losses

Var fa_pair_loss(Tape& tape, Var s_pos, Var s_neg, double alpha) {
  return tape.scale(tape.log_sigmoid(tape.scale(tape.sub(s_pos, s_neg), alpha)), -1.0);
}

Var cf_pair_loss(Tape& tape, Var c_pos, Var c_cf, CfLossMode mode) {
  Var sim = tape.sim_hat(c_pos, c_cf);
  Var inner = mode == CfLossMode::kContrast ? tape.affine_scalar(sim, -1.0, 1.0) : sim;
  return tape.scale(tape.log(inner), -1.0);
}

Var loss_fa(Tape& tape, const SurrogateModel& model, std::span<const Episode> episodes,
            double alpha, std::vector<Var>* pool) {
  const auto& ids = model.ids();
  Var T = model.truth(tape);
  std::vector<Var> terms, events;
  for (const auto& ep : episodes) {
    if (ep.positives.size() != ep.negatives.size()) {
      throw ShapeError("loss_fa: each positive needs exactly one negative");
    }
    Var up = model.user_part(tape, tape.param_row(ids.user, ep.user));
    events.clear();
    for (ItemId a : ep.antecedents) events.push_back(model.event(tape, up, tape.param_row(ids.item, a)));
    Var p = model.prefix(tape, events);
    if (pool) {
      pool->insert(pool->end(), events.begin(), events.end());
      pool->push_back(p);
    }
    for (std::size_t j = 0; j < ep.positives.size(); ++j) {
      Var ep_pos = model.event(tape, up, tape.param_row(ids.item, ep.positives[j]));
      Var ep_neg = model.event(tape, up, tape.param_row(ids.item, ep.negatives[j]));
      Var s_pos = tape.sim_hat(model.or_(tape, p, ep_pos), T);
      Var s_neg = tape.sim_hat(model.or_(tape, p, ep_neg), T);
      terms.push_back(fa_pair_loss(tape, s_pos, s_neg, alpha));
      if (pool) {
        pool->push_back(ep_pos);
        pool->push_back(ep_neg);
      }
    }
  }
  if (terms.empty()) return tape.scalar(0.0);
  return tape.mean(terms);
}

Var loss_cf(Tape& tape, const SurrogateModel& model, std::span<const CfSample> samples,
            CfLossMode mode) {
  const auto& ids = model.ids();
  std::vector<Var> terms, with, without;
  for (const auto& s : samples) {
    if (s.without_removed.empty()) continue;
    Var up = model.user_part(tape, tape.param_row(ids.user, s.user));
    with.clear();
    without.clear();
    for (ItemId a : s.with_removed) {
      Var e = model.event(tape, up, tape.param_row(ids.item, a));
      with.push_back(e);
      if (std::find(s.without_removed.begin(), s.without_removed.end(), a) != s.without_removed.end()) {
        without.push_back(e);
      }
    }
    Var cand = model.event(tape, up, tape.param_row(ids.item, s.target));
    Var c_pos = model.build_expression(tape, with, cand);
    Var c_cf = model.build_expression(tape, without, cand);
    terms.push_back(cf_pair_loss(tape, c_pos, c_cf, mode));
  }
  if (terms.empty()) return tape.scalar(0.0);
  return tape.mean(terms);
}

Var loss_reg(Tape& tape, const SurrogateModel& model, std::span<const Var> vectors) {
  if (vectors.empty()) return tape.scalar(0.0);
  TapeLogic ops(tape, model);
  std::vector<Var> terms;
  terms.reserve(vectors.size() * kNumLaws);
  for (Var w : vectors) {
    for (Var r : law_residuals(ops, w)) terms.push_back(r);
  }
  return tape.mean(terms);
}

// ---------------------------------------------------------------------------
// Training

std::vector<Episode> make_episodes(const InteractionMatrix& observed,
                                   const SurrogateTrainConfig& cfg, Rng& rng) {
  std::vector<Episode> out;
  const std::size_t n = observed.items();
  std::vector<ItemId> order;
  for (UserId u = 0; u < observed.users(); ++u) {
    const auto h = observed.history(u);
    if (h.size() < 2) continue;
    order.assign(h.begin(), h.end());
    rng.shuffle(order);
    std::size_t chunks = std::max<std::size_t>(2, (h.size() + cfg.chunk - 1) / cfg.chunk);
    chunks = std::min(chunks, h.size());
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t lo = c * h.size() / chunks, hi = (c + 1) * h.size() / chunks;
      Episode ep;
      ep.user = u;
      ep.positives.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                          order.begin() + static_cast<std::ptrdiff_t>(hi));
      for (std::size_t j = 0; j < order.size() && ep.antecedents.size() < cfg.max_antecedents; ++j) {
        if (j < lo || j >= hi) ep.antecedents.push_back(order[j]);
      }
      if (h.size() < n) {
        for (std::size_t j = 0; j < ep.positives.size(); ++j) {
          ItemId z;
          do {
            z = static_cast<ItemId>(rng.index(n));
          } while (std::binary_search(h.begin(), h.end(), z));
          ep.negatives.push_back(z);
        }
      } else {
        ep.positives.clear();
      }
      if (!ep.positives.empty()) out.push_back(std::move(ep));
    }
  }
  rng.shuffle(out);
  return out;
}

bool make_cf_sample(const explainer::CounterfactualExplanation& cf,
                    const InteractionMatrix& observed, std::size_t max_antecedents, Rng& rng,
                    CfSample& out) {
  if (cf.user >= observed.users() || cf.target >= observed.items()) return false;
  const auto h = observed.history(cf.user);
  std::vector<ItemId> removed, rest;
  for (ItemId i : h) {
    (std::binary_search(cf.removed.begin(), cf.removed.end(), i) ? removed : rest).push_back(i);
  }
  if (removed.empty() || rest.empty()) return false;
  const std::size_t room =
      std::min(rest.size(), max_antecedents > removed.size() ? max_antecedents - removed.size() : 1);
  CfSample s;
  s.user = cf.user;
  s.target = cf.target;
  s.with_removed = removed;
  for (std::size_t j : rng.sample_without_replacement(rest.size(), room)) {
    s.with_removed.push_back(rest[j]);
  }
  rng.shuffle(s.with_removed);
  for (ItemId i : s.with_removed) {
    if (!std::binary_search(removed.begin(), removed.end(), i)) s.without_removed.push_back(i);
  }
  out = std::move(s);
  return true;
}

namespace {

SurrogateModel train_from(SurrogateModel model, const InteractionMatrix& observed,
                          std::span<const explainer::CounterfactualExplanation> cfs,
                          const SurrogateTrainConfig& cfg, TrainStats* stats) {
  const Rng root = Rng(cfg.seed).split("surrogate-train");
  const Rng fa_stream = root.split("episodes");
  const Rng cf_stream = root.split("counterfactual");
  const Rng reg_stream = root.split("regulariser");

  TrainStats local;
  std::vector<const explainer::CounterfactualExplanation*> usable;
  {
    Rng probe(0);
    CfSample scratch;
    for (const auto& cf : cfs) {
      if (make_cf_sample(cf, observed, cfg.max_antecedents, probe, scratch)) {
        usable.push_back(&cf);
      } else {
        ++local.cf_skipped;
      }
    }
  }
  local.cf_used = usable.size();
  const bool use_cf = cfg.lambda1 > 0.0 && !usable.empty();
  const bool use_reg = cfg.lambda2 > 0.0 && cfg.reg_vectors > 0;

  Tape tape(model.params());
  std::vector<Var> pool, reg_set;
  std::vector<CfSample> cf_batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = fa_stream.split(static_cast<std::uint64_t>(epoch));
    const auto episodes = make_episodes(observed, cfg, er);
    if (episodes.empty()) throw PreconditionError("train_surrogate: no user has two or more interactions");
    const std::size_t batches = (episodes.size() + cfg.batch_size - 1) / cfg.batch_size;

    Rng cr = cf_stream.split(static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> cf_order(usable.size());
    for (std::size_t j = 0; j < cf_order.size(); ++j) cf_order[j] = j;
    if (use_cf) cr.shuffle(cf_order);
    Rng rr = reg_stream.split(static_cast<std::uint64_t>(epoch));

    EpochLosses sum;
    for (std::size_t b = 0; b < batches; ++b) {
      tape.clear();
      model.params().zero_grad();
      const std::size_t lo = b * cfg.batch_size;
      const auto batch = std::span<const Episode>(episodes).subspan(
          lo, std::min(cfg.batch_size, episodes.size() - lo));
      pool.clear();
      Var fa = loss_fa(tape, model, batch, cfg.alpha, use_reg ? &pool : nullptr);
      Var total = fa;
      sum.l_fa += tape.scalar_value(fa);

      if (use_cf) {
        cf_batch.clear();
        const std::size_t c0 = b * usable.size() / batches, c1 = (b + 1) * usable.size() / batches;
        for (std::size_t j = c0; j < c1; ++j) {
          CfSample s;
          if (make_cf_sample(*usable[cf_order[j]], observed, cfg.max_antecedents, cr, s)) {
            cf_batch.push_back(std::move(s));
          }
        }
        if (!cf_batch.empty()) {
          // Both sums share the factual pair count as normaliser.
          std::size_t fa_pairs = 0;
          for (const auto& ep : batch) fa_pairs += ep.positives.size();
          Var cf = tape.scale(loss_cf(tape, model, cf_batch, cfg.cf_mode),
                              static_cast<double>(cf_batch.size()) / static_cast<double>(fa_pairs));
          sum.l_cf += tape.scalar_value(cf);
          total = tape.add(total, tape.scale(cf, cfg.lambda1));
        }
      }
      if (use_reg) {
        reg_set.clear();
        const std::size_t take = std::min(cfg.reg_vectors, pool.size());
        for (std::size_t j : rr.sample_without_replacement(pool.size(), take)) reg_set.push_back(pool[j]);
        Var reg = loss_reg(tape, model, reg_set);
        sum.l_reg += tape.scalar_value(reg);
        total = tape.add(total, tape.scale(reg, cfg.lambda2));
      }
      sum.total += tape.scalar_value(total);
      tape.backward(total);
      adam_step(model.params(), cfg.lr);
    }
    EpochLosses e;
    const double nb = static_cast<double>(batches);
    e.l_fa = sum.l_fa / nb;
    e.l_cf = sum.l_cf / nb;
    e.l_reg = sum.l_reg / nb;
    e.total = sum.total / nb;
    if (!std::isfinite(e.total) || !model.params().all_finite()) {
      throw NumericError("train_surrogate: loss diverged at epoch " + std::to_string(epoch));
    }
    model.curve().push_back(e);
  }
  model.params().zero_grad();
  if (stats) *stats = local;
  return model;
}

}  // namespace

SurrogateModel train_surrogate(const InteractionMatrix& observed,
                               std::span<const explainer::CounterfactualExplanation> cfs,
                               const SurrogateTrainConfig& cfg, TrainStats* stats) {
  if (observed.empty()) throw PreconditionError("train_surrogate: empty observed matrix");
  return train_from(SurrogateModel(observed.users(), observed.items(), cfg), observed, cfs, cfg,
                    stats);
}

SurrogateModel fine_tune_surrogate(const SurrogateModel& init, const InteractionMatrix& observed,
                                   std::span<const explainer::CounterfactualExplanation> cfs,
                                   const SurrogateTrainConfig& cfg, TrainStats* stats) {
  if (observed.empty()) throw PreconditionError("fine_tune_surrogate: empty observed matrix");
  SurrogateModel model(observed.users(), observed.items(), cfg);
  model.copy_parameters_from(init);
  return train_from(std::move(model), observed, cfs, cfg, stats);
}

void write_loss_curve(const std::filesystem::path& path, const SurrogateModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,l_fa,l_cf,l_reg,total\n" << std::setprecision(17);
  for (std::size_t e = 0; e < model.curve().size(); ++e) {
    const auto& c = model.curve()[e];
    out << e << ',' << c.l_fa << ',' << c.l_cf << ',' << c.l_reg << ',' << c.total << '\n';
  }
}

// ---------------------------------------------------------------------------
// Audits

std::vector<std::pair<UserId, ItemId>> sample_pairs(std::size_t users, std::size_t items,
                                                    std::size_t count, std::uint64_t seed) {
  Rng rng = Rng(seed).split("audit-pairs");
  std::vector<std::pair<UserId, ItemId>> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    const auto u = static_cast<UserId>(rng.index(users));
    const auto i = static_cast<ItemId>(rng.index(items));
    out.emplace_back(u, i);
  }
  return out;
}

std::array<double, kNumLaws> law_audit(const SurrogateModel& model,
                                       std::span<const std::pair<UserId, ItemId>> pairs) {
  SurrogateScorer s(model);
  PlainLogic ops{s};
  std::array<double, kNumLaws> mean{};
  for (const auto& [u, i] : pairs) {
    const auto w = s.event(s.user_part(model.user_embedding(u)), s.item_part(i));
    const auto r = law_residuals(ops, w);
    for (std::size_t l = 0; l < kNumLaws; ++l) mean[l] += r[l];
  }
  if (!pairs.empty()) {
    for (double& v : mean) v /= static_cast<double>(pairs.size());
  }
  return mean;
}

double cf_similarity(const SurrogateModel& model, const InteractionMatrix& observed,
                     std::span<const explainer::CounterfactualExplanation> cfs,
                     std::uint64_t seed) {
  SurrogateScorer s(model);
  Rng rng = Rng(seed).split("cf-similarity");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& cf : cfs) {
    CfSample cs;
    if (!make_cf_sample(cf, observed, model.config().max_antecedents, rng, cs)) continue;
    const auto up = s.user_part(model.user_embedding(cs.user));
    const auto e = s.event(up, s.item_part(cs.target));
    const auto c_pos = s.or_(s.prefix(up, cs.with_removed), e);
    const auto c_cf = s.or_(s.prefix(up, cs.without_removed), e);
    total += sim_hat(c_pos, c_cf);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double permutation_gap(const SurrogateModel& model, const InteractionMatrix& observed,
                       std::size_t samples, std::uint64_t seed) {
  SurrogateScorer s(model);
  Rng rng = Rng(seed).split("permutation-gap");
  std::vector<UserId> users;
  for (UserId u = 0; u < observed.users(); ++u) {
    if (observed.history(u).size() >= 2) users.push_back(u);
  }
  if (users.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < samples; ++j) {
    const UserId u = users[rng.index(users.size())];
    auto a = model.antecedents(u, observed);
    auto b = a;
    rng.shuffle(a);
    rng.shuffle(b);
    const auto up = s.user_part(model.user_embedding(u));
    const auto ip = s.item_part(static_cast<ItemId>(rng.index(observed.items())));
    total += std::abs(s.score(up, s.prefix(up, a), ip) - s.score(up, s.prefix(up, b), ip));
  }
  return total / static_cast<double>(samples);
}

}  // namespace hcars::surrogate
