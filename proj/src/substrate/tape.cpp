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

#include "hcars/substrate/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/ops.hpp"

namespace hcars {

void Tape::bind(ParamStore& store) {
  if (!nodes_.empty()) throw PreconditionError("Tape::bind on a non-empty tape");
  store_ = &store;
}

void Tape::clear() {
  nodes_.clear();
  inputs_.clear();
  values_.clear();
  grads_.clear();
  param_cache_.clear();
  row_cache_.clear();
}

void Tape::require_scalar(Var v, const char* op) const {
  if (nodes_.at(v.id).size != 1) {
    throw ShapeError(std::string(op) + ": expected a scalar node");
  }
}

void Tape::require_param_store() const {
  if (store_ == nullptr) throw PreconditionError("Tape has no bound ParamStore");
}

Var Tape::push(Node node, std::initializer_list<Var> inputs) {
  return push(node, std::span<const Var>(inputs.begin(), inputs.size()));
}

Var Tape::push(Node node, std::span<const Var> inputs) {
  node.offset = static_cast<std::uint32_t>(values_.size());
  node.in_begin = static_cast<std::uint32_t>(inputs_.size());
  node.in_count = static_cast<std::uint32_t>(inputs.size());
  for (Var v : inputs) {
    if (!v.valid() || v.id >= nodes_.size()) throw PreconditionError("Tape: invalid Var");
    inputs_.push_back(v.id);
    if (nodes_[v.id].requires_grad) node.requires_grad = true;
  }
  values_.resize(values_.size() + node.size, 0.0);
  grads_.resize(grads_.size() + node.size, 0.0);
  nodes_.push_back(node);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::span<const double> value) {
  Node n;
  n.op = Op::kLeaf;
  n.size = static_cast<std::uint32_t>(value.size());
  n.rows = n.size;
  Var v = push(n, {});
  std::copy(value.begin(), value.end(), val(v.id));
  return v;
}

Var Tape::scalar(double value) { return constant(std::span<const double>(&value, 1)); }

Var Tape::variable(std::span<const double> value) {
  Var v = constant(value);
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::param(ParamId id) {
  require_param_store();
  if (auto it = param_cache_.find(id); it != param_cache_.end()) return it->second;
  const Parameter& p = (*store_)[id];
  Node n;
  n.op = Op::kParam;
  n.pid = id;
  n.size = static_cast<std::uint32_t>(p.value.size());
  n.rows = static_cast<std::uint32_t>(p.value.rows());
  n.cols = static_cast<std::uint32_t>(p.value.rank() == 2 ? p.value.cols() : 1);
  n.requires_grad = p.trainable && !frozen_;
  Var v = push(n, {});
  std::copy(p.value.values().begin(), p.value.values().end(), val(v.id));
  param_cache_.emplace(id, v);
  return v;
}

Var Tape::param_row(ParamId id, std::size_t row) {
  require_param_store();
  const std::uint64_t key = (static_cast<std::uint64_t>(id) << 40) | row;
  if (auto it = row_cache_.find(key); it != row_cache_.end()) return it->second;
  const Parameter& p = (*store_)[id];
  if (p.value.rank() != 2 || row >= p.value.rows()) {
    throw ShapeError("param_row: row " + std::to_string(row) + " out of range for '" +
                     p.name + "' " + p.value.shape_string());
  }
  Node n;
  n.op = Op::kParamRow;
  n.pid = id;
  n.row = row;
  n.size = static_cast<std::uint32_t>(p.value.cols());
  n.rows = n.size;
  n.requires_grad = p.trainable && !frozen_;
  Var v = push(n, {});
  auto r = p.value.row(row);
  std::copy(r.begin(), r.end(), val(v.id));
  row_cache_.emplace(key, v);
  return v;
}

Var Tape::affine(Var W, Var x, Var b) {
  const Node& nw = nodes_.at(W.id);
  const Node& nx = nodes_.at(x.id);
  const Node& nb = nodes_.at(b.id);
  if (nw.cols != nx.size || nw.rows != nb.size || nw.rows * nw.cols != nw.size) {
    throw ShapeError("affine: W[" + std::to_string(nw.rows) + "x" +
                     std::to_string(nw.cols) + "] x[" + std::to_string(nx.size) +
                     "] b[" + std::to_string(nb.size) + "]");
  }
  Node n;
  n.op = Op::kAffine;
  n.size = nw.rows;
  n.rows = n.size;
  const std::uint32_t out = nw.rows, in = nw.cols;
  Var y = push(n, {W, x, b});
  const double* w = val(W.id);
  const double* xv = val(x.id);
  const double* bv = val(b.id);
  double* yv = val(y.id);
  for (std::uint32_t o = 0; o < out; ++o) {
    const double* wr = w + static_cast<std::size_t>(o) * in;
    double s = bv[o];
    for (std::uint32_t i = 0; i < in; ++i) s += wr[i] * xv[i];
    yv[o] = s;
  }
  return y;
}

Var Tape::relu(Var x) {
  Node n;
  n.op = Op::kRelu;
  n.size = nodes_.at(x.id).size;
  n.rows = n.size;
  Var y = push(n, {x});
  const double* xv = val(x.id);
  double* yv = val(y.id);
  for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return y;
}

Var Tape::concat(Var a, Var b) {
  const std::uint32_t na = nodes_.at(a.id).size, nb = nodes_.at(b.id).size;
  Node n;
  n.op = Op::kConcat;
  n.size = na + nb;
  n.rows = n.size;
  Var y = push(n, {a, b});
  std::copy_n(val(a.id), na, val(y.id));
  std::copy_n(val(b.id), nb, val(y.id) + na);
  return y;
}

Var Tape::add(Var a, Var b) {
  if (nodes_.at(a.id).size != nodes_.at(b.id).size) throw ShapeError("add: length mismatch");
  Node n;
  n.op = Op::kAdd;
  n.size = nodes_[a.id].size;
  n.rows = n.size;
  Var y = push(n, {a, b});
  const double* av = val(a.id);
  const double* bv = val(b.id);
  double* yv = val(y.id);
  for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = av[i] + bv[i];
  return y;
}

Var Tape::sub(Var a, Var b) {
  if (nodes_.at(a.id).size != nodes_.at(b.id).size) throw ShapeError("sub: length mismatch");
  Node n;
  n.op = Op::kSub;
  n.size = nodes_[a.id].size;
  n.rows = n.size;
  Var y = push(n, {a, b});
  const double* av = val(a.id);
  const double* bv = val(b.id);
  double* yv = val(y.id);
  for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = av[i] - bv[i];
  return y;
}

Var Tape::scale(Var x, double s) { return affine_scalar(x, s, 0.0); }

Var Tape::affine_scalar(Var x, double a, double b) {
  Node n;
  n.op = Op::kAffineScalar;
  n.size = nodes_.at(x.id).size;
  n.rows = n.size;
  n.a = a;
  n.b = b;
  Var y = push(n, {x});
  const double* xv = val(x.id);
  double* yv = val(y.id);
  for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = a * xv[i] + b;
  return y;
}

Var Tape::dot(Var a, Var b) {
  const std::uint32_t len = nodes_.at(a.id).size;
  if (len != nodes_.at(b.id).size) throw ShapeError("dot: length mismatch");
  Node n;
  n.op = Op::kDot;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {a, b});
  const double* av = val(a.id);
  const double* bv = val(b.id);
  double s = 0.0;
  for (std::uint32_t i = 0; i < len; ++i) s += av[i] * bv[i];
  *val(y.id) = s;
  return y;
}

Var Tape::cosine(Var a, Var b) {
  const std::uint32_t len = nodes_.at(a.id).size;
  if (len != nodes_.at(b.id).size) throw ShapeError("cosine: length mismatch");
  Node n;
  n.op = Op::kCosine;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {a, b});
  const double* av = val(a.id);
  const double* bv = val(b.id);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::uint32_t i = 0; i < len; ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DomainError("cosine: zero-norm input");
  *val(y.id) = ab / (std::sqrt(aa) * std::sqrt(bb));
  return y;
}

Var Tape::map_cosine(Var c) {
  require_scalar(c, "map_cosine");
  Node n;
  n.op = Op::kMapCosine;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {c});
  *val(y.id) = hcars::map_cosine(*val(c.id));
  return y;
}

Var Tape::clamp(Var x, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.size = nodes_.at(x.id).size;
  n.rows = n.size;
  n.a = lo;
  n.b = hi;
  Var y = push(n, {x});
  const double* xv = val(x.id);
  double* yv = val(y.id);
  for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = std::clamp(xv[i], lo, hi);
  return y;
}

Var Tape::log(Var x) {
  require_scalar(x, "log");
  Node n;
  n.op = Op::kLog;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {x});
  const double v = *val(x.id);
  if (!(v > 0.0)) throw DomainError("log: non-positive input");
  *val(y.id) = std::log(v);
  return y;
}

Var Tape::sigmoid(Var x) {
  require_scalar(x, "sigmoid");
  Node n;
  n.op = Op::kSigmoid;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {x});
  *val(y.id) = hcars::sigmoid(*val(x.id));
  return y;
}

Var Tape::log_sigmoid(Var x) {
  require_scalar(x, "log_sigmoid");
  Node n;
  n.op = Op::kLogSigmoid;
  n.size = 1;
  n.rows = 1;
  Var y = push(n, {x});
  *val(y.id) = hcars::log_sigmoid(*val(x.id));
  return y;
}

Var Tape::bce_with_logits(Var logit, double label) {
  require_scalar(logit, "bce_with_logits");
  Node n;
  n.op = Op::kBceLogits;
  n.size = 1;
  n.rows = 1;
  n.a = label;
  Var y = push(n, {logit});
  const double z = *val(logit.id);
  *val(y.id) = softplus(z) - label * z;
  return y;
}

Var Tape::sum(std::span<const Var> xs) {
  if (xs.empty()) return scalar(0.0);
  Node n;
  n.op = Op::kSum;
  n.size = 1;
  n.rows = 1;
  for (Var v : xs) require_scalar(v, "sum");
  Var y = push(n, xs);
  double s = 0.0;
  for (Var v : xs) s += *val(v.id);
  *val(y.id) = s;
  return y;
}

Var Tape::mean(std::span<const Var> xs) {
  if (xs.empty()) return scalar(0.0);
  return scale(sum(xs), 1.0 / static_cast<double>(xs.size()));
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return {values_.data() + n.offset, n.size};
}

double Tape::scalar_value(Var v) const {
  require_scalar(v, "scalar_value");
  return values_[nodes_[v.id].offset];
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return {grads_.data() + n.offset, n.size};
}

void Tape::backward(Var loss) {
  require_scalar(loss, "backward");
  std::fill(grads_.begin(), grads_.end(), 0.0);
  grads_[nodes_[loss.id].offset] = 1.0;

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!n.requires_grad) continue;
    const double* g = grads_.data() + n.offset;
    const double* y = values_.data() + n.offset;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kParam: {
        Parameter& p = (*store_)[n.pid];
        auto pg = p.grad.values();
        for (std::uint32_t i = 0; i < n.size; ++i) pg[i] += g[i];
        break;
      }
      case Op::kParamRow: {
        Parameter& p = (*store_)[n.pid];
        auto pg = p.grad.row(n.row);
        for (std::uint32_t i = 0; i < n.size; ++i) pg[i] += g[i];
        break;
      }
      case Op::kAffine: {
        const std::uint32_t wid = input_id(n, 0), xid = input_id(n, 1), bid = input_id(n, 2);
        const Node& nw = nodes_[wid];
        const std::uint32_t out = nw.rows, in = nw.cols;
        const double* w = val(wid);
        const double* x = val(xid);
        if (nodes_[xid].requires_grad) {
          double* gx = grd(xid);
          for (std::uint32_t o = 0; o < out; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            const double* wr = w + static_cast<std::size_t>(o) * in;
            for (std::uint32_t i = 0; i < in; ++i) gx[i] += wr[i] * go;
          }
        }
        if (nw.requires_grad) {
          double* gw = grd(wid);
          for (std::uint32_t o = 0; o < out; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            double* gr = gw + static_cast<std::size_t>(o) * in;
            for (std::uint32_t i = 0; i < in; ++i) gr[i] += go * x[i];
          }
        }
        if (nodes_[bid].requires_grad) {
          double* gb = grd(bid);
          for (std::uint32_t o = 0; o < out; ++o) gb[o] += g[o];
        }
        break;
      }
      case Op::kRelu: {
        const std::uint32_t xid = input_id(n, 0);
        const double* x = val(xid);
        double* gx = grd(xid);
        for (std::uint32_t i = 0; i < n.size; ++i) {
          if (x[i] > 0.0) gx[i] += g[i];
        }
        break;
      }
      case Op::kConcat: {
        const std::uint32_t aid = input_id(n, 0), bid = input_id(n, 1);
        const std::uint32_t na = nodes_[aid].size;
        if (nodes_[aid].requires_grad) {
          double* ga = grd(aid);
          for (std::uint32_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (nodes_[bid].requires_grad) {
          double* gb = grd(bid);
          for (std::uint32_t i = 0; i < nodes_[bid].size; ++i) gb[i] += g[na + i];
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const std::uint32_t aid = input_id(n, 0), bid = input_id(n, 1);
        if (nodes_[aid].requires_grad) {
          double* ga = grd(aid);
          for (std::uint32_t i = 0; i < n.size; ++i) ga[i] += g[i];
        }
        if (nodes_[bid].requires_grad) {
          double* gb = grd(bid);
          const double sign = n.op == Op::kAdd ? 1.0 : -1.0;
          for (std::uint32_t i = 0; i < n.size; ++i) gb[i] += sign * g[i];
        }
        break;
      }
      case Op::kScale:
      case Op::kAffineScalar: {
        double* gx = grd(input_id(n, 0));
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += n.a * g[i];
        break;
      }
      case Op::kDot: {
        const std::uint32_t aid = input_id(n, 0), bid = input_id(n, 1);
        const std::uint32_t len = nodes_[aid].size;
        const double* a = val(aid);
        const double* b = val(bid);
        if (nodes_[aid].requires_grad) {
          double* ga = grd(aid);
          for (std::uint32_t i = 0; i < len; ++i) ga[i] += g[0] * b[i];
        }
        if (nodes_[bid].requires_grad) {
          double* gb = grd(bid);
          for (std::uint32_t i = 0; i < len; ++i) gb[i] += g[0] * a[i];
        }
        break;
      }
      case Op::kCosine: {
        const std::uint32_t aid = input_id(n, 0), bid = input_id(n, 1);
        const std::uint32_t len = nodes_[aid].size;
        const double* a = val(aid);
        const double* b = val(bid);
        double aa = 0.0, bb = 0.0;
        for (std::uint32_t i = 0; i < len; ++i) {
          aa += a[i] * a[i];
          bb += b[i] * b[i];
        }
        const double na = std::sqrt(aa), nb = std::sqrt(bb);
        const double c = y[0];
        const double go = g[0];
        if (nodes_[aid].requires_grad) {
          double* ga = grd(aid);
          for (std::uint32_t i = 0; i < len; ++i) {
            ga[i] += go * (b[i] / (na * nb) - c * a[i] / aa);
          }
        }
        if (nodes_[bid].requires_grad) {
          double* gb = grd(bid);
          for (std::uint32_t i = 0; i < len; ++i) {
            gb[i] += go * (a[i] / (na * nb) - c * b[i] / bb);
          }
        }
        break;
      }
      case Op::kMapCosine: {
        const std::uint32_t cid = input_id(n, 0);
        const double raw = 0.5 * (1.0 + *val(cid));
        if (raw > kSimFloor && raw < kSimCeil) *grd(cid) += 0.5 * g[0];
        break;
      }
      case Op::kClamp: {
        const std::uint32_t xid = input_id(n, 0);
        const double* x = val(xid);
        double* gx = grd(xid);
        for (std::uint32_t i = 0; i < n.size; ++i) {
          if (x[i] > n.a && x[i] < n.b) gx[i] += g[i];
        }
        break;
      }
      case Op::kLog: {
        const std::uint32_t xid = input_id(n, 0);
        *grd(xid) += g[0] / *val(xid);
        break;
      }
      case Op::kSigmoid: {
        *grd(input_id(n, 0)) += g[0] * y[0] * (1.0 - y[0]);
        break;
      }
      case Op::kLogSigmoid: {
        const std::uint32_t xid = input_id(n, 0);
        *grd(xid) += g[0] * hcars::sigmoid(-*val(xid));
        break;
      }
      case Op::kBceLogits: {
        const std::uint32_t xid = input_id(n, 0);
        *grd(xid) += g[0] * (hcars::sigmoid(*val(xid)) - n.a);
        break;
      }
      case Op::kSum: {
        for (std::uint32_t k = 0; k < n.in_count; ++k) {
          const std::uint32_t xid = input_id(n, k);
          if (nodes_[xid].requires_grad) *grd(xid) += g[0];
        }
        break;
      }
    }
  }
}

}  // namespace hcars
