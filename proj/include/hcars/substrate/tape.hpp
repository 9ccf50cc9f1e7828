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
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "hcars/substrate/param_store.hpp"

namespace hcars {

// Handle to a node recorded on a Tape. Only meaningful for the tape that
// created it and only until that tape is cleared.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode automatic differentiation over small dense vectors.
//
// Every node holds a vector value (scalars are length-1 vectors). Parameter
// leaves read from a bound ParamStore; backward() accumulates their
// gradients into ParamStore::grad. Leaves created with variable() expose
// their gradient through grad() instead.
class Tape {
 public:
  Tape() = default;
  explicit Tape(ParamStore& store) : store_(&store) {}

  void bind(ParamStore& store);
  ParamStore* store() const { return store_; }

  // While frozen, newly referenced parameters contribute no gradient.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  Var constant(std::span<const double> value);
  Var scalar(double value);
  Var variable(std::span<const double> value);
  Var param(ParamId id);
  Var param_row(ParamId id, std::size_t row);

  // y = W x + b; W must be a rank-2 parameter (or variable) node.
  Var affine(Var W, Var x, Var b);
  Var relu(Var x);
  Var concat(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  // Elementwise a*x + b on a node of any length.
  Var affine_scalar(Var x, double a, double b);

  // Scalar-valued reductions and maps.
  Var dot(Var a, Var b);
  Var cosine(Var a, Var b);
  // (1 + c) / 2 clamped to [kSimFloor, kSimCeil]; zero gradient when clamped.
  Var map_cosine(Var c);
  Var clamp(Var x, double lo, double hi);
  Var sim_hat(Var a, Var b) { return map_cosine(cosine(a, b)); }
  Var log(Var x);
  Var sigmoid(Var x);
  Var log_sigmoid(Var x);
  Var bce_with_logits(Var logit, double label);
  Var sum(std::span<const Var> xs);
  Var mean(std::span<const Var> xs);

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const;
  std::span<const double> grad(Var v) const;
  std::size_t size(Var v) const { return nodes_.at(v.id).size; }
  std::size_t num_nodes() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and propagates to every leaf. `loss` must be
  // a scalar. May be called once per recorded graph.
  void backward(Var loss);

  // Drops all nodes but keeps allocated capacity.
  void clear();

 private:
  enum class Op : std::uint8_t {
    kLeaf, kParam, kParamRow, kAffine, kRelu, kConcat, kAdd, kSub, kScale,
    kAffineScalar, kDot, kCosine, kMapCosine, kClamp, kLog, kSigmoid, kLogSigmoid,
    kBceLogits, kSum
  };

  struct Node {
    Op op = Op::kLeaf;
    bool requires_grad = false;
    std::uint32_t offset = 0;
    std::uint32_t size = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 1;
    std::uint32_t in_begin = 0;
    std::uint32_t in_count = 0;
    double a = 0.0;
    double b = 0.0;
    ParamId pid = 0;
    std::size_t row = 0;
  };

  Var push(Node node, std::initializer_list<Var> inputs);
  Var push(Node node, std::span<const Var> inputs);
  double* val(std::uint32_t node) { return values_.data() + nodes_[node].offset; }
  const double* val(std::uint32_t node) const {
    return values_.data() + nodes_[node].offset;
  }
  double* grd(std::uint32_t node) { return grads_.data() + nodes_[node].offset; }
  const Node& input(const Node& n, std::uint32_t k) const {
    return nodes_[inputs_[n.in_begin + k]];
  }
  std::uint32_t input_id(const Node& n, std::uint32_t k) const {
    return inputs_[n.in_begin + k];
  }
  void require_scalar(Var v, const char* op) const;
  void require_param_store() const;

  ParamStore* store_ = nullptr;
  bool frozen_ = false;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> inputs_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::unordered_map<ParamId, Var> param_cache_;
  std::unordered_map<std::uint64_t, Var> row_cache_;
};

}  // namespace hcars
