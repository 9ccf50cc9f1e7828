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

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hcars/substrate/adam.hpp"
#include "hcars/substrate/checkpoint.hpp"
#include "hcars/substrate/error.hpp"
#include "hcars/substrate/gradient_check.hpp"
#include "hcars/substrate/ops.hpp"
#include "hcars/substrate/rng.hpp"
#include "hcars/substrate/tape.hpp"

namespace hcars {
namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor random_vector(std::size_t n, Rng& rng) {
  Tensor t(n);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

TEST_CASE("affine: diagonal map and zero input") {
  auto W = Tensor::matrix({{2, 0}, {0, 3}});
  auto y = affine(std::vector<double>{1, 0}, W, std::vector<double>{0, 0});
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 0.0);

  Rng rng(3);
  auto W2 = random_tensor(2, 2, rng);
  auto y2 = affine(std::vector<double>{0, 0}, W2, std::vector<double>{5, -1});
  CHECK(y2[0] == 5.0);
  CHECK(y2[1] == -1.0);
}

TEST_CASE("affine: dimension mismatch throws ShapeError") {
  Tensor W(3, 4);
  CHECK_THROWS_AS(affine(std::vector<double>(3, 1.0), W, std::vector<double>(3, 0.0)),
                  ShapeError);
  CHECK_THROWS_AS(affine(std::vector<double>(4, 1.0), W, std::vector<double>(2, 0.0)),
                  ShapeError);
  ParamStore store;
  auto w = store.add("W", Tensor(3, 4));
  auto b = store.add("b", Tensor(3));
  Tape tape(store);
  CHECK_THROWS_AS(tape.affine(tape.param(w), tape.constant(std::vector<double>(5, 0.0)),
                              tape.param(b)),
                  ShapeError);
}

TEST_CASE("affine: random 4->3 gradients match central differences") {
  Rng rng(11);
  ParamStore store;
  auto W = store.add("W", random_tensor(3, 4, rng));
  auto b = store.add("b", random_vector(3, rng));
  auto x = store.add("x", random_vector(4, rng));
  const Tensor probe = random_vector(3, rng);
  auto loss = [&](Tape& t) {
    Var y = t.affine(t.param(W), t.param(x), t.param(b));
    return t.dot(y, t.constant(probe.values()));
  };
  auto res = gradient_check(loss, store);
  CHECK(res.coordinates_checked == 19);
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("relu: values and gradient mask") {
  auto y = relu(std::vector<double>{-1, 0, 2});
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
  auto z = relu(std::vector<double>{-3, -0.5, -7});
  for (double v : z.values()) CHECK(v == 0.0);

  // Points kept away from the kink so finite differences are valid.
  ParamStore store;
  auto x = store.add("x", Tensor::vector({-1.3, 0.7, 2.1, -0.4, 0.9}));
  const Tensor probe = Tensor::vector({0.5, -1.0, 2.0, 1.5, -0.25});
  Tape tape(store);
  Var out = tape.dot(tape.relu(tape.param(x)), tape.constant(probe.values()));
  tape.backward(out);
  const auto& g = store[x].grad;
  for (std::size_t i = 0; i < 5; ++i) {
    const double mask = store[x].value[i] > 0 ? 1.0 : 0.0;
    CHECK(g[i] == doctest::Approx(mask * probe[i]));
  }
  store.zero_grad();
  auto res = gradient_check(
      [&](Tape& t) { return t.dot(t.relu(t.param(x)), t.constant(probe.values())); }, store);
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("cosine_sim: identical, orthogonal, antiparallel, zero-norm") {
  std::vector<double> a{0.3, -1.2, 4.0};
  CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
  CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_sim(std::vector<double>{1, 1}, std::vector<double>{-1, -1}) ==
        doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_sim(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                  DomainError);
}

TEST_CASE("sim_hat: clamped mapping of cosine") {
  std::vector<double> a{0.3, -1.2, 4.0};
  CHECK(sim_hat(a, a) == kSimCeil);
  CHECK(sim_hat(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.5);
  CHECK(sim_hat(std::vector<double>{1, 1}, std::vector<double>{-1, -1}) == kSimFloor);
}

TEST_CASE("property: cosine symmetric, sim_hat(a,a) near one, finite outputs") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(16);
    auto a = random_vector(n, rng);
    auto b = random_vector(n, rng);
    const double scale = std::exp(rng.uniform(-20.0, 20.0));
    for (double& v : a.values()) v *= scale;
    CHECK(cosine_sim(a.values(), b.values()) == cosine_sim(b.values(), a.values()));
    CHECK(sim_hat(a.values(), a.values()) >= 1.0 - 1e-6);
    const double s = sim_hat(a.values(), b.values());
    CHECK(std::isfinite(s));
    CHECK(s >= kSimFloor);
    CHECK(s <= kSimCeil);
  }
}

TEST_CASE("tape ops agree with plain ops") {
  Rng rng(21);
  ParamStore store;
  auto W = store.add("W", random_tensor(5, 6, rng));
  auto b = store.add("b", random_vector(5, rng));
  const Tensor x = random_vector(6, rng);
  const Tensor other = random_vector(5, rng);
  Tape tape(store);
  Var h = tape.relu(tape.affine(tape.param(W), tape.constant(x.values()), tape.param(b)));
  Var s = tape.sim_hat(h, tape.constant(other.values()));
  const Tensor ref = relu(affine(x.values(), store[W].value, store[b].value.values()).values());
  auto got = tape.value(h);
  for (std::size_t i = 0; i < 5; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  CHECK(tape.scalar_value(s) == doctest::Approx(sim_hat(ref.values(), other.values())));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(1);
  ParamStore store;
  auto p = store.add("p", random_tensor(3, 3, rng));
  const Tensor before = store[p].value;
  adam_step(store, 0.001);
  CHECK(store[p].value == before);
  CHECK(store.step_count() == 1);
}

TEST_CASE("adam: first step with constant gradient is -lr*sign(g)") {
  ParamStore store;
  auto p = store.add("p", Tensor::vector({1.0, -2.0, 0.5, 3.0}));
  const std::vector<double> g{0.7, -3.0, 1e-3, -42.0};
  for (std::size_t i = 0; i < g.size(); ++i) store[p].grad[i] = g[i];
  const Tensor before = store[p].value;
  const double lr = 0.001;
  adam_step(store, lr);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // Closed form: lr * g / (|g| + eps).
    const double expected = -lr * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(store[p].value[i] - before[i] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(store[p].value[i] - before[i] == doctest::Approx(-lr * (g[i] > 0 ? 1 : -1)).epsilon(1e-4));
  }
}

TEST_CASE("adam: shape mismatch and determinism") {
  ParamStore store;
  store.add("p", Tensor(2, 2));
  std::vector<Tensor> bad{Tensor(3)};
  CHECK_THROWS_AS(adam_step(store, bad, 0.01), ShapeError);

  auto run = [] {
    Rng rng(99);
    ParamStore s;
    auto w = s.add("w", random_tensor(4, 4, rng));
    for (int step = 0; step < 25; ++step) {
      for (double& g : s[w].grad.values()) g = rng.normal();
      adam_step(s, 0.01);
    }
    return s[w].value;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient_check: affine+relu+cosine composite") {
  Rng rng(8);
  ParamStore store;
  auto W1 = store.add("W1", random_tensor(6, 4, rng));
  auto b1 = store.add("b1", random_vector(6, rng));
  auto W2 = store.add("W2", random_tensor(3, 6, rng));
  auto b2 = store.add("b2", random_vector(3, rng));
  const Tensor x = random_vector(4, rng);
  const Tensor anchor = random_vector(3, rng);
  auto loss = [&](Tape& t) {
    Var h = t.relu(t.affine(t.param(W1), t.constant(x.values()), t.param(b1)));
    Var y = t.affine(t.param(W2), h, t.param(b2));
    return t.scale(t.log(t.sim_hat(y, t.constant(anchor.values()))), -1.0);
  };
  auto res = gradient_check(loss, store);
  CHECK(res.coordinates_checked >= 50);
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("gradient_check: linear model is exact, corrupted gradient is flagged") {
  Rng rng(13);
  ParamStore store;
  auto W = store.add("W", random_tensor(5, 8, rng));
  auto b = store.add("b", random_vector(5, rng));
  const Tensor x = random_vector(8, rng);
  const Tensor probe = random_vector(5, rng);
  auto loss = [&](Tape& t) {
    return t.dot(t.affine(t.param(W), t.constant(x.values()), t.param(b)),
                 t.constant(probe.values()));
  };
  CHECK(gradient_check(loss, store).max_relative_error < 1e-7);

  auto grads = analytic_gradients(loss, store);
  for (auto& g : grads) {
    for (double& v : g.values()) v *= 2.0;
  }
  auto bad = compare_gradients(loss, store, grads);
  CHECK(bad.max_relative_error == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("gradient_check: non-finite loss raises NumericError") {
  ParamStore store;
  auto p = store.add("p", Tensor::vector({1.0, 2.0}));
  auto loss = [&](Tape& t) {
    return t.scale(t.dot(t.param(p), t.param(p)), std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(gradient_check(loss, store), NumericError);
}

TEST_CASE("tape: frozen parameters receive no gradient, variables do") {
  ParamStore store;
  auto w = store.add("w", Tensor::vector({1.0, 2.0}));
  Tape tape(store);
  tape.set_frozen(true);
  Var v = tape.variable(std::vector<double>{3.0, -1.0});
  Var loss = tape.dot(tape.param(w), v);
  tape.backward(loss);
  CHECK(store[w].grad[0] == 0.0);
  CHECK(tape.grad(v)[0] == 1.0);
  CHECK(tape.grad(v)[1] == 2.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(4);
  Checkpoint ckpt;
  ckpt.kind = "test";
  ckpt.meta = {{"seed", 4}};
  ckpt.params.add("a", random_tensor(7, 3, rng));
  ckpt.params.add("b", random_vector(5, rng), false);
  ckpt.extras.emplace("anchor", random_vector(3, rng));
  auto path = std::filesystem::temp_directory_path() / "hcars_ckpt_test.bin";
  write_checkpoint(path, ckpt);
  auto back = read_checkpoint(path);
  CHECK(back.kind == "test");
  CHECK(back.meta["seed"] == 4);
  REQUIRE(back.params.size() == 2);
  CHECK(back.params[0].value == ckpt.params[0].value);
  CHECK(back.params[1].value == ckpt.params[1].value);
  CHECK_FALSE(back.params[1].trainable);
  CHECK(back.extras.at("anchor") == ckpt.extras.at("anchor"));
  std::filesystem::remove(path);
}

TEST_CASE("rng: split streams are deterministic and distinct") {
  Rng a(42), b(42);
  CHECK(a.split("x").next_u64() == b.split("x").next_u64());
  CHECK(a.split("x").next_u64() != a.split("y").next_u64());
  CHECK(a.split(1).next_u64() != a.split(2).next_u64());
  auto s = a.sample_without_replacement(100, 10);
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  auto dense = a.sample_without_replacement(10, 10);
  std::sort(dense.begin(), dense.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(dense[i] == i);
}

}  // namespace
}  // namespace hcars
