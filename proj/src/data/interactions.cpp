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

#include "hcars/data/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars::data {

IdMap IdMap::identity(std::size_t n) {
  IdMap m;
  m.external.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.external[i] = static_cast<std::int64_t>(i);
  return m;
}

InteractionMatrix::InteractionMatrix(std::size_t users, std::size_t items)
    : items_(items), histories_(users) {}

InteractionMatrix InteractionMatrix::from_pairs(
    std::size_t users, std::size_t items,
    std::span<const std::pair<UserId, ItemId>> pairs) {
  InteractionMatrix m(users, items);
  for (const auto& [u, i] : pairs) {
    if (u >= users || i >= items) {
      throw ShapeError("interaction (" + std::to_string(u) + ", " + std::to_string(i) +
                       ") outside " + std::to_string(users) + "x" + std::to_string(items));
    }
    m.histories_[u].push_back(i);
  }
  for (auto& h : m.histories_) {
    std::sort(h.begin(), h.end());
    h.erase(std::unique(h.begin(), h.end()), h.end());
    m.nnz_ += h.size();
  }
  return m;
}

InteractionMatrix InteractionMatrix::from_histories(
    std::size_t items, std::vector<std::vector<ItemId>> histories) {
  InteractionMatrix m;
  m.items_ = items;
  m.histories_ = std::move(histories);
  for (auto& h : m.histories_) {
    std::sort(h.begin(), h.end());
    h.erase(std::unique(h.begin(), h.end()), h.end());
    if (!h.empty() && h.back() >= items) throw ShapeError("item id out of range");
    m.nnz_ += h.size();
  }
  return m;
}

std::span<const ItemId> InteractionMatrix::history(UserId u) const {
  if (u >= histories_.size()) throw ShapeError("user id out of range");
  return histories_[u];
}

bool InteractionMatrix::contains(UserId u, ItemId i) const {
  const auto h = history(u);
  return std::binary_search(h.begin(), h.end(), i);
}

std::vector<std::pair<UserId, ItemId>> InteractionMatrix::pairs() const {
  std::vector<std::pair<UserId, ItemId>> out;
  out.reserve(nnz_);
  for (std::size_t u = 0; u < histories_.size(); ++u) {
    for (ItemId i : histories_[u]) out.emplace_back(static_cast<UserId>(u), i);
  }
  return out;
}

InteractionMatrix InteractionMatrix::with_appended_users(
    std::span<const std::vector<ItemId>> extra) const {
  auto histories = histories_;
  histories.insert(histories.end(), extra.begin(), extra.end());
  return from_histories(items_, std::move(histories));
}

Split split(const InteractionMatrix& matrix, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw PreconditionError("train_fraction must lie in (0, 1)");
  }
  const Rng root = Rng(seed).split("split");
  std::vector<std::vector<ItemId>> train(matrix.users());
  std::vector<std::vector<ItemId>> test(matrix.users());
  for (UserId u = 0; u < matrix.users(); ++u) {
    const auto h = matrix.history(u);
    if (h.size() < 2) {
      train[u].assign(h.begin(), h.end());
      continue;
    }
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(h.size()))));
    Rng rng = root.split(static_cast<std::uint64_t>(u));
    std::vector<ItemId> items(h.begin(), h.end());
    rng.shuffle(items);
    train[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
    test[u].assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
  }
  return Split{InteractionMatrix::from_histories(matrix.items(), std::move(train)),
               InteractionMatrix::from_histories(matrix.items(), std::move(test)),
               train_fraction};
}

std::vector<ItemId> PopularityTable::top_fraction(double fraction) const {
  const auto k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(ranking.size()) - 1e-9));
  return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

PopularityTable popularity(const InteractionMatrix& matrix) {
  PopularityTable t;
  t.counts.assign(matrix.items(), 0);
  for (UserId u = 0; u < matrix.users(); ++u) {
    for (ItemId i : matrix.history(u)) ++t.counts[i];
  }
  t.ranking.resize(matrix.items());
  for (std::size_t i = 0; i < t.ranking.size(); ++i) t.ranking[i] = static_cast<ItemId>(i);
  std::stable_sort(t.ranking.begin(), t.ranking.end(), [&](ItemId a, ItemId b) {
    return t.counts[a] > t.counts[b];
  });
  return t;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_matrix(const InteractionMatrix& matrix, const std::filesystem::path& path,
                 const IdMap& users, const IdMap& items) {
  if (users.size() != matrix.users() || items.size() != matrix.items()) {
    throw ShapeError("id map does not match matrix shape");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [u, i] : matrix.pairs()) out << u << '\t' << i << '\n';
  nlohmann::json meta = {{"m", matrix.users()},
                         {"n", matrix.items()},
                         {"id_maps", {{"users", users.external}, {"items", items.external}}}};
  std::ofstream side(sidecar(path));
  if (!side) throw Error("cannot write " + sidecar(path).string());
  side << meta.dump() << '\n';
}

void save_matrix(const InteractionMatrix& matrix, const std::filesystem::path& path) {
  save_matrix(matrix, path, IdMap::identity(matrix.users()), IdMap::identity(matrix.items()));
}

LoadedMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream side(sidecar(path));
  if (!side) throw Error("missing sidecar " + sidecar(path).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(sidecar(path).string() + ": " + e.what());
  }
  const auto m = meta.at("m").get<std::size_t>();
  const auto n = meta.at("n").get<std::size_t>();
  LoadedMatrix out;
  out.users.external = meta.at("id_maps").at("users").get<std::vector<std::int64_t>>();
  out.items.external = meta.at("id_maps").at("items").get<std::vector<std::int64_t>>();

  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::pair<UserId, ItemId>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long u = -1, i = -1;
    if (!(ss >> u >> i) || u < 0 || i < 0) {
      throw ParseError(path.string() + ": malformed pair", lineno);
    }
    pairs.emplace_back(static_cast<UserId>(u), static_cast<ItemId>(i));
  }
  out.matrix = InteractionMatrix::from_pairs(m, n, pairs);
  return out;
}

}  // namespace hcars::data
