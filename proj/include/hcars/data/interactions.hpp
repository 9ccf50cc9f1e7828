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
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hcars::data {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// Dense 0-based <-> external id mapping for one axis.
struct IdMap {
  std::vector<std::int64_t> external;  // internal id -> external id

  std::size_t size() const { return external.size(); }
  static IdMap identity(std::size_t n);
};

// Sparse binary user-item matrix Y. Each user's history is kept sorted and
// duplicate-free; the pair set and the per-user histories are one structure.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;
  InteractionMatrix(std::size_t users, std::size_t items);

  // Pairs may arrive in any order; duplicates are collapsed. Out-of-range
  // ids throw ShapeError.
  static InteractionMatrix from_pairs(std::size_t users, std::size_t items,
                                      std::span<const std::pair<UserId, ItemId>> pairs);
  static InteractionMatrix from_histories(std::size_t items,
                                          std::vector<std::vector<ItemId>> histories);

  std::size_t users() const { return histories_.size(); }
  std::size_t items() const { return items_; }
  std::size_t nnz() const { return nnz_; }
  bool empty() const { return nnz_ == 0; }

  std::span<const ItemId> history(UserId u) const;
  bool contains(UserId u, ItemId i) const;
  std::vector<std::pair<UserId, ItemId>> pairs() const;

  // Copy with extra users appended after the existing ids.
  InteractionMatrix with_appended_users(std::span<const std::vector<ItemId>> extra) const;

  friend bool operator==(const InteractionMatrix&, const InteractionMatrix&) = default;

 private:
  std::size_t items_ = 0;
  std::size_t nnz_ = 0;
  std::vector<std::vector<ItemId>> histories_;
};

struct Split {
  InteractionMatrix train;
  InteractionMatrix test;
  double observed_fraction = 1.0;
};

// Per-user uniform split: each user keeps round(f * |I_u|) (at least one)
// interactions in train and the rest in test. Users with fewer than two
// interactions stay entirely in train.
Split split(const InteractionMatrix& matrix, double train_fraction, std::uint64_t seed);

struct PopularityTable {
  std::vector<std::size_t> counts;  // item -> interaction count
  std::vector<ItemId> ranking;      // descending count, ties by ascending id

  // The first ceil(fraction * n) items of the ranking.
  std::vector<ItemId> top_fraction(double fraction) const;
};

PopularityTable popularity(const InteractionMatrix& matrix);

// Newline-delimited `user<TAB>item` plus a JSON sidecar `<path>.json`
// holding {m, n, id_maps}.
void save_matrix(const InteractionMatrix& matrix, const std::filesystem::path& path,
                 const IdMap& users, const IdMap& items);
void save_matrix(const InteractionMatrix& matrix, const std::filesystem::path& path);

struct LoadedMatrix {
  InteractionMatrix matrix;
  IdMap users;
  IdMap items;
};
LoadedMatrix load_matrix(const std::filesystem::path& path);

}  // namespace hcars::data
