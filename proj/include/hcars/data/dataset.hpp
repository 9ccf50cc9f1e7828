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

#include "hcars/data/interactions.hpp"

namespace hcars::data {

enum class Format { kMovieLensTsv, kPairCsv };

Format parse_format(const std::string& name);
std::string format_name(Format f);

struct RatingRecord {
  UserId user;
  ItemId item;
  double rating;
};

// Ratings with external ids remapped to dense internal ids in order of first
// appearance sorted by external id.
struct RawDataset {
  std::vector<RatingRecord> records;
  IdMap users;
  IdMap items;
};

struct LoadOptions {
  bool header = false;  // pair-csv only: skip the first line
};

// movielens-tsv: `user<TAB>item<TAB>rating<TAB>timestamp`.
// pair-csv: `user,item` (rating 1 implied).
RawDataset load_interactions(const std::filesystem::path& path, Format format,
                             const LoadOptions& opts = {});

// Implicit-feedback threshold: 1 iff rating > 4.
int binarize(double rating);

struct Dataset {
  InteractionMatrix matrix;
  IdMap users;
  IdMap items;
};

// Builds the binary matrix. With `binarize_ratings`, ratings are thresholded
// by binarize(); otherwise every record counts as an interaction. Users left
// with an empty history are dropped before user ids are re-densified; the
// item id space is kept whole.
Dataset build_dataset(const RawDataset& raw, bool binarize_ratings);

// Synthetic block dataset: `groups` user groups, each attached to its own
// disjoint block of items. Every user interacts with a random
// `density` fraction (at least one) of its block and nothing else.
Dataset make_block_dataset(std::size_t groups, std::size_t users, std::size_t items,
                           double density, std::uint64_t seed);

// Block of an item/user in a dataset made by make_block_dataset.
std::size_t block_of_user(UserId u, std::size_t groups, std::size_t users);
std::size_t block_of_item(ItemId i, std::size_t groups, std::size_t items);

}  // namespace hcars::data
