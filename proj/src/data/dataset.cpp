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

#include "hcars/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "hcars/substrate/error.hpp"
#include "hcars/substrate/rng.hpp"

namespace hcars::data {

Format parse_format(const std::string& name) {
  if (name == "movielens-tsv") return Format::kMovieLensTsv;
  if (name == "pair-csv") return Format::kPairCsv;
  throw PreconditionError("unknown dataset format '" + name + "'");
}

std::string format_name(Format f) {
  return f == Format::kMovieLensTsv ? "movielens-tsv" : "pair-csv";
}

namespace {

std::vector<std::string_view> fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\r')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_real(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && std::isfinite(out);
}

IdMap densify(std::vector<std::int64_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return IdMap{std::move(ids)};
}

std::uint32_t lookup(const IdMap& map, std::int64_t ext) {
  auto it = std::lower_bound(map.external.begin(), map.external.end(), ext);
  return static_cast<std::uint32_t>(it - map.external.begin());
}

}  // namespace

RawDataset load_interactions(const std::filesystem::path& path, Format format,
                             const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());

  struct Ext {
    std::int64_t user, item;
    double rating;
  };
  std::vector<Ext> ext;
  std::string line;
  std::size_t lineno = 0;
  const char sep = format == Format::kMovieLensTsv ? '\t' : ',';
  while (std::getline(in, line)) {
    ++lineno;
    if (format == Format::kPairCsv && opts.header && lineno == 1) continue;
    if (line.empty() || line == "\r") continue;
    const auto f = fields(line, sep);
    Ext e{};
    bool ok;
    if (format == Format::kMovieLensTsv) {
      ok = f.size() == 4 && parse_int(f[0], e.user) && parse_int(f[1], e.item) &&
           parse_real(f[2], e.rating);
      std::int64_t ts;
      ok = ok && parse_int(f[3], ts);
    } else {
      ok = f.size() == 2 && parse_int(f[0], e.user) && parse_int(f[1], e.item);
      e.rating = 1.0;
    }
    if (!ok || e.user < 0 || e.item < 0) {
      throw ParseError(path.string() + ": malformed " + format_name(format) + " line", lineno);
    }
    ext.push_back(e);
  }
  if (ext.empty()) throw PreconditionError(path.string() + ": empty dataset");

  std::vector<std::int64_t> us, is;
  us.reserve(ext.size());
  is.reserve(ext.size());
  for (const auto& e : ext) {
    us.push_back(e.user);
    is.push_back(e.item);
  }
  RawDataset raw;
  raw.users = densify(std::move(us));
  raw.items = densify(std::move(is));
  raw.records.reserve(ext.size());
  for (const auto& e : ext) {
    raw.records.push_back({lookup(raw.users, e.user), lookup(raw.items, e.item), e.rating});
  }
  return raw;
}

int binarize(double rating) { return rating > 4.0 ? 1 : 0; }

Dataset build_dataset(const RawDataset& raw, bool binarize_ratings) {
  std::vector<std::vector<ItemId>> hist(raw.users.size());
  for (const auto& r : raw.records) {
    if (!binarize_ratings || binarize(r.rating) == 1) hist[r.user].push_back(r.item);
  }
  Dataset ds;
  ds.items = raw.items;
  std::vector<std::vector<ItemId>> kept;
  for (std::size_t u = 0; u < hist.size(); ++u) {
    if (hist[u].empty()) continue;
    kept.push_back(std::move(hist[u]));
    ds.users.external.push_back(raw.users.external[u]);
  }
  ds.matrix = InteractionMatrix::from_histories(raw.items.size(), std::move(kept));
  return ds;
}

std::size_t block_of_user(UserId u, std::size_t groups, std::size_t users) {
  return static_cast<std::size_t>(u) * groups / users;
}

std::size_t block_of_item(ItemId i, std::size_t groups, std::size_t items) {
  return static_cast<std::size_t>(i) * groups / items;
}

Dataset make_block_dataset(std::size_t groups, std::size_t users, std::size_t items,
                           double density, std::uint64_t seed) {
  if (groups == 0 || users < groups || items < groups) {
    throw PreconditionError("block dataset needs at least one user and item per group");
  }
  if (!(density > 0.0 && density <= 1.0)) throw PreconditionError("density must lie in (0, 1]");
  Rng rng = Rng(seed).split("block-dataset");
  std::vector<std::vector<ItemId>> block_items(groups);
  for (ItemId i = 0; i < items; ++i) block_items[block_of_item(i, groups, items)].push_back(i);
  std::vector<std::vector<ItemId>> hist(users);
  for (UserId u = 0; u < users; ++u) {
    const auto& pool = block_items[block_of_user(u, groups, users)];
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(density * static_cast<double>(pool.size()))));
    for (std::size_t j : rng.sample_without_replacement(pool.size(), k)) hist[u].push_back(pool[j]);
  }
  Dataset ds;
  ds.matrix = InteractionMatrix::from_histories(items, std::move(hist));
  ds.users = IdMap::identity(users);
  ds.items = IdMap::identity(items);
  return ds;
}

}  // namespace hcars::data
