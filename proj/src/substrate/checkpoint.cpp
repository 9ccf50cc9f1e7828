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

#include "hcars/substrate/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "hcars/substrate/error.hpp"

namespace hcars {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'C', 'A', 'R', 'S', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native little-endian order");

nlohmann::json describe(const std::string& name, const Tensor& t, bool trainable) {
  return {{"name", name},
          {"rank", t.rank()},
          {"rows", t.rows()},
          {"cols", t.cols()},
          {"trainable", trainable}};
}

Tensor shaped(const nlohmann::json& d) {
  const auto rows = d.at("rows").get<std::size_t>();
  const auto cols = d.at("cols").get<std::size_t>();
  return d.at("rank").get<int>() == 2 ? Tensor(rows, cols) : Tensor(rows);
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint: truncated file");
  return v;
}

void write_values(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_values(std::istream& in, Tensor& t) {
  in.read(reinterpret_cast<char*>(t.values().data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw ParseError("checkpoint: truncated payload");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["meta"] = ckpt.meta;
  header["params"] = nlohmann::json::array();
  for (const auto& p : ckpt.params) header["params"].push_back(describe(p.name, p.value, p.trainable));
  header["extras"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.extras) header["extras"].push_back(describe(name, t, false));
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : ckpt.params) write_values(out, p.value);
  for (const auto& [name, t] : ckpt.extras) write_values(out, t);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError("checkpoint: bad magic in " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.meta = header.at("meta");
  for (const auto& d : header.at("params")) {
    Tensor t = shaped(d);
    read_values(in, t);
    ckpt.params.add(d.at("name").get<std::string>(), std::move(t),
                    d.at("trainable").get<bool>());
  }
  for (const auto& d : header.at("extras")) {
    Tensor t = shaped(d);
    read_values(in, t);
    ckpt.extras.emplace(d.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace hcars
