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

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "hcars/substrate/param_store.hpp"

namespace hcars {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned binary checkpoint: an 8-byte magic "HCARSCKP", a u32 version,
// a u64 header length, a JSON header (kind, metadata, tensor directory) and
// the raw float64 payload of every tensor in directory order. Values
// round-trip bit-exactly.
struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  ParamStore params;
  std::map<std::string, Tensor> extras;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace hcars
