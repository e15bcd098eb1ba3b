// Copyright 2026 The FARNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Single-file named-tensor archive used for pretrained weights and checkpoints.
//
// Layout (little-endian):
//   bytes 0..3   magic "FNTA"
//   bytes 4..7   uint32 format version (1)
//   bytes 8..15  uint64 length N of the JSON header
//   N bytes      JSON: {"meta": {...}, "tensors": [{"name", "dims", "offset", "count"}, ...]}
//   rest         float32 payload; "offset" counts floats from the payload start

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "farnet/tensor.hpp"

namespace farnet {

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
/// Throws ResourceError when the file is missing, truncated or not an archive.
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace farnet
