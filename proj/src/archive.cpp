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

#include "farnet/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "farnet/errors.hpp"

namespace farnet {

namespace {
constexpr char kMagic[4] = {'F', 'N', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    header["tensors"].push_back({{"name", name}, {"dims", t.dims()}, {"offset", offset}, {"count", t.size()}});
    offset += t.size();
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  const auto tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors)
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp + " (disk full?)");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open archive " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ResourceError(path.string() + " is not a tensor archive");
  if (version != kVersion) throw ResourceError(path.string() + ": unsupported archive version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ResourceError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ResourceError(path.string() + ": bad header: " + e.what());
  }
  const auto data_start = in.tellg();
  TensorArchive archive;
  archive.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("dims").get<std::vector<int>>());
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (entry.at("count").get<std::uint64_t>() != t.size())
      throw ResourceError(path.string() + ": inconsistent entry " + entry.at("name").get<std::string>());
    in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw ResourceError(path.string() + ": truncated payload");
    archive.add(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

}  // namespace farnet
