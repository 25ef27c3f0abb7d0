// Copyright 2026 The cardioseq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cardioseq/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "cardioseq/error.hpp"

namespace cardioseq::ad {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void save_checkpoint(const ParameterSet<float>& params, const json& metadata,
                     const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "cardioseq-checkpoint";
  manifest["version"] = 1;
  manifest["metadata"] = metadata;
  manifest["parameters"] = json::array();
  std::ofstream raw(dir / "params.raw", std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write " + (dir / "params.raw").string());
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    manifest["parameters"].push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    raw.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
    offset += t.size();
  }
  if (!raw) throw IoError("write failed: " + (dir / "params.raw").string());
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing checkpoint manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "cardioseq-checkpoint") {
    throw ValidationError(dir.string() + " is not a cardioseq checkpoint");
  }
  std::error_code ec;
  const auto bytes = fs::file_size(dir / "params.raw", ec);
  if (ec) throw IoError("missing params.raw in " + dir.string());
  std::vector<float> buffer(bytes / sizeof(float));
  std::ifstream raw(dir / "params.raw", std::ios::binary);
  raw.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(bytes));
  if (!raw) throw IoError("read failed: " + (dir / "params.raw").string());

  Checkpoint ck;
  ck.metadata = manifest.value("metadata", json::object());
  for (const auto& p : manifest.at("parameters")) {
    const std::string name = p.at("name").get<std::string>();
    const Shape shape = p.at("shape").get<Shape>();
    const std::size_t offset = p.at("offset").get<std::size_t>();
    const std::size_t count = p.at("count").get<std::size_t>();
    if (count != numel(shape) || offset + count > buffer.size()) {
      throw ValidationError("checkpoint parameter " + name + " has inconsistent extent");
    }
    ck.params.add(name, Tensor<float>::leaf(
                            shape,
                            std::vector<float>(buffer.begin() + static_cast<std::ptrdiff_t>(offset),
                                               buffer.begin() + static_cast<std::ptrdiff_t>(offset + count)),
                            true));
  }
  return ck;
}

}  // namespace cardioseq::ad
