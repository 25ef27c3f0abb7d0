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

#pragma once

// Checkpoint directory:
//   manifest.json  {"format":"cardioseq-checkpoint","version":1,
//                   "metadata":{...},
//                   "parameters":[{"name","shape","offset","count"}...]}
//   params.raw     little-endian float32, concatenated in manifest order.

#include <filesystem>

#include "cardioseq/parameters.hpp"
#include "json.hpp"

namespace cardioseq::ad {

void save_checkpoint(const ParameterSet<float>& params, const nlohmann::json& metadata,
                     const std::filesystem::path& dir);

struct Checkpoint {
  ParameterSet<float> params;
  nlohmann::json metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cardioseq::ad
