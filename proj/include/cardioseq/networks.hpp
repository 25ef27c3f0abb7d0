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

// Two U-shaped architectures built from the autodiff operator set:
//
//   SS-Net  stacked (I_a, I_b) -> 3-channel displacement field
//   SS-SL   image branch (intensity, distance map) + motion branch (field)
//           -> per-voxel class probabilities
//
// Encoders: a stride-1 stem, then `depth` stride-2 stages with widths
// base * 2^level. Decoders: nearest 2x upsample, concatenation with the skip
// features of the same level, stride-1 conv. All hidden activations are leaky
// ReLU. In SS-SL both encoders run independently and their per-level
// features are concatenated into the shared decoder's skip path.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cardioseq/parameters.hpp"
#include "json.hpp"

namespace cardioseq {

struct SSNetConfig {
  int base_channels = 8;
  int depth = 4;
  int in_channels = 2;
  int out_channels = 3;
  double leaky_slope = 0.2;
  double head_init_scale = 1e-5;
};

enum class DistanceMapMode {
  kInputChannel,   // image branch sees (intensity, distance map)
  kAttentionMask,  // image branch sees (intensity * (1 - distance map), distance map)
};

struct SSSLConfig {
  int image_in = 2;
  int motion_in = 3;
  int base_channels = 8;
  int depth = 3;
  int num_classes = 2;
  double leaky_slope = 0.2;
  DistanceMapMode distance_mode = DistanceMapMode::kInputChannel;
};

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  bool field_head = false;
};

std::vector<ParamSpec> ssnet_layout(const SSNetConfig& cfg);
std::vector<ParamSpec> sssl_layout(const SSSLConfig& cfg);

void validate(const SSNetConfig& cfg);
void validate(const SSSLConfig& cfg);

// Fan-in scaled Gaussian weights, zero biases; the SS-Net field head is drawn
// uniformly from [-head_init_scale, head_init_scale]. Deterministic per seed.
ad::ParameterSet<float> init_parameters(const SSNetConfig& cfg, std::uint64_t seed);
ad::ParameterSet<float> init_parameters(const SSSLConfig& cfg, std::uint64_t seed);

// Output has the input's spatial extent. Throws ValidationError when an
// extent is not divisible by 2^depth or the inputs disagree.
template <typename T>
ad::Tensor<T> ssnet_forward(const ad::ParameterSet<T>& params, const ad::Tensor<T>& a,
                            const ad::Tensor<T>& b, const SSNetConfig& cfg);

// Returns softmax probabilities (num_classes, X, Y, Z).
template <typename T>
ad::Tensor<T> sssl_forward(const ad::ParameterSet<T>& params, const ad::Tensor<T>& intensity,
                           const ad::Tensor<T>& dist_map, const ad::Tensor<T>& field,
                           const SSSLConfig& cfg);

nlohmann::json to_json(const SSNetConfig& cfg);
nlohmann::json to_json(const SSSLConfig& cfg);
SSNetConfig ssnet_config_from_json(const nlohmann::json& j);
SSSLConfig sssl_config_from_json(const nlohmann::json& j);

// Checkpoints embed the network kind and config; loading validates every
// parameter name and shape against the layout the stored config implies.
void save_network(const ad::ParameterSet<float>& params, const SSNetConfig& cfg,
                  const std::filesystem::path& dir, const nlohmann::json& extra = {});
void save_network(const ad::ParameterSet<float>& params, const SSSLConfig& cfg,
                  const std::filesystem::path& dir, const nlohmann::json& extra = {});

struct SSNetCheckpoint {
  SSNetConfig config;
  ad::ParameterSet<float> params;
  nlohmann::json metadata;
};
struct SSSLCheckpoint {
  SSSLConfig config;
  ad::ParameterSet<float> params;
  nlohmann::json metadata;
};

SSNetCheckpoint load_ssnet(const std::filesystem::path& dir);
SSSLCheckpoint load_sssl(const std::filesystem::path& dir);

// Checks `params` against `layout`; the error names the first offending
// parameter.
void check_layout(const ad::ParameterSet<float>& params, const std::vector<ParamSpec>& layout);

}  // namespace cardioseq
