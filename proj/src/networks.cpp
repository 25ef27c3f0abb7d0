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

#include "cardioseq/networks.hpp"

#include <cmath>
#include <random>

#include "cardioseq/checkpoint.hpp"
#include "cardioseq/error.hpp"
#include "cardioseq/ops.hpp"

namespace cardioseq {

using ad::Tensor;
using nlohmann::json;

namespace {

int width(int base, int level) { return base << level; }

void add_conv(std::vector<ParamSpec>& out, const std::string& name, int cin, int cout,
              bool head = false) {
  out.push_back({name + ".w", {cout, cin, 3, 3, 3}, head});
  out.push_back({name + ".b", {cout}, head});
}

// Encoder layers "<prefix>enc<l>"; returns per-level output widths.
std::vector<int> add_encoder(std::vector<ParamSpec>& out, const std::string& prefix, int in,
                             int base, int depth) {
  std::vector<int> widths;
  int prev = in;
  for (int l = 0; l <= depth; ++l) {
    const int w = width(base, l);
    add_conv(out, prefix + "enc" + std::to_string(l), prev, w);
    widths.push_back(w);
    prev = w;
  }
  return widths;
}

void add_decoder(std::vector<ParamSpec>& out, const std::vector<int>& skip_widths,
                 int base, int depth) {
  int below = skip_widths[depth];
  for (int l = depth - 1; l >= 0; --l) {
    const int w = width(base, l);
    add_conv(out, "dec" + std::to_string(l), below + skip_widths[l], w);
    below = w;
  }
}

void check_extents(const Dims& d, int depth, const char* net) {
  const int m = 1 << depth;
  if (d.nx % m || d.ny % m || d.nz % m) {
    throw ValidationError(std::string(net) + ": extent " + to_string(d) +
                          " not divisible by 2^depth = " + std::to_string(m));
  }
}

template <typename T>
Tensor<T> conv_layer(const ad::ParameterSet<T>& p, const std::string& name, const Tensor<T>& x,
                     int stride) {
  return ad::conv3d(x, p.at(name + ".w"), p.at(name + ".b"), stride, 1);
}

template <typename T>
std::vector<Tensor<T>> run_encoder(const ad::ParameterSet<T>& p, const std::string& prefix,
                                   Tensor<T> x, int depth, T slope) {
  std::vector<Tensor<T>> feats;
  for (int l = 0; l <= depth; ++l) {
    x = ad::leaky_relu(conv_layer(p, prefix + "enc" + std::to_string(l), x, l == 0 ? 1 : 2),
                       slope);
    feats.push_back(x);
  }
  return feats;
}

template <typename T>
Tensor<T> run_decoder(const ad::ParameterSet<T>& p, const std::vector<Tensor<T>>& skips,
                      int depth, T slope) {
  Tensor<T> x = skips[depth];
  for (int l = depth - 1; l >= 0; --l) {
    x = ad::concat_channels(ad::upsample_nearest2x(x), skips[l]);
    x = ad::leaky_relu(conv_layer(p, "dec" + std::to_string(l), x, 1), slope);
  }
  return x;
}

ad::ParameterSet<float> init_from_layout(const std::vector<ParamSpec>& layout,
                                         double head_scale, double slope, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::ParameterSet<float> params;
  for (const auto& spec : layout) {
    std::vector<float> values(ad::numel(spec.shape), 0.0f);
    const bool is_weight = spec.shape.size() == 5;
    if (spec.field_head) {
      std::uniform_real_distribution<double> u(-head_scale, head_scale);
      for (float& v : values) v = static_cast<float>(u(rng));
    } else if (is_weight) {
      const double fan_in = static_cast<double>(spec.shape[1]) * 27.0;
      const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
      std::normal_distribution<double> n(0.0, stddev);
      for (float& v : values) v = static_cast<float>(n(rng));
    }
    params.add(spec.name, Tensor<float>::leaf(spec.shape, std::move(values), true));
  }
  return params;
}

}  // namespace

void validate(const SSNetConfig& cfg) {
  if (cfg.depth < 1) throw ValidationError("ssnet: depth must be >= 1");
  if (cfg.base_channels < 1 || cfg.in_channels < 1 || cfg.out_channels < 1) {
    throw ValidationError("ssnet: channel counts must be positive");
  }
}

void validate(const SSSLConfig& cfg) {
  if (cfg.depth < 1) throw ValidationError("sssl: depth must be >= 1");
  if (cfg.base_channels < 1 || cfg.image_in < 1 || cfg.motion_in < 1) {
    throw ValidationError("sssl: channel counts must be positive");
  }
  if (cfg.num_classes < 2) throw ValidationError("sssl: need at least 2 classes");
}

std::vector<ParamSpec> ssnet_layout(const SSNetConfig& cfg) {
  validate(cfg);
  std::vector<ParamSpec> out;
  const auto widths = add_encoder(out, "", cfg.in_channels, cfg.base_channels, cfg.depth);
  add_decoder(out, widths, cfg.base_channels, cfg.depth);
  add_conv(out, "head", cfg.base_channels, cfg.out_channels, true);
  return out;
}

std::vector<ParamSpec> sssl_layout(const SSSLConfig& cfg) {
  validate(cfg);
  std::vector<ParamSpec> out;
  const auto wi = add_encoder(out, "img.", cfg.image_in, cfg.base_channels, cfg.depth);
  const auto wm = add_encoder(out, "mot.", cfg.motion_in, cfg.base_channels, cfg.depth);
  std::vector<int> fused(wi.size());
  for (std::size_t l = 0; l < wi.size(); ++l) fused[l] = wi[l] + wm[l];
  add_decoder(out, fused, cfg.base_channels, cfg.depth);
  add_conv(out, "head", cfg.base_channels, cfg.num_classes);
  return out;
}

ad::ParameterSet<float> init_parameters(const SSNetConfig& cfg, std::uint64_t seed) {
  return init_from_layout(ssnet_layout(cfg), cfg.head_init_scale, cfg.leaky_slope, seed);
}

ad::ParameterSet<float> init_parameters(const SSSLConfig& cfg, std::uint64_t seed) {
  return init_from_layout(sssl_layout(cfg), 0.0, cfg.leaky_slope, seed);
}

template <typename T>
Tensor<T> ssnet_forward(const ad::ParameterSet<T>& params, const Tensor<T>& a,
                        const Tensor<T>& b, const SSNetConfig& cfg) {
  if (a.shape() != b.shape()) throw ValidationError("ssnet: input shapes differ");
  check_extents(a.spatial(), cfg.depth, "ssnet");
  const T slope = static_cast<T>(cfg.leaky_slope);
  const auto feats = run_encoder(params, "", ad::concat_channels(a, b), cfg.depth, slope);
  const Tensor<T> x = run_decoder(params, feats, cfg.depth, slope);
  return conv_layer(params, "head", x, 1);
}

template <typename T>
Tensor<T> sssl_forward(const ad::ParameterSet<T>& params, const Tensor<T>& intensity,
                       const Tensor<T>& dist_map, const Tensor<T>& field,
                       const SSSLConfig& cfg) {
  if (!(intensity.spatial() == dist_map.spatial()) || !(intensity.spatial() == field.spatial())) {
    throw ValidationError("sssl: input extents differ");
  }
  if (field.channels() != cfg.motion_in) {
    throw ValidationError("sssl: motion branch expects " + std::to_string(cfg.motion_in) +
                          " channels");
  }
  check_extents(intensity.spatial(), cfg.depth, "sssl");
  const T slope = static_cast<T>(cfg.leaky_slope);
  Tensor<T> image = intensity;
  if (cfg.distance_mode == DistanceMapMode::kAttentionMask) {
    std::vector<T> gate(dist_map.size());
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = T(1) - dist_map.value()[i];
    image = ad::mul(intensity, Tensor<T>::leaf(dist_map.shape(), std::move(gate)));
  }
  const auto fi = run_encoder(params, "img.", ad::concat_channels(image, dist_map), cfg.depth,
                              slope);
  const auto fm = run_encoder(params, "mot.", field, cfg.depth, slope);
  std::vector<Tensor<T>> fused;
  for (std::size_t l = 0; l < fi.size(); ++l) fused.push_back(ad::concat_channels(fi[l], fm[l]));
  const Tensor<T> x = run_decoder(params, fused, cfg.depth, slope);
  return ad::softmax_channels(conv_layer(params, "head", x, 1));
}

json to_json(const SSNetConfig& c) {
  return {{"base_channels", c.base_channels}, {"depth", c.depth},
          {"in_channels", c.in_channels},     {"out_channels", c.out_channels},
          {"leaky_slope", c.leaky_slope},     {"head_init_scale", c.head_init_scale}};
}

json to_json(const SSSLConfig& c) {
  return {{"image_in", c.image_in},
          {"motion_in", c.motion_in},
          {"base_channels", c.base_channels},
          {"depth", c.depth},
          {"num_classes", c.num_classes},
          {"leaky_slope", c.leaky_slope},
          {"distance_mode",
           c.distance_mode == DistanceMapMode::kInputChannel ? "input_channel" : "attention_mask"}};
}

SSNetConfig ssnet_config_from_json(const json& j) {
  SSNetConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depth = j.value("depth", c.depth);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.head_init_scale = j.value("head_init_scale", c.head_init_scale);
  validate(c);
  return c;
}

SSSLConfig sssl_config_from_json(const json& j) {
  SSSLConfig c;
  c.image_in = j.value("image_in", c.image_in);
  c.motion_in = j.value("motion_in", c.motion_in);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depth = j.value("depth", c.depth);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  const std::string mode = j.value("distance_mode", std::string("input_channel"));
  if (mode == "input_channel") {
    c.distance_mode = DistanceMapMode::kInputChannel;
  } else if (mode == "attention_mask") {
    c.distance_mode = DistanceMapMode::kAttentionMask;
  } else {
    throw ValidationError("unknown distance_mode: " + mode);
  }
  validate(c);
  return c;
}

void check_layout(const ad::ParameterSet<float>& params, const std::vector<ParamSpec>& layout) {
  for (const auto& spec : layout) {
    if (!params.contains(spec.name)) {
      throw ValidationError("checkpoint is missing parameter " + spec.name);
    }
    const auto& t = params.at(spec.name);
    if (t.shape() != spec.shape) {
      throw ValidationError("parameter " + spec.name + " has shape " +
                            ad::shape_string(t.shape()) + ", expected " +
                            ad::shape_string(spec.shape));
    }
  }
  if (params.size() != layout.size()) {
    for (const auto& [name, t] : params) {
      bool known = false;
      for (const auto& spec : layout) known = known || spec.name == name;
      if (!known) throw ValidationError("unexpected parameter " + name + " in checkpoint");
    }
  }
}

void save_network(const ad::ParameterSet<float>& params, const SSNetConfig& cfg,
                  const std::filesystem::path& dir, const json& extra) {
  check_layout(params, ssnet_layout(cfg));
  json meta = {{"network", "ssnet"}, {"config", to_json(cfg)}};
  if (!extra.is_null()) meta["extra"] = extra;
  ad::save_checkpoint(params, meta, dir);
}

void save_network(const ad::ParameterSet<float>& params, const SSSLConfig& cfg,
                  const std::filesystem::path& dir, const json& extra) {
  check_layout(params, sssl_layout(cfg));
  json meta = {{"network", "sssl"}, {"config", to_json(cfg)}};
  if (!extra.is_null()) meta["extra"] = extra;
  ad::save_checkpoint(params, meta, dir);
}

SSNetCheckpoint load_ssnet(const std::filesystem::path& dir) {
  ad::Checkpoint ck = ad::load_checkpoint(dir);
  if (ck.metadata.value("network", "") != "ssnet") {
    throw ValidationError(dir.string() + " does not hold an SS-Net checkpoint");
  }
  SSNetCheckpoint out{ssnet_config_from_json(ck.metadata.at("config")), std::move(ck.params),
                      ck.metadata};
  check_layout(out.params, ssnet_layout(out.config));
  return out;
}

SSSLCheckpoint load_sssl(const std::filesystem::path& dir) {
  ad::Checkpoint ck = ad::load_checkpoint(dir);
  if (ck.metadata.value("network", "") != "sssl") {
    throw ValidationError(dir.string() + " does not hold an SS-SL checkpoint");
  }
  SSSLCheckpoint out{sssl_config_from_json(ck.metadata.at("config")), std::move(ck.params),
                     ck.metadata};
  check_layout(out.params, sssl_layout(out.config));
  return out;
}

#define CARDIOSEQ_INSTANTIATE(T)                                                              \
  template Tensor<T> ssnet_forward<T>(const ad::ParameterSet<T>&, const Tensor<T>&,           \
                                      const Tensor<T>&, const SSNetConfig&);                  \
  template Tensor<T> sssl_forward<T>(const ad::ParameterSet<T>&, const Tensor<T>&,            \
                                     const Tensor<T>&, const Tensor<T>&, const SSSLConfig&);

CARDIOSEQ_INSTANTIATE(float)
CARDIOSEQ_INSTANTIATE(double)
#undef CARDIOSEQ_INSTANTIATE

}  // namespace cardioseq
