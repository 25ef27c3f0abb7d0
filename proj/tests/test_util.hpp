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

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cardioseq/volume.hpp"

namespace cardioseq::testing {

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "tmp";
    path_ = std::filesystem::temp_directory_path() /
            ("cardioseq_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> random_values(std::size_t n, unsigned seed, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

inline VolumeGrid random_volume(Dims d, unsigned seed) {
  return VolumeGrid(d, {1.0, 1.0, 1.0}, random_values(d.count(), seed, 0.0f, 1.0f));
}

inline DeformationField random_field(Dims d, unsigned seed, float amp) {
  return DeformationField(d, {1.0, 1.0, 1.0}, random_values(3 * d.count(), seed, -amp, amp));
}

// Sum of two low-frequency sinusoids per component, magnitude <= amp. With
// `windowed` the field fades to zero at the volume border, so every sample
// point stays inside and the map is invertible on the grid.
inline DeformationField smooth_field(Dims d, unsigned seed, float amp, bool windowed = false) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  std::vector<float> v(3 * d.count());
  for (int c = 0; c < 3; ++c) {
    const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          const double a = std::sin(6.283185307179586 * x / (2.0 * d.nx) + p1) *
                           std::cos(6.283185307179586 * y / (2.0 * d.ny) + p2);
          const double b = std::sin(6.283185307179586 * z / (2.0 * d.nz) + p3);
          double w = 1.0;
          if (windowed) {
            w = std::sin(3.141592653589793 * x / (d.nx - 1)) *
                std::sin(3.141592653589793 * y / (d.ny - 1)) *
                std::sin(3.141592653589793 * z / (d.nz - 1));
          }
          v[c * d.count() + d.index(x, y, z)] = static_cast<float>(amp * 0.5 * (a + b) * w);
        }
  }
  return DeformationField(d, {1.0, 1.0, 1.0}, std::move(v));
}

inline LabelMask random_mask(Dims d, unsigned seed, double p = 0.3) {
  std::mt19937 rng(seed);
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> l(d.count());
  for (auto& x : l) x = b(rng) ? 1 : 0;
  return LabelMask(d, {1.0, 1.0, 1.0}, std::move(l), 2);
}

}  // namespace cardioseq::testing
