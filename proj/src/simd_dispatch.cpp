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

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "cardioseq/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <xmmintrin.h>
#endif

namespace cardioseq::kernels {
namespace {

constexpr int kSpatialMinWidth = 16;

SimdLevel probe() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return SimdLevel::kAvx2;
  }
#endif
  return SimdLevel::kScalar;
}

SimdLevel initial_level() {
  const char* env = std::getenv("CARDIOSEQ_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return SimdLevel::kScalar;
  return detected_simd_level();
}

std::atomic<SimdLevel>& level_slot() {
  static std::atomic<SimdLevel> level{initial_level()};
  return level;
}

enum class Path { kScalar, kSpatial, kChannel };

// The x-vectorized kernels need stride 1, pad 1 and enough voxels per row to
// fill vectors; everything else goes to the channel-vectorized kernels.
Path choose(const ConvGeometry& g) {
  if (active_simd_level() != SimdLevel::kAvx2 || g.pad > 1) return Path::kScalar;
  if (g.stride == 1 && g.pad == 1 && g.out.nx >= kSpatialMinWidth) return Path::kSpatial;
  return Path::kChannel;
}

}  // namespace

std::string_view to_string(SimdLevel level) {
  return level == SimdLevel::kAvx2 ? "avx2" : "scalar";
}

SimdLevel detected_simd_level() {
  static const SimdLevel detected = probe();
  return detected;
}

#if defined(__x86_64__) || defined(__i386__)
// MXCSR bit 15 is flush-to-zero, bit 6 denormals-are-zero.
DenormalGuard::DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
DenormalGuard::~DenormalGuard() { _mm_setcsr(saved_); }
#else
DenormalGuard::DenormalGuard() = default;
DenormalGuard::~DenormalGuard() = default;
#endif

SimdLevel active_simd_level() { return level_slot().load(std::memory_order_relaxed); }

SimdLevel set_simd_level(SimdLevel level) {
  if (level == SimdLevel::kAvx2 && detected_simd_level() != SimdLevel::kAvx2) {
    level = SimdLevel::kScalar;
  }
  return level_slot().exchange(level);
}

void conv3d_forward(const ConvGeometry& g, const float* in, const float* w,
                    const float* b, float* out) {
  switch (choose(g)) {
    case Path::kSpatial: return avx2::conv3d_forward(g, in, w, b, out);
    case Path::kChannel: return avx2::conv3d_forward_cv(g, in, w, b, out);
    case Path::kScalar: break;
  }
  scalar::conv3d_forward(g, in, w, b, out);
}

void conv3d_backward_input(const ConvGeometry& g, const float* w, const float* gout,
                           float* gin) {
  switch (choose(g)) {
    case Path::kSpatial: return avx2::conv3d_backward_input(g, w, gout, gin);
    case Path::kChannel: return avx2::conv3d_backward_input_cv(g, w, gout, gin);
    case Path::kScalar: break;
  }
  scalar::conv3d_backward_input(g, w, gout, gin);
}

void conv3d_backward_weight(const ConvGeometry& g, const float* in, const float* gout,
                            float* gw, float* gb) {
  switch (choose(g)) {
    case Path::kSpatial: return avx2::conv3d_backward_weight(g, in, gout, gw, gb);
    case Path::kChannel: return avx2::conv3d_backward_weight_cv(g, in, gout, gw, gb);
    case Path::kScalar: break;
  }
  scalar::conv3d_backward_weight(g, in, gout, gw, gb);
}

void conv3d_forward(const ConvGeometry& g, const double* in, const double* w,
                    const double* b, double* out) {
  scalar::conv3d_forward(g, in, w, b, out);
}

void conv3d_backward_input(const ConvGeometry& g, const double* w, const double* gout,
                           double* gin) {
  scalar::conv3d_backward_input(g, w, gout, gin);
}

void conv3d_backward_weight(const ConvGeometry& g, const double* in,
                            const double* gout, double* gw, double* gb) {
  scalar::conv3d_backward_weight(g, in, gout, gw, gb);
}

}  // namespace cardioseq::kernels
