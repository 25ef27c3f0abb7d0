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

// Volumetric convolution kernels. Every entry point has a portable scalar
// reference (templated on precision) and, for float, AVX2+FMA variants chosen
// at run time. Tensors are channel-major, x-fastest.

#include <string_view>

#include "cardioseq/volume.hpp"

namespace cardioseq::kernels {

// 3x3x3 kernel geometry.
struct ConvGeometry {
  int cin = 0;
  int cout = 0;
  Dims in;
  Dims out;
  int stride = 1;
  int pad = 1;

  static constexpr int kTaps = 27;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(cout) * cin * kTaps;
  }
};

// out extent per axis: floor((n + 2 pad - 3) / stride) + 1.
ConvGeometry conv_geometry(int cin, int cout, Dims in, int stride, int pad);

enum class SimdLevel { kScalar, kAvx2 };

std::string_view to_string(SimdLevel level);
// What the CPU supports.
SimdLevel detected_simd_level();
// What the dispatcher currently uses. Defaults to the detected level unless
// CARDIOSEQ_SIMD=scalar is set in the environment.
SimdLevel active_simd_level();
// Forces a level (clamped to what the CPU supports). Returns the prior level.
SimdLevel set_simd_level(SimdLevel level);

// Sets flush-to-zero and denormals-are-zero for SSE/AVX float math on this
// thread while alive, restoring the prior mode afterwards. Tiny gradients in
// late training otherwise fall into the slow denormal path. No-op off x86.
class DenormalGuard {
 public:
  DenormalGuard();
  ~DenormalGuard();
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

namespace scalar {

// out = conv(in, w) + b
template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b,
                    T* out);
// gin += conv^T(gout, w)
template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* gout,
                           T* gin);
// gw += d/dw, gb += d/db
template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* in, const T* gout,
                            T* gw, T* gb);

}  // namespace scalar

namespace avx2 {

// Stride 1, pad 1 only. Callers go through the dispatching entry points below.
void conv3d_forward(const ConvGeometry& g, const float* in, const float* w,
                    const float* b, float* out);
void conv3d_backward_input(const ConvGeometry& g, const float* w,
                           const float* gout, float* gin);
void conv3d_backward_weight(const ConvGeometry& g, const float* in,
                            const float* gout, float* gw, float* gb);

// Channel-vectorized variants: any stride, pad 0 or 1. Preferred for strided
// layers and small spatial extents.
void conv3d_forward_cv(const ConvGeometry& g, const float* in, const float* w,
                       const float* b, float* out);
void conv3d_backward_input_cv(const ConvGeometry& g, const float* w,
                              const float* gout, float* gin);
void conv3d_backward_weight_cv(const ConvGeometry& g, const float* in,
                               const float* gout, float* gw, float* gb);

}  // namespace avx2

// Dispatching entry points. Double precision always runs the reference path.
void conv3d_forward(const ConvGeometry& g, const float* in, const float* w,
                    const float* b, float* out);
void conv3d_backward_input(const ConvGeometry& g, const float* w,
                           const float* gout, float* gin);
void conv3d_backward_weight(const ConvGeometry& g, const float* in,
                            const float* gout, float* gw, float* gb);

void conv3d_forward(const ConvGeometry& g, const double* in, const double* w,
                    const double* b, double* out);
void conv3d_backward_input(const ConvGeometry& g, const double* w,
                           const double* gout, double* gin);
void conv3d_backward_weight(const ConvGeometry& g, const double* in,
                            const double* gout, double* gw, double* gb);

}  // namespace cardioseq::kernels
