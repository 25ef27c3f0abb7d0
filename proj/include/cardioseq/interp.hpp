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

// Trilinear sampling with clamp-to-edge, shared by the differentiable warp
// and the deformation-field algebra. Coordinates are voxel indices.

#include <algorithm>
#include <cmath>

#include "cardioseq/volume.hpp"

namespace cardioseq {

template <typename T>
struct TrilinearCell {
  int lo[3];
  int hi[3];
  T frac[3];
  // 1 where the unclamped coordinate lies in [0, n-1], else 0: the sample is
  // flat in that direction once clamped.
  T slope_gate[3];

  TrilinearCell(const Dims& d, T cx, T cy, T cz) {
    const int n[3] = {d.nx, d.ny, d.nz};
    const T c[3] = {cx, cy, cz};
    for (int a = 0; a < 3; ++a) {
      const T upper = static_cast<T>(n[a] - 1);
      // NaN samples position 0 but keeps NaN weights, so it propagates.
      const bool nan = std::isnan(c[a]);
      const T clamped = nan ? T(0) : std::clamp(c[a], T(0), upper);
      slope_gate[a] = (c[a] >= T(0) && c[a] <= upper) ? T(1) : T(0);
      // Right-continuous cell: an exact integer coordinate k uses [k, k+1].
      int i0 = static_cast<int>(std::floor(clamped));
      i0 = std::min(i0, n[a] - 1);
      lo[a] = i0;
      hi[a] = std::min(i0 + 1, n[a] - 1);
      frac[a] = nan ? c[a] : clamped - static_cast<T>(i0);
    }
  }

  template <typename S>
  T sample(const S* img, const Dims& d) const {
    const T fx = frac[0], fy = frac[1], fz = frac[2];
    auto at = [&](int x, int y, int z) { return static_cast<T>(img[d.index(x, y, z)]); };
    const T c00 = at(lo[0], lo[1], lo[2]) * (1 - fx) + at(hi[0], lo[1], lo[2]) * fx;
    const T c10 = at(lo[0], hi[1], lo[2]) * (1 - fx) + at(hi[0], hi[1], lo[2]) * fx;
    const T c01 = at(lo[0], lo[1], hi[2]) * (1 - fx) + at(hi[0], lo[1], hi[2]) * fx;
    const T c11 = at(lo[0], hi[1], hi[2]) * (1 - fx) + at(hi[0], hi[1], hi[2]) * fx;
    const T c0 = c00 * (1 - fy) + c10 * fy;
    const T c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
  }

  // d(sample)/d(coordinate) per axis, including the clamp gate.
  template <typename S>
  void coordinate_gradient(const S* img, const Dims& d, T out[3]) const {
    auto at = [&](int x, int y, int z) { return static_cast<T>(img[d.index(x, y, z)]); };
    const T fx = frac[0], fy = frac[1], fz = frac[2];
    const T v000 = at(lo[0], lo[1], lo[2]), v100 = at(hi[0], lo[1], lo[2]);
    const T v010 = at(lo[0], hi[1], lo[2]), v110 = at(hi[0], hi[1], lo[2]);
    const T v001 = at(lo[0], lo[1], hi[2]), v101 = at(hi[0], lo[1], hi[2]);
    const T v011 = at(lo[0], hi[1], hi[2]), v111 = at(hi[0], hi[1], hi[2]);
    // A degenerate cell (hi == lo at the far face) has zero slope.
    const T sx = hi[0] == lo[0] ? T(0) : T(1);
    const T sy = hi[1] == lo[1] ? T(0) : T(1);
    const T sz = hi[2] == lo[2] ? T(0) : T(1);
    out[0] = sx * slope_gate[0] *
             ((1 - fy) * (1 - fz) * (v100 - v000) + fy * (1 - fz) * (v110 - v010) +
              (1 - fy) * fz * (v101 - v001) + fy * fz * (v111 - v011));
    out[1] = sy * slope_gate[1] *
             ((1 - fx) * (1 - fz) * (v010 - v000) + fx * (1 - fz) * (v110 - v100) +
              (1 - fx) * fz * (v011 - v001) + fx * fz * (v111 - v101));
    out[2] = sz * slope_gate[2] *
             ((1 - fx) * (1 - fy) * (v001 - v000) + fx * (1 - fy) * (v101 - v100) +
              (1 - fx) * fy * (v011 - v010) + fx * fy * (v111 - v110));
  }

  // Adds g * weight into the 8 corners of `dst` (adjoint of sample()).
  template <typename S>
  void scatter(S* dst, const Dims& d, T g) const {
    const T fx = frac[0], fy = frac[1], fz = frac[2];
    auto add = [&](int x, int y, int z, T w) { dst[d.index(x, y, z)] += static_cast<S>(g * w); };
    add(lo[0], lo[1], lo[2], (1 - fx) * (1 - fy) * (1 - fz));
    add(hi[0], lo[1], lo[2], fx * (1 - fy) * (1 - fz));
    add(lo[0], hi[1], lo[2], (1 - fx) * fy * (1 - fz));
    add(hi[0], hi[1], lo[2], fx * fy * (1 - fz));
    add(lo[0], lo[1], hi[2], (1 - fx) * (1 - fy) * fz);
    add(hi[0], lo[1], hi[2], fx * (1 - fy) * fz);
    add(lo[0], hi[1], hi[2], (1 - fx) * fy * fz);
    add(hi[0], hi[1], hi[2], fx * fy * fz);
  }
};

}  // namespace cardioseq
