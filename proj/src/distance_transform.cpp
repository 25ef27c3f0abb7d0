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

#include "cardioseq/distance_transform.hpp"

#include <cmath>
#include <limits>

namespace cardioseq {

void squared_edt_1d(const double* f, int n, double w, double* out) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double w2 = w * w;
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = w * (q - v[j]);
    out[q] = d * d + f[v[j]];
  }
}

std::vector<double> squared_edt(const std::vector<std::uint8_t>& inside, const Dims& d,
                                const Spacing& spacing) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(d.count());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = inside[i] ? 0.0 : kInf;

  const int extents[3] = {d.nx, d.ny, d.nz};
  const std::size_t strides[3] = {1, static_cast<std::size_t>(d.nx),
                                   static_cast<std::size_t>(d.nx) * d.ny};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = extents[axis];
    std::vector<double> line(n), out(n);
    const std::size_t stride = strides[axis];
    for (std::size_t base = 0; base < grid.size(); ++base) {
      // Visit each line once, from its first voxel.
      const int coord = static_cast<int>((base / stride) % static_cast<std::size_t>(n));
      if (coord != 0) continue;
      for (int i = 0; i < n; ++i) line[i] = grid[base + i * stride];
      squared_edt_1d(line.data(), n, spacing[axis], out.data());
      for (int i = 0; i < n; ++i) grid[base + i * stride] = out[i];
    }
  }
  return grid;
}

}  // namespace cardioseq
