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

#include <cstdint>
#include <vector>

#include "cardioseq/volume.hpp"

namespace cardioseq {

// Exact squared Euclidean distance (voxel units, optionally scaled by
// spacing) from every voxel to the nearest voxel where `inside` is nonzero.
// Separable lower-envelope passes along x, y, then z. When no voxel is
// inside, every output is +infinity.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& inside, const Dims& dims,
                                const Spacing& spacing = {1.0, 1.0, 1.0});

// One 1-D pass: out[q] = min_p (f[p] + (w*(q - p))^2).
void squared_edt_1d(const double* f, int n, double w, double* out);

}  // namespace cardioseq
