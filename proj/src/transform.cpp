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

#include "cardioseq/transform.hpp"

#include <cmath>
#include <sstream>

#include "cardioseq/distance_transform.hpp"
#include "cardioseq/error.hpp"
#include "cardioseq/interp.hpp"

namespace cardioseq {
namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* op) {
  if (!(a == b)) {
    throw ValidationError(std::string(op) + ": extents differ (" + to_string(a) + " vs " +
                          to_string(b) + ")");
  }
}

// Samples `channels` stacked components of `src` at p + by(p).
std::vector<float> warp_channels(const float* src, int channels, const Dims& d,
                                 const DeformationField& by) {
  const std::size_t n = d.count();
  std::vector<float> out(static_cast<std::size_t>(channels) * n);
  const float* ux = by.component(0);
  const float* uy = by.component(1);
  const float* uz = by.component(2);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const TrilinearCell<double> cell(d, x + static_cast<double>(ux[i]),
                                         y + static_cast<double>(uy[i]),
                                         z + static_cast<double>(uz[i]));
        for (int c = 0; c < channels; ++c) {
          out[c * n + i] = static_cast<float>(cell.sample(src + c * n, d));
        }
      }
  return out;
}

}  // namespace

VolumeGrid warp(const VolumeGrid& image, const DeformationField& field) {
  require_same_dims(image.dims(), field.dims(), "warp");
  return VolumeGrid(image.dims(), image.spacing(),
                    warp_channels(image.data().data(), 1, image.dims(), field));
}

DeformationField warp_field(const DeformationField& inner, const DeformationField& by) {
  require_same_dims(inner.dims(), by.dims(), "warp_field");
  return DeformationField(inner.dims(), inner.spacing(),
                          warp_channels(inner.data().data(), 3, inner.dims(), by));
}

DeformationField compose(const DeformationField& first, const DeformationField& then) {
  require_same_dims(first.dims(), then.dims(), "compose");
  std::vector<float> out = warp_channels(then.data().data(), 3, first.dims(), first);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += first.data()[i];
  return DeformationField(first.dims(), first.spacing(), std::move(out));
}

double mean_magnitude(const DeformationField& f) {
  const std::size_t n = f.dims().count();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = f.at(i);
    acc += std::sqrt(double(u[0]) * u[0] + double(u[1]) * u[1] + double(u[2]) * u[2]);
  }
  return acc / static_cast<double>(n);
}

FieldInverse invert_field(const DeformationField& f, int iterations) {
  if (iterations < 0) throw ValidationError("invert_field: negative iteration count");
  const Dims& d = f.dims();
  DeformationField g = DeformationField::zeros(d, f.spacing());
  FieldInverse result;
  result.trace.push_back(mean_magnitude(compose(f, g)));
  for (int k = 0; k < iterations; ++k) {
    std::vector<float> next = warp_channels(f.data().data(), 3, d, g);
    for (float& v : next) v = -v;
    for (float v : next) {
      if (!std::isfinite(v)) {
        throw NumericalError("invert_field: non-finite iterate at iteration " +
                             std::to_string(k + 1));
      }
    }
    g = DeformationField(d, f.spacing(), std::move(next));
    result.trace.push_back(mean_magnitude(compose(f, g)));
  }
  result.residual = result.trace.back();
  if (!std::isfinite(result.residual) || result.residual > result.trace.front()) {
    std::ostringstream os;
    os << "invert_field diverged; residual trace:";
    for (double r : result.trace) os << " " << r;
    throw NumericalError(os.str());
  }
  result.field = std::move(g);
  return result;
}

VolumeGrid field_magnitude(const DeformationField& f) {
  const std::size_t n = f.dims().count();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = f.at(i);
    out[i] = static_cast<float>(
        std::sqrt(double(u[0]) * u[0] + double(u[1]) * u[1] + double(u[2]) * u[2]));
  }
  return VolumeGrid(f.dims(), f.spacing(), std::move(out));
}

VolumeGrid motion_distance_map(const DeformationField& f, const DistanceMapConfig& config) {
  const double q = config.threshold_quantile;
  if (!(q > 0.0 && q < 1.0)) {
    throw ValidationError("motion_distance_map: threshold quantile must lie in (0, 1)");
  }
  const VolumeGrid mag = field_magnitude(f);
  const Dims& d = f.dims();
  const float threshold = upper_quantile(mag.data(), 1.0 - q);
  std::vector<std::uint8_t> region(d.count(), 0);
  bool any = false;
  for (std::size_t i = 0; i < region.size(); ++i) {
    const float m = mag.data()[i];
    if (m > 0.0f && m >= threshold) {
      region[i] = 1;
      any = true;
    }
  }
  std::vector<float> out(d.count(), 0.0f);
  if (any) {
    const double diag = std::sqrt(double(d.nx - 1) * (d.nx - 1) + double(d.ny - 1) * (d.ny - 1) +
                                  double(d.nz - 1) * (d.nz - 1));
    const std::vector<double> sq = squared_edt(region, d);
    if (diag > 0.0) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(std::min(1.0, std::sqrt(sq[i]) / diag));
      }
    }
  }
  return VolumeGrid(d, f.spacing(), std::move(out));
}

}  // namespace cardioseq
