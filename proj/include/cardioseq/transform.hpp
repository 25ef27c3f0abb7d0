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

// Deformation-field algebra on concrete volumes. Fields are in voxel units and
// act by backward warping: warp(I, u)(p) = I(p + u(p)), trilinear with
// clamp-to-edge. The differentiable counterpart is ad::warp in ops.hpp.

#include <vector>

#include "cardioseq/ops.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

VolumeGrid warp(const VolumeGrid& image, const DeformationField& field);

// Each component of `inner` warped by `by`.
DeformationField warp_field(const DeformationField& inner, const DeformationField& by);

// (then o first)(p) = first(p) + then(p + first(p)), so that
// warp(I, compose(first, then)) == warp(warp(I, then), first) up to
// interpolation error.
DeformationField compose(const DeformationField& first, const DeformationField& then);

struct FieldInverse {
  DeformationField field;
  // mean |compose(f, inverse)| after the last iteration, in voxels.
  double residual = 0.0;
  // residual before iteration 1 (inverse = 0) and after each iteration.
  std::vector<double> trace;
};

// Fixed-point iteration g <- -f(p + g(p)), starting from g = 0. Throws
// NumericalError carrying the residual trace when the residual ends above its
// starting value or becomes non-finite.
FieldInverse invert_field(const DeformationField& f, int iterations = 10);

// Mean Euclidean norm of a field, in voxels.
double mean_magnitude(const DeformationField& f);

VolumeGrid field_magnitude(const DeformationField& f);

struct DistanceMapConfig {
  double threshold_quantile = 0.9;
};

// Distance to the high-motion region, normalized by the volume diagonal. The
// region holds voxels whose magnitude is nonzero and at least the nearest-rank
// `threshold_quantile` value. An empty region yields all zeros.
VolumeGrid motion_distance_map(const DeformationField& f,
                               const DistanceMapConfig& config = {});

}  // namespace cardioseq
