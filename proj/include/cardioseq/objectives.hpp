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

#include "cardioseq/ops.hpp"
#include "cardioseq/volume.hpp"

namespace cardioseq {

struct MotionLossWeights {
  double smooth = 1.0;
  double consist = 1.0;
};

struct SegLossConfig {
  // alpha * (1 - soft Dice) + (1 - alpha) * cross-entropy
  double alpha = 0.5;
  double smoothing = 1e-5;
};

template <typename T>
struct MotionLossTerms {
  ad::Tensor<T> total;
  ad::Tensor<T> photometric;
  ad::Tensor<T> smooth;
  ad::Tensor<T> consist;
};

// Mean over voxels and components of |dphi/dx| + |dphi/dy| + |dphi/dz| using
// forward differences (backward at the far face).
template <typename T>
ad::Tensor<T> smoothness_psi(const ad::Tensor<T>& field);

// 0.5 * (mean |warp(fwd, fwd) + bwd| + mean |warp(bwd, bwd) + fwd|)
template <typename T>
ad::Tensor<T> consistency_sigma(const ad::Tensor<T>& fwd, const ad::Tensor<T>& bwd);

// fwd warps `adjacent` onto `target`; bwd warps `target` onto `adjacent`.
//   total = l1(warp(adj, fwd), tgt) + l1(warp(tgt, bwd), adj)
//         + w.smooth * (psi(fwd) + psi(bwd)) / 2 + w.consist * sigma(fwd, bwd)
template <typename T>
MotionLossTerms<T> motion_loss(const ad::Tensor<T>& target, const ad::Tensor<T>& adjacent,
                               const ad::Tensor<T>& fwd, const ad::Tensor<T>& bwd,
                               const MotionLossWeights& w);

// `probs` is (K, X, Y, Z) with per-voxel probabilities; `truth` holds labels
// in [0, K). Soft Dice averages the foreground classes 1..K-1.
template <typename T>
ad::Tensor<T> segmentation_loss(const ad::Tensor<T>& probs, const LabelMask& truth,
                                const SegLossConfig& cfg);

}  // namespace cardioseq
