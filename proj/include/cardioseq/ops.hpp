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

// Differentiable operators. Volumes are (C, X, Y, Z) tensors, channel-major
// and x-fastest; scalar results have shape (1).

#include "cardioseq/tensor.hpp"

namespace cardioseq::ad {

// weight (C_out, C_in, 3, 3, 3), bias (C_out). Zero padding.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 1);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));

// Each voxel replicated 2x along every spatial axis.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Per-voxel softmax across channels (max-subtracted).
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x);

// mean |a - b|; the subgradient at a == b is 0.
template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b);
// mean |a|
template <typename T>
Tensor<T> abs_mean(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// Forward difference x[i+1] - x[i] along `axis` (0 = x, 1 = y, 2 = z); the
// far face reuses the backward difference. An axis of extent 1 yields zeros.
template <typename T>
Tensor<T> spatial_diff(const Tensor<T>& x, int axis);

// Backward warp: out_c(p) = image_c(p + field(p)), trilinear, clamp-to-edge.
// Differentiable with respect to both image and field. `image` may carry any
// number of channels; `field` has 3.
template <typename T>
Tensor<T> warp(const Tensor<T>& image, const Tensor<T>& field);

}  // namespace cardioseq::ad
