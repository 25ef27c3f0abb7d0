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

#include "cardioseq/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "cardioseq/error.hpp"

namespace cardioseq {

using ad::Tensor;

template <typename T>
Tensor<T> smoothness_psi(const Tensor<T>& field) {
  Tensor<T> total = ad::abs_mean(ad::spatial_diff(field, 0));
  total = ad::add(total, ad::abs_mean(ad::spatial_diff(field, 1)));
  return ad::add(total, ad::abs_mean(ad::spatial_diff(field, 2)));
}

template <typename T>
Tensor<T> consistency_sigma(const Tensor<T>& fwd, const Tensor<T>& bwd) {
  if (fwd.shape() != bwd.shape()) {
    throw ValidationError("consistency_sigma: field shapes differ");
  }
  const Tensor<T> a = ad::abs_mean(ad::add(ad::warp(fwd, fwd), bwd));
  const Tensor<T> b = ad::abs_mean(ad::add(ad::warp(bwd, bwd), fwd));
  return ad::scale(ad::add(a, b), T(0.5));
}

template <typename T>
MotionLossTerms<T> motion_loss(const Tensor<T>& target, const Tensor<T>& adjacent,
                               const Tensor<T>& fwd, const Tensor<T>& bwd,
                               const MotionLossWeights& w) {
  if (w.smooth < 0.0 || w.consist < 0.0) {
    throw ValidationError("motion loss weights must be non-negative");
  }
  if (target.shape() != adjacent.shape()) {
    throw ValidationError("motion_loss: image shapes differ");
  }
  MotionLossTerms<T> terms;
  terms.photometric = ad::add(ad::l1_mean(ad::warp(adjacent, fwd), target),
                              ad::l1_mean(ad::warp(target, bwd), adjacent));
  terms.smooth = ad::scale(ad::add(smoothness_psi(fwd), smoothness_psi(bwd)), T(0.5));
  terms.consist = consistency_sigma(fwd, bwd);
  terms.total = ad::add(terms.photometric,
                        ad::add(ad::scale(terms.smooth, static_cast<T>(w.smooth)),
                                ad::scale(terms.consist, static_cast<T>(w.consist))));
  return terms;
}

template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& probs, const LabelMask& truth,
                            const SegLossConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
    throw ValidationError("segmentation loss alpha must lie in [0, 1]");
  }
  if (probs.shape().size() != 4 || !(probs.spatial() == truth.dims())) {
    throw ValidationError("segmentation_loss: prediction and mask extents differ");
  }
  const int k = probs.channels();
  if (k < 2) throw ValidationError("segmentation_loss: need at least 2 classes");
  const auto& labels = truth.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) {
      throw ValidationError("segmentation_loss: label " + std::to_string(labels[i]) +
                            " out of range at voxel " + std::to_string(i));
    }
  }
  const std::size_t n = truth.dims().count();
  const T eps = static_cast<T>(cfg.smoothing);
  const T alpha = static_cast<T>(cfg.alpha);
  constexpr T kTiny = T(1e-12);
  const T* p = probs.value().data();

  // Per-foreground-class intersections and denominators.
  std::vector<T> inter(k, T(0)), denom(k, T(0));
  for (int c = 1; c < k; ++c) {
    T a = 0, s = 0, y = 0;
    for (std::size_t v = 0; v < n; ++v) {
      const T pv = p[c * n + v];
      const T yv = labels[v] == c ? T(1) : T(0);
      a += pv * yv;
      s += pv;
      y += yv;
    }
    inter[c] = T(2) * a + eps;
    denom[c] = s + y + eps;
  }
  T dice = 0;
  for (int c = 1; c < k; ++c) dice += inter[c] / denom[c];
  dice /= static_cast<T>(k - 1);

  T ce = 0;
  for (std::size_t v = 0; v < n; ++v) ce -= std::log(std::max(p[labels[v] * n + v], kTiny));
  ce /= static_cast<T>(n);

  const T loss = alpha * (T(1) - dice) + (T(1) - alpha) * ce;
  return ad::make_node<T>(
      "segmentation_loss", {1}, {loss}, {probs},
      [=, labels = labels](ad::Node<T>& self) {
        auto& in = self.inputs[0];
        T* g = in->grad_buffer();
        const T* pv = in->value.data();
        const T go = self.grad[0];
        const T dice_scale = -alpha * go / static_cast<T>(k - 1);
        for (int c = 1; c < k; ++c) {
          const T s2 = denom[c] * denom[c];
          for (std::size_t v = 0; v < n; ++v) {
            const T yv = labels[v] == c ? T(1) : T(0);
            g[c * n + v] += dice_scale * (T(2) * yv * denom[c] - inter[c]) / s2;
          }
        }
        const T ce_scale = -(T(1) - alpha) * go / static_cast<T>(n);
        for (std::size_t v = 0; v < n; ++v) {
          const std::size_t idx = labels[v] * n + v;
          if (pv[idx] > kTiny) g[idx] += ce_scale / pv[idx];
        }
      });
}

#define CARDIOSEQ_INSTANTIATE(T)                                                          \
  template Tensor<T> smoothness_psi<T>(const Tensor<T>&);                                 \
  template Tensor<T> consistency_sigma<T>(const Tensor<T>&, const Tensor<T>&);            \
  template MotionLossTerms<T> motion_loss<T>(const Tensor<T>&, const Tensor<T>&,          \
                                             const Tensor<T>&, const Tensor<T>&,          \
                                             const MotionLossWeights&);                   \
  template Tensor<T> segmentation_loss<T>(const Tensor<T>&, const LabelMask&,             \
                                          const SegLossConfig&);

CARDIOSEQ_INSTANTIATE(float)
CARDIOSEQ_INSTANTIATE(double)
#undef CARDIOSEQ_INSTANTIATE

}  // namespace cardioseq
