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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cardioseq/error.hpp"
#include "cardioseq/objectives.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/transform.hpp"
#include "test_util.hpp"

namespace cardioseq {
namespace {

using ad::Tensor;
using TD = Tensor<double>;

TD volume_tensor(const Dims& d, int c, const std::vector<double>& v) {
  return TD::leaf({c, d.nx, d.ny, d.nz}, v);
}

TD constant_field(const Dims& d, double ux, double uy, double uz) {
  std::vector<double> v(3 * d.count());
  for (std::size_t i = 0; i < d.count(); ++i) {
    v[i] = ux;
    v[d.count() + i] = uy;
    v[2 * d.count() + i] = uz;
  }
  return volume_tensor(d, 3, v);
}

std::vector<double> ramp(const Dims& d, double offset) {
  std::vector<double> v(d.count());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) v[d.index(x, y, z)] = x + offset;
  return v;
}

// Independent forward-difference oracle for psi.
double psi_oracle(const Dims& d, const std::vector<double>& f) {
  const int n[3] = {d.nx, d.ny, d.nz};
  double acc = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          for (int axis = 0; axis < 3; ++axis) {
            if (n[axis] == 1) continue;
            int p[3] = {x, y, z};
            int q[3] = {x, y, z};
            if (p[axis] + 1 < n[axis]) {
              q[axis] += 1;
            } else {
              p[axis] -= 1;
            }
            acc += std::abs(f[c * d.count() + d.index(q[0], q[1], q[2])] -
                            f[c * d.count() + d.index(p[0], p[1], p[2])]);
          }
        }
  return acc / (3.0 * d.count());
}

TEST(Smoothness, ConstantFieldIsZero) {
  EXPECT_EQ(smoothness_psi(constant_field({4, 3, 2}, 1.0, -2.0, 0.5)).item(), 0.0);
}

TEST(Smoothness, UnitRampOnThreeCubeIsOneThird) {
  const Dims d{3, 3, 3};
  std::vector<double> v(3 * d.count(), 0.0);
  const auto r = ramp(d, 0.0);
  std::copy(r.begin(), r.end(), v.begin());
  const double psi = smoothness_psi(volume_tensor(d, 3, v)).item();
  EXPECT_DOUBLE_EQ(psi, psi_oracle(d, v));
  EXPECT_DOUBLE_EQ(psi, 1.0 / 3.0);
}

TEST(Smoothness, RandomFieldMatchesOracleIncludingDegenerateAxis) {
  for (const Dims d : {Dims{5, 4, 3}, Dims{4, 3, 1}}) {
    const auto vf = testing::random_values(3 * d.count(), 11);
    const std::vector<double> v(vf.begin(), vf.end());
    EXPECT_NEAR(smoothness_psi(volume_tensor(d, 3, v)).item(), psi_oracle(d, v), 1e-12);
  }
}

TEST(Consistency, ZeroAndTranslationPairs) {
  const Dims d{4, 4, 4};
  EXPECT_EQ(consistency_sigma(constant_field(d, 0, 0, 0), constant_field(d, 0, 0, 0)).item(),
            0.0);
  EXPECT_NEAR(consistency_sigma(constant_field(d, 0.5, -1.0, 0.25),
                                constant_field(d, -0.5, 1.0, -0.25))
                  .item(),
              0.0, 1e-15);
  EXPECT_THROW(consistency_sigma(constant_field(d, 0, 0, 0), constant_field({4, 4, 3}, 0, 0, 0)),
               ValidationError);
}

TEST(Consistency, AnalyticPhantomPairIsSmall) {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  for (int k : {0, 4, 9}) {
    const int k1 = (k + 1) % s.time_points;
    const auto f = ad::from_field<float>(analytic_field(s, k, k1));
    const auto b = ad::from_field<float>(analytic_field(s, k1, k));
    EXPECT_LT(consistency_sigma(f, b).item(), 0.05f) << "pair " << k;
  }
}

// sigma pairs f(p + f(p)) with the reverse field, which for an exact inverse
// g leaves a first-order remainder of about 2 (grad f) f. Iterating the
// inverse therefore settles sigma at that remainder rather than driving it
// to zero; the first iterate already removes the zeroth-order term.
TEST(Consistency, FirstInverseIterateReducesSigma) {
  const Dims d{16, 14, 12};
  const auto f = testing::smooth_field(d, 4, 1.5f, true);
  const auto tf = ad::from_field<double>(f);
  const double none = consistency_sigma(tf, ad::from_field<double>(invert_field(f, 0).field)).item();
  const double one = consistency_sigma(tf, ad::from_field<double>(invert_field(f, 1).field)).item();
  const double many = consistency_sigma(tf, ad::from_field<double>(invert_field(f, 10).field)).item();
  EXPECT_LT(one, 0.5 * none);
  EXPECT_LT(many, 0.5 * none);
}

TEST(MotionLoss, IdenticalFramesWithZeroFieldsIsZero) {
  const Dims d{5, 4, 3};
  const auto iv = testing::random_values(d.count(), 3);
  const TD img = volume_tensor(d, 1, {iv.begin(), iv.end()});
  const auto terms = motion_loss(img, img, constant_field(d, 0, 0, 0),
                                 constant_field(d, 0, 0, 0), MotionLossWeights{});
  EXPECT_EQ(terms.total.item(), 0.0);
}

TEST(MotionLoss, RampShiftedByOneVoxel) {
  const Dims d{8, 3, 3};
  const TD target = volume_tensor(d, 1, ramp(d, 0.0));
  const TD adjacent = volume_tensor(d, 1, ramp(d, -1.0));
  // Exact translations: only the clamped far face (fwd) and near face (bwd)
  // leave a residual of 1, so each photometric term is 1 / nx.
  const auto exact = motion_loss(target, adjacent, constant_field(d, 1, 0, 0),
                                 constant_field(d, -1, 0, 0), MotionLossWeights{});
  EXPECT_NEAR(exact.photometric.item(), 2.0 / d.nx, 1e-12);
  EXPECT_NEAR(exact.smooth.item(), 0.0, 1e-15);
  EXPECT_NEAR(exact.consist.item(), 0.0, 1e-15);

  const auto zero = motion_loss(target, adjacent, constant_field(d, 0, 0, 0),
                                constant_field(d, 0, 0, 0), MotionLossWeights{});
  // Oracle: both directions compare the ramp with its shift, |difference| = 1.
  double oracle = 0.0;
  const auto a = ramp(d, 0.0), b = ramp(d, -1.0);
  for (std::size_t i = 0; i < a.size(); ++i) oracle += 2.0 * std::abs(a[i] - b[i]);
  EXPECT_NEAR(zero.total.item(), oracle / a.size(), 1e-12);
  EXPECT_LT(exact.total.item(), 2.0 / d.nx * zero.total.item());
}

TEST(MotionLoss, SymmetricUnderSwappingDirections) {
  const Dims d{6, 5, 4};
  const auto i1 = testing::random_values(d.count(), 1), i2 = testing::random_values(d.count(), 2);
  const TD a = volume_tensor(d, 1, {i1.begin(), i1.end()});
  const TD b = volume_tensor(d, 1, {i2.begin(), i2.end()});
  const TD f = ad::from_field<double>(testing::random_field(d, 3, 1.2f));
  const TD g = ad::from_field<double>(testing::random_field(d, 4, 1.2f));
  const MotionLossWeights w{0.3, 0.7};
  EXPECT_NEAR(motion_loss(a, b, f, g, w).total.item(), motion_loss(b, a, g, f, w).total.item(),
              1e-12);
}

TEST(MotionLoss, WeightsScaleTheirTerms) {
  const Dims d{6, 5, 4};
  const auto i1 = testing::random_values(d.count(), 5), i2 = testing::random_values(d.count(), 6);
  const TD a = volume_tensor(d, 1, {i1.begin(), i1.end()});
  const TD b = volume_tensor(d, 1, {i2.begin(), i2.end()});
  const TD f = ad::from_field<double>(testing::random_field(d, 7, 1.0f));
  const TD g = ad::from_field<double>(testing::random_field(d, 8, 1.0f));
  const auto t = motion_loss(a, b, f, g, MotionLossWeights{0.25, 2.0});
  EXPECT_NEAR(t.total.item(),
              t.photometric.item() + 0.25 * t.smooth.item() + 2.0 * t.consist.item(), 1e-12);
  EXPECT_THROW(motion_loss(a, b, f, g, MotionLossWeights{-1.0, 1.0}), ValidationError);
}

// Independent scalar-loop oracle for the blended segmentation loss.
double seg_oracle(const std::vector<double>& p, const LabelMask& truth, int k, double alpha) {
  const std::size_t n = truth.dims().count();
  const auto& y = truth.labels();
  double dice = 0.0;
  for (int c = 1; c < k; ++c) {
    double inter = 0.0, ps = 0.0, ys = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double yv = y[v] == c;
      inter += p[c * n + v] * yv;
      ps += p[c * n + v];
      ys += yv;
    }
    dice += (2.0 * inter + 1e-5) / (ps + ys + 1e-5);
  }
  dice /= (k - 1);
  double ce = 0.0;
  for (std::size_t v = 0; v < n; ++v) ce -= std::log(p[y[v] * n + v]);
  return alpha * (1.0 - dice) + (1.0 - alpha) * ce / n;
}

TEST(SegmentationLoss, PerfectPredictionIsNearZero) {
  const Dims d{4, 3, 3};
  const LabelMask truth = testing::random_mask(d, 2);
  std::vector<double> p(2 * d.count());
  for (std::size_t v = 0; v < d.count(); ++v) {
    p[v] = truth.labels()[v] == 0;
    p[d.count() + v] = truth.labels()[v] == 1;
  }
  EXPECT_LE(segmentation_loss(volume_tensor(d, 2, p), truth, SegLossConfig{}).item(), 1e-4);
}

TEST(SegmentationLoss, UniformPredictionCrossEntropyIsLn2) {
  const Dims d{4, 3, 3};
  const LabelMask truth = testing::random_mask(d, 3);
  const TD p = volume_tensor(d, 2, std::vector<double>(2 * d.count(), 0.5));
  SegLossConfig ce_only;
  ce_only.alpha = 0.0;
  EXPECT_NEAR(segmentation_loss(p, truth, ce_only).item(), std::numbers::ln2, 1e-12);
}

TEST(SegmentationLoss, RandomCasesMatchOracle) {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const int k = 2 + seed % 2;
    const Dims d{5, 4, 3};
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> lab(0, k - 1);
    std::vector<std::uint8_t> labels(d.count());
    for (auto& l : labels) l = static_cast<std::uint8_t>(lab(rng));
    const LabelMask truth(d, {1.0, 1.0, 1.0}, labels, k);
    const auto logits = testing::random_values(k * d.count(), seed + 100, -2.0f, 2.0f);
    const TD probs = ad::softmax_channels(volume_tensor(d, k, {logits.begin(), logits.end()}));
    SegLossConfig cfg;
    cfg.alpha = 0.1 * seed;
    if (cfg.alpha > 1.0) cfg.alpha = 1.0;
    EXPECT_NEAR(segmentation_loss(probs, truth, cfg).item(),
                seg_oracle(probs.value(), truth, k, cfg.alpha), 1e-6);
  }
}

TEST(SegmentationLoss, RejectsBadInputs) {
  const Dims d{3, 3, 3};
  const TD p = volume_tensor(d, 2, std::vector<double>(2 * d.count(), 0.5));
  std::vector<std::uint8_t> labels(d.count(), 0);
  labels[4] = 2;
  EXPECT_THROW(segmentation_loss(p, LabelMask(d, {1.0, 1.0, 1.0}, labels, 3), SegLossConfig{}),
               ValidationError);
  SegLossConfig bad;
  bad.alpha = 1.5;
  EXPECT_THROW(segmentation_loss(p, testing::random_mask(d, 1), bad), ValidationError);
}

}  // namespace
}  // namespace cardioseq
