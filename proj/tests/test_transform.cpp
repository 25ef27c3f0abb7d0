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

#include <algorithm>
#include <cmath>
#include <limits>

#include "cardioseq/distance_transform.hpp"
#include "cardioseq/error.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/transform.hpp"
#include "test_util.hpp"

namespace cardioseq {
namespace {

VolumeGrid ramp_x(const Dims& d) {
  std::vector<float> v(d.count());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) v[d.index(x, y, z)] = static_cast<float>(x);
  return VolumeGrid(d, {1.0, 1.0, 1.0}, v);
}

// Affine intensity a + b.x + c.y + e.z.
VolumeGrid affine_image(const Dims& d, double a, double b, double c, double e) {
  std::vector<float> v(d.count());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) v[d.index(x, y, z)] = float(a + b * x + c * y + e * z);
  return VolumeGrid(d, {1.0, 1.0, 1.0}, v);
}

TEST(Warp, ZeroFieldIsExactIdentity) {
  const Dims d{7, 6, 5};
  const VolumeGrid img = testing::random_volume(d, 4);
  EXPECT_EQ(warp(img, DeformationField::zeros(d)), img);
}

TEST(Warp, UnitShiftOnRampClampsAtFarFace) {
  const Dims d{6, 3, 2};
  const VolumeGrid out = warp(ramp_x(d), DeformationField::constant(d, {1.0f, 0.0f, 0.0f}));
  for (int x = 0; x < d.nx; ++x) {
    const float expect = x <= d.nx - 2 ? float(x + 1) : float(d.nx - 1);
    EXPECT_EQ(out.at(x, 1, 1), expect);
  }
}

TEST(Warp, HalfShiftOnRampIsExact) {
  const Dims d{6, 3, 2};
  const VolumeGrid out = warp(ramp_x(d), DeformationField::constant(d, {0.5f, 0.0f, 0.0f}));
  for (int x = 0; x + 1 < d.nx; ++x) EXPECT_FLOAT_EQ(out.at(x, 2, 0), x + 0.5f);
}

TEST(Warp, ExactOnAffineImagesForInteriorSamples) {
  const Dims d{8, 7, 6};
  const VolumeGrid img = affine_image(d, 0.3, 0.25, -0.5, 0.75);
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  std::vector<float> f(3 * d.count(), 0.0f);
  for (int c = 0; c < 3; ++c) {
    for (int z = 1; z < d.nz - 1; ++z)
      for (int y = 1; y < d.ny - 1; ++y)
        for (int x = 1; x < d.nx - 1; ++x) f[c * d.count() + d.index(x, y, z)] = u(rng);
  }
  const DeformationField field(d, {1.0, 1.0, 1.0}, f);
  const VolumeGrid out = warp(img, field);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const auto i = d.index(x, y, z);
        const double expect = 0.3 + 0.25 * (x + f[i]) - 0.5 * (y + f[d.count() + i]) +
                              0.75 * (z + f[2 * d.count() + i]);
        EXPECT_NEAR(out.data()[i], expect, 1e-5);
      }
}

TEST(Warp, ExtentMismatchIsRejected) {
  EXPECT_THROW(warp(VolumeGrid::zeros({4, 4, 4}), DeformationField::zeros({4, 4, 3})),
               ValidationError);
}

TEST(WarpField, IdentityConstancyAndChannelwiseOracle) {
  const Dims d{6, 5, 4};
  const DeformationField inner = testing::random_field(d, 1, 2.0f);
  EXPECT_EQ(warp_field(inner, DeformationField::zeros(d)), inner);

  const DeformationField by = testing::random_field(d, 2, 1.5f);
  const auto c = DeformationField::constant(d, {0.25f, -1.0f, 3.0f});
  EXPECT_EQ(warp_field(c, by), c);

  const DeformationField out = warp_field(inner, by);
  for (int k = 0; k < 3; ++k) {
    const VolumeGrid comp(d, {1.0, 1.0, 1.0},
                          std::vector<float>(inner.component(k), inner.component(k) + d.count()));
    const VolumeGrid w = warp(comp, by);
    for (std::size_t i = 0; i < d.count(); ++i) {
      EXPECT_EQ(out.component(k)[i], w.data()[i]);
    }
  }
}

TEST(Compose, IdentityElementAndTranslations) {
  const Dims d{6, 5, 4};
  const DeformationField f = testing::random_field(d, 3, 1.0f);
  const DeformationField zero = DeformationField::zeros(d);
  EXPECT_EQ(compose(zero, f), f);
  EXPECT_EQ(compose(f, zero), f);
  const auto c1 = DeformationField::constant(d, {0.5f, -1.0f, 0.25f});
  const auto c2 = DeformationField::constant(d, {1.0f, 0.5f, -0.75f});
  EXPECT_EQ(compose(c1, c2), DeformationField::constant(d, {1.5f, -0.5f, -0.5f}));
}

TEST(Compose, MatchesSequentialWarpOnAffineImage) {
  // warp(I, compose(first, then)) == warp(warp(I, then), first) when every
  // sample stays inside and I is affine.
  const Dims d{10, 9, 8};
  const VolumeGrid img = affine_image(d, 0.1, 0.5, 0.25, -0.3);
  const auto first = DeformationField::constant(d, {0.3f, -0.2f, 0.4f});
  const auto then = DeformationField::constant(d, {-0.6f, 0.7f, 0.1f});
  const VolumeGrid a = warp(img, compose(first, then));
  const VolumeGrid b = warp(warp(img, then), first);
  for (int z = 1; z < d.nz - 2; ++z)
    for (int y = 1; y < d.ny - 2; ++y)
      for (int x = 1; x < d.nx - 2; ++x) EXPECT_NEAR(a.at(x, y, z), b.at(x, y, z), 1e-5);
}

PhantomSpec small_phantom() {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  return s;
}

// Distance, in voxels, from template point p to the nearest shell where the
// phantom's radial profile or twist switches formula. The analytic map is only
// piecewise smooth across these shells, so trilinear resampling is not held
// to the sub-voxel bound there.
double distance_to_profile_shell(const PhantomSpec& s, std::array<double, 3> p) {
  std::array<double, 3> u;
  for (int i = 0; i < 3; ++i) u[i] = (p[i] - s.center[i]) / s.semi_axes[i];
  const double q = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
  const double amean = (s.semi_axes[0] + s.semi_axes[1] + s.semi_axes[2]) / 3.0;
  const double amin = std::min({s.semi_axes[0], s.semi_axes[1], s.semi_axes[2]});
  const double qe = 1.0 + s.thickness / amean;
  const double shells[] = {s.core_fraction, 1.0, qe, qe + s.taper_width / amean};
  double best = std::abs(std::abs(u[2]) - 1.0) * s.semi_axes[2];
  for (double k : shells) best = std::min(best, std::abs(q - k) * amin);
  return best;
}

TEST(Compose, AnalyticPhantomInversePairCancels) {
  const PhantomSpec s = small_phantom();
  const Dims& d = s.dims;
  const DeformationField ab = analytic_field(s, 0, 5);
  const DeformationField ba = analytic_field(s, 5, 0);
  const DeformationField r = compose(ab, ba);
  double worst = 0.0, mean = 0.0;
  int kept = 0;
  for (int z = 2; z < d.nz - 2; ++z)
    for (int y = 2; y < d.ny - 2; ++y)
      for (int x = 2; x < d.nx - 2; ++x) {
        const auto i = d.index(x, y, z);
        const auto u = r.at(i);
        const double m =
            std::sqrt(double(u[0]) * u[0] + double(u[1]) * u[1] + double(u[2]) * u[2]);
        mean += m;
        // ba is resampled at p + ab(p), a point of phase 0.
        const auto w = ab.at(i);
        const std::array<double, 3> q0{x + w[0], y + w[1], z + w[2]};
        if (distance_to_profile_shell(s, phase_map_inverse(s, 0.0, q0)) < 2.0) continue;
        worst = std::max(worst, m);
        ++kept;
      }
  EXPECT_LT(mean / ((d.nx - 4) * (d.ny - 4) * (d.nz - 4)), 0.05);
  EXPECT_GT(kept, (d.nx - 4) * (d.ny - 4) * (d.nz - 4) / 2);
  EXPECT_LT(worst, 0.1);
}

TEST(Invert, TranslationZeroAndPhantomField) {
  const Dims d{6, 6, 6};
  const auto c = DeformationField::constant(d, {1.5f, -0.5f, 2.0f});
  const FieldInverse one = invert_field(c, 1);
  EXPECT_EQ(one.field, DeformationField::constant(d, {-1.5f, 0.5f, -2.0f}));
  EXPECT_EQ(invert_field(DeformationField::zeros(d)).field, DeformationField::zeros(d));

  const PhantomSpec s = small_phantom();
  const DeformationField f = analytic_field(s, 0, 5);
  const FieldInverse inv = invert_field(f, 10);
  EXPECT_LT(inv.residual, 0.1);
  EXPECT_EQ(inv.trace.size(), 11u);
  const DeformationField truth = analytic_field(s, 5, 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.dims.count(); ++i) {
    const auto a = inv.field.at(i), b = truth.at(i);
    acc += std::sqrt(std::pow(a[0] - b[0], 2.0) + std::pow(a[1] - b[1], 2.0) +
                     std::pow(a[2] - b[2], 2.0));
  }
  EXPECT_LT(acc / s.dims.count(), 0.1);
}

TEST(Invert, DivergenceCarriesTrace) {
  // u_x = -1.5 (x - c) folds space, so the fixed point moves away.
  const Dims d{16, 4, 4};
  std::vector<float> v(3 * d.count(), 0.0f);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) v[d.index(x, y, z)] = -1.5f * (x - 7.5f);
  try {
    invert_field(DeformationField(d, {1.0, 1.0, 1.0}, v), 10);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("residual trace"), std::string::npos);
  }
}

TEST(Compose, AssociativeUpToInterpolationOnSmoothFields) {
  // Windowed fields keep every sample inside; clamp-to-edge is not
  // associative where samples leave the volume.
  const Dims d{24, 22, 20};
  for (unsigned seed = 1; seed <= 3; ++seed) {
    const auto a = testing::smooth_field(d, seed, 2.0f, true);
    const auto b = testing::smooth_field(d, seed + 10, 2.0f, true);
    const auto c = testing::smooth_field(d, seed + 20, 2.0f, true);
    const auto l = compose(compose(a, b), c);
    const auto r = compose(a, compose(b, c));
    double worst = 0.0;
    for (std::size_t i = 0; i < l.data().size(); ++i) {
      worst = std::max(worst, std::abs(double(l.data()[i]) - r.data()[i]));
    }
    EXPECT_LE(worst, 0.05) << "seed " << seed;
  }
}

TEST(Invert, ResidualDecreasesWithIterations) {
  const Dims d{16, 14, 12};
  const auto f = testing::smooth_field(d, 7, 1.5f, true);
  const FieldInverse inv = invert_field(f, 8);
  for (std::size_t k = 1; k < inv.trace.size(); ++k) EXPECT_LT(inv.trace[k], inv.trace[k - 1]);
}

TEST(DistanceMap, BoundedAndZeroOnRegion) {
  const Dims d{12, 10, 8};
  const auto f = testing::smooth_field(d, 3, 2.0f);
  const VolumeGrid m = motion_distance_map(f);
  const VolumeGrid mag = field_magnitude(f);
  std::vector<float> sorted = mag.data();
  std::sort(sorted.begin(), sorted.end());
  // Nearest-rank 90th percentile.
  const float thr = sorted[static_cast<std::size_t>(std::ceil(0.9 * sorted.size())) - 1];
  int zeros = 0;
  for (std::size_t i = 0; i < d.count(); ++i) {
    EXPECT_GE(m.data()[i], 0.0f);
    EXPECT_LE(m.data()[i], 1.0f);
    if (mag.data()[i] >= thr) {
      EXPECT_EQ(m.data()[i], 0.0f);
      ++zeros;
    } else {
      EXPECT_GT(m.data()[i], 0.0f);
    }
  }
  EXPECT_GT(zeros, 0);
}

TEST(Magnitude, ThreeFourFiveAndOracle) {
  const Dims d{3, 3, 3};
  const VolumeGrid m = field_magnitude(DeformationField::constant(d, {3.0f, 4.0f, 0.0f}));
  for (float v : m.data()) EXPECT_FLOAT_EQ(v, 5.0f);
  const VolumeGrid z = field_magnitude(DeformationField::zeros(d));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  const DeformationField f = testing::random_field(d, 9, 2.0f);
  const VolumeGrid r = field_magnitude(f);
  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto u = f.at(i);
    EXPECT_NEAR(r.data()[i], std::hypot(u[0], u[1], u[2]), 1e-6);
  }
}

TEST(DistanceMap, ZeroFieldGivesZeros) {
  const Dims d{5, 5, 5};
  const VolumeGrid m = motion_distance_map(DeformationField::zeros(d));
  for (float v : m.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DistanceMap, SingleVoxelCornerExample) {
  const Dims d{3, 3, 3};
  std::vector<float> f(3 * d.count(), 0.0f);
  f[d.index(0, 0, 0)] = 1.0f;
  const VolumeGrid m = motion_distance_map(DeformationField(d, {1.0, 1.0, 1.0}, f));
  EXPECT_FLOAT_EQ(m.at(2, 2, 2), 1.0f);
  EXPECT_FLOAT_EQ(m.at(0, 0, 0), 0.0f);
  EXPECT_NEAR(m.at(1, 0, 0), 1.0 / std::sqrt(12.0), 1e-6);
}

TEST(DistanceMap, RejectsBadQuantile) {
  EXPECT_THROW(motion_distance_map(DeformationField::zeros({3, 3, 3}), {1.0}),
               ValidationError);
}

TEST(EuclideanDistance, MatchesBruteForce) {
  const Dims d{7, 6, 5};
  const Spacing sp{1.0, 1.5, 2.0};
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto mask = testing::random_mask(d, seed, 0.05);
    const auto edt = squared_edt(mask.labels(), d, sp);
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          double best = std::numeric_limits<double>::infinity();
          for (int k = 0; k < d.nz; ++k)
            for (int j = 0; j < d.ny; ++j)
              for (int i = 0; i < d.nx; ++i) {
                if (!mask.labels()[d.index(i, j, k)]) continue;
                const double dx = (x - i) * sp[0], dy = (y - j) * sp[1], dz = (z - k) * sp[2];
                best = std::min(best, dx * dx + dy * dy + dz * dz);
              }
          EXPECT_NEAR(edt[d.index(x, y, z)], best, 1e-9);
        }
  }
}

TEST(EuclideanDistance, EmptyRegionIsInfinite) {
  const Dims d{3, 2, 2};
  const auto edt = squared_edt(std::vector<std::uint8_t>(d.count(), 0), d);
  for (double v : edt) {
    EXPECT_TRUE(std::isinf(v));
  }
}

}  // namespace
}  // namespace cardioseq
