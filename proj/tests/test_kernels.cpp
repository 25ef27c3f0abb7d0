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
#include <tuple>

#include "cardioseq/error.hpp"
#include "cardioseq/kernels.hpp"
#include "test_util.hpp"

namespace cardioseq::kernels {
namespace {

// Direct seven-loop definition, written independently of the library.
void oracle_forward(const ConvGeometry& g, const std::vector<double>& in,
                    const std::vector<double>& w, const std::vector<double>& b,
                    std::vector<double>& out) {
  const Dims &di = g.in, &d = g.out;
  out.assign(static_cast<std::size_t>(g.cout) * d.count(), 0.0);
  for (int co = 0; co < g.cout; ++co) {
    for (int z = 0; z < d.nz; ++z) {
      for (int y = 0; y < d.ny; ++y) {
        for (int x = 0; x < d.nx; ++x) {
          double acc = b[co];
          for (int ci = 0; ci < g.cin; ++ci) {
            for (int k = 0; k < 27; ++k) {
              const int ix = x * g.stride + k % 3 - g.pad;
              const int iy = y * g.stride + (k / 3) % 3 - g.pad;
              const int iz = z * g.stride + k / 9 - g.pad;
              if (ix < 0 || iy < 0 || iz < 0 || ix >= di.nx || iy >= di.ny || iz >= di.nz) continue;
              acc += w[(co * g.cin + ci) * 27 + k] * in[ci * di.count() + di.index(ix, iy, iz)];
            }
          }
          out[co * d.count() + d.index(x, y, z)] = acc;
        }
      }
    }
  }
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

struct Case {
  int cin, cout, nx, ny, nz, stride, pad;
};

class KernelEquivalence : public ::testing::TestWithParam<Case> {};

TEST_P(KernelEquivalence, ScalarMatchesOracleInDouble) {
  const Case c = GetParam();
  const auto g = conv_geometry(c.cin, c.cout, Dims{c.nx, c.ny, c.nz}, c.stride, c.pad);
  const auto in = to_double(testing::random_values(c.cin * g.in.count(), 1));
  const auto w = to_double(testing::random_values(g.weight_count(), 2));
  const auto b = to_double(testing::random_values(c.cout, 3));
  std::vector<double> ref;
  oracle_forward(g, in, w, b, ref);
  std::vector<double> out(ref.size());
  scalar::conv3d_forward(g, in.data(), w.data(), b.data(), out.data());
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], ref[i], 1e-12);

  // Adjoint identity: <conv(x), y> == <x, conv^T(y)> and == <w, d/dw>.
  const auto gout = to_double(testing::random_values(out.size(), 4));
  std::vector<double> gin(in.size(), 0.0), gw(w.size(), 0.0), gb(b.size(), 0.0);
  scalar::conv3d_backward_input(g, w.data(), gout.data(), gin.data());
  scalar::conv3d_backward_weight(g, in.data(), gout.data(), gw.data(), gb.data());
  std::vector<double> nobias;
  oracle_forward(g, in, w, std::vector<double>(b.size(), 0.0), nobias);
  double lhs = 0.0, rhs_in = 0.0, rhs_w = 0.0;
  for (std::size_t i = 0; i < nobias.size(); ++i) lhs += nobias[i] * gout[i];
  for (std::size_t i = 0; i < in.size(); ++i) rhs_in += in[i] * gin[i];
  for (std::size_t i = 0; i < w.size(); ++i) rhs_w += w[i] * gw[i];
  EXPECT_NEAR(lhs, rhs_in, 1e-9 * (1.0 + std::abs(lhs)));
  EXPECT_NEAR(lhs, rhs_w, 1e-9 * (1.0 + std::abs(lhs)));
  for (int co = 0; co < c.cout; ++co) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.out.count(); ++i) s += gout[co * g.out.count() + i];
    EXPECT_NEAR(gb[co], s, 1e-9);
  }
}

// Every AVX2 variant applicable to the geometry against the scalar reference.
TEST_P(KernelEquivalence, Avx2MatchesScalar) {
  if (detected_simd_level() != SimdLevel::kAvx2) GTEST_SKIP() << "no AVX2 on this CPU";
  const Case c = GetParam();
  const auto g = conv_geometry(c.cin, c.cout, Dims{c.nx, c.ny, c.nz}, c.stride, c.pad);
  const auto in = testing::random_values(c.cin * g.in.count(), 11);
  const auto w = testing::random_values(g.weight_count(), 12);
  const auto b = testing::random_values(c.cout, 13);
  const auto gout = testing::random_values(c.cout * g.out.count(), 14);
  const double tol = 1e-5 * c.cin * 27;

  std::vector<float> ref(gout.size()), gin_ref(in.size(), 0.5f), gw_ref(w.size(), 0.25f),
      gb_ref(b.size(), 0.125f);
  scalar::conv3d_forward(g, in.data(), w.data(), b.data(), ref.data());
  scalar::conv3d_backward_input(g, w.data(), gout.data(), gin_ref.data());
  scalar::conv3d_backward_weight(g, in.data(), gout.data(), gw_ref.data(), gb_ref.data());

  std::vector<float> out(ref.size()), gin(in.size(), 0.5f), gw(w.size(), 0.25f),
      gb(b.size(), 0.125f);
  avx2::conv3d_forward_cv(g, in.data(), w.data(), b.data(), out.data());
  avx2::conv3d_backward_input_cv(g, w.data(), gout.data(), gin.data());
  avx2::conv3d_backward_weight_cv(g, in.data(), gout.data(), gw.data(), gb.data());
  EXPECT_LT(max_abs_diff(out, ref), tol);
  EXPECT_LT(max_abs_diff(gin, gin_ref), tol);
  EXPECT_LT(max_abs_diff(gw, gw_ref), 1e-5 * g.out.count());
  EXPECT_LT(max_abs_diff(gb, gb_ref), 1e-5 * g.out.count());

  if (c.stride == 1 && c.pad == 1) {
    std::vector<float> o2(ref.size()), gi2(in.size(), 0.5f), gw2(w.size(), 0.25f),
        gb2(b.size(), 0.125f);
    avx2::conv3d_forward(g, in.data(), w.data(), b.data(), o2.data());
    avx2::conv3d_backward_input(g, w.data(), gout.data(), gi2.data());
    avx2::conv3d_backward_weight(g, in.data(), gout.data(), gw2.data(), gb2.data());
    EXPECT_LT(max_abs_diff(o2, ref), tol);
    EXPECT_LT(max_abs_diff(gi2, gin_ref), tol);
    EXPECT_LT(max_abs_diff(gw2, gw_ref), 1e-5 * g.out.count());
    EXPECT_LT(max_abs_diff(gb2, gb_ref), 1e-5 * g.out.count());
  }
}

INSTANTIATE_TEST_SUITE_P(
    Geometries, KernelEquivalence,
    ::testing::Values(Case{1, 1, 5, 4, 3, 1, 1}, Case{2, 8, 8, 8, 8, 1, 1},
                      Case{3, 5, 9, 7, 6, 1, 1}, Case{8, 16, 17, 5, 4, 1, 1},
                      Case{4, 12, 20, 3, 3, 1, 1}, Case{5, 3, 33, 2, 2, 1, 1},
                      Case{8, 16, 8, 8, 8, 2, 1}, Case{3, 7, 9, 6, 5, 2, 1},
                      Case{16, 40, 4, 4, 4, 2, 1}, Case{6, 9, 7, 7, 7, 1, 0},
                      Case{4, 4, 8, 6, 4, 2, 0}, Case{2, 33, 6, 5, 4, 1, 1}));

TEST(KernelDispatch, ForcedScalarAgreesWithDefault) {
  const auto g = conv_geometry(4, 8, Dims{16, 8, 8}, 1, 1);
  const auto in = testing::random_values(4 * g.in.count(), 21);
  const auto w = testing::random_values(g.weight_count(), 22);
  const auto b = testing::random_values(8, 23);
  std::vector<float> a(8 * g.out.count()), s(a.size());
  conv3d_forward(g, in.data(), w.data(), b.data(), a.data());
  const SimdLevel prior = set_simd_level(SimdLevel::kScalar);
  EXPECT_EQ(active_simd_level(), SimdLevel::kScalar);
  conv3d_forward(g, in.data(), w.data(), b.data(), s.data());
  set_simd_level(prior);
  EXPECT_LT(max_abs_diff(a, s), 1e-4);
}

TEST(KernelGeometry, OutputExtentsAndValidation) {
  const auto g = conv_geometry(1, 1, Dims{9, 8, 7}, 2, 1);
  EXPECT_EQ(g.out, (Dims{5, 4, 4}));
  EXPECT_THROW(conv_geometry(1, 1, Dims{4, 4, 4}, 3, 1), ValidationError);
  EXPECT_THROW(conv_geometry(0, 1, Dims{4, 4, 4}, 1, 1), ValidationError);
}

}  // namespace
}  // namespace cardioseq::kernels
