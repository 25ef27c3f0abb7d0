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
#include <fstream>
#include <iterator>
#include <set>

#include "cardioseq/error.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/transform.hpp"
#include "test_util.hpp"

namespace cardioseq {
namespace {

PhantomSpec clean_spec() {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  return s;
}

std::size_t cavity_voxels(const PhantomSpec& s, int t) { return render_mask(s, t).count(1); }

double mean_epe(const DeformationField& a, const DeformationField& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dims().count(); ++i) {
    const auto u = a.at(i), v = b.at(i);
    acc += std::hypot(double(u[0]) - v[0], double(u[1]) - v[1], double(u[2]) - v[2]);
  }
  return acc / a.dims().count();
}

double mean_abs_diff(const VolumeGrid& a, const VolumeGrid& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a.data()[i]) - b.data()[i]);
  return acc / a.size();
}

TEST(Phantom, EjectionFractionHalfGivesHalfVolumeAtEndSystole) {
  PhantomSpec s = clean_spec();
  s.ejection_fraction = 0.5;
  const double ratio = double(cavity_voxels(s, s.time_points / 2)) / cavity_voxels(s, 0);
  EXPECT_NEAR(ratio, 0.5, 0.05 * 0.5);
}

TEST(Phantom, DefaultEjectionFractionRealized) {
  const PhantomSpec s = clean_spec();
  const double ratio = double(cavity_voxels(s, s.time_points / 2)) / cavity_voxels(s, 0);
  EXPECT_NEAR(ratio, 1.0 - s.ejection_fraction, 0.05 * (1.0 - s.ejection_fraction));
}

TEST(Phantom, VolumeCurveMonotoneWithBoundedAdjacentSteps) {
  const PhantomSpec s = clean_spec();
  std::vector<double> v;
  for (int t = 0; t < s.time_points; ++t) v.push_back(double(cavity_voxels(s, t)));
  for (int t = 0; t < 5; ++t) EXPECT_GT(v[t], v[t + 1]) << "systole at t" << t;
  for (int t = 5; t < 9; ++t) EXPECT_LT(v[t], v[t + 1]) << "diastole at t" << t;
  for (int t = 0; t < s.time_points; ++t) {
    const double step = std::abs(v[(t + 1) % s.time_points] - v[t]) / v[0];
    EXPECT_LE(step, 0.15) << "t" << t;
  }
}

TEST(Phantom, NoiseFreeUntwistedFrameUsesThreeIntensities) {
  PhantomSpec s = clean_spec();
  s.max_twist_deg = 0.0;
  for (double ef : {0.2, 0.45, 0.6}) {
    s.ejection_fraction = ef;
    const VolumeGrid ed = render_clean(s, 0);
    const std::set<float> values(ed.data().begin(), ed.data().end());
    EXPECT_EQ(values, (std::set<float>{0.2f, 0.55f, 0.8f}));
  }
}

TEST(Phantom, AnalyticFieldsReproduceNextFrame) {
  const PhantomSpec s = clean_spec();
  const PhantomSequence seq = generate(s);
  for (int t = 0; t < s.time_points; ++t) {
    const int t1 = (t + 1) % s.time_points;
    EXPECT_LT(mean_abs_diff(warp(seq.frames[t], seq.forward[t]), seq.frames[t1]), 0.02) << t;
    EXPECT_LT(mean_abs_diff(warp(seq.frames[t1], seq.backward[t]), seq.frames[t]), 0.02) << t;
  }
}

TEST(Phantom, AdjacentPairsAreInversesOfEachOther) {
  const PhantomSequence seq = generate(clean_spec());
  for (std::size_t t = 0; t < seq.forward.size(); ++t) {
    EXPECT_LT(mean_magnitude(compose(seq.forward[t], seq.backward[t])), 0.05) << t;
    EXPECT_LT(mean_magnitude(compose(seq.backward[t], seq.forward[t])), 0.05) << t;
  }
}

TEST(Phantom, ArbitraryPairFieldMatchesChainAndInverse) {
  const PhantomSpec s = clean_spec();
  EXPECT_EQ(analytic_field(s, 3, 3), DeformationField::zeros(s.dims));
  // phi_{0->4} = compose(first = phi_{1->4}, then = phi_{0->1}), recursively.
  DeformationField chain = analytic_field(s, 3, 4);
  for (int k = 2; k >= 0; --k) chain = compose(chain, analytic_field(s, k, k + 1));
  EXPECT_LT(mean_epe(chain, analytic_field(s, 0, 4)), 0.1);
  const FieldInverse inv = invert_field(analytic_field(s, 2, 6));
  EXPECT_LT(mean_epe(inv.field, analytic_field(s, 6, 2)), 0.05);
}

TEST(Phantom, PhaseMapInverseIsExact) {
  const PhantomSpec s = clean_spec();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 47.0);
  for (int i = 0; i < 1000; ++i) {
    const std::array<double, 3> p{u(rng), u(rng), u(rng)};
    const double t = 0.37 * (i % 27);
    const auto back = phase_map_inverse(s, t, phase_map(s, t, p));
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(back[a], p[a], 1e-9);
  }
}

TEST(Phantom, JacobiansPositiveEverywhere) {
  const PhantomSpec s = clean_spec();
  const PhantomSequence seq = generate(s);
  for (std::size_t t = 0; t < seq.forward.size(); ++t) {
    EXPECT_GT(min_jacobian_determinant(seq.forward[t]), 0.0) << t;
    EXPECT_GT(min_jacobian_determinant(seq.backward[t]), 0.0) << t;
  }
  EXPECT_GT(min_jacobian_determinant(analytic_field(s, 0, 5)), 0.0);
  EXPECT_GT(min_jacobian_determinant(analytic_field(s, 5, 0)), 0.0);
}

TEST(Phantom, PapillaryBodiesAreCavityWithMyocardialIntensity) {
  const PhantomSpec s = clean_spec();
  const PhantomSequence seq = generate(s);
  for (int t : {0, 5}) {
    std::size_t bright_cavity = 0;
    for (std::size_t i = 0; i < s.dims.count(); ++i) {
      if (seq.masks[t].labels()[i] == 1 && seq.frames[t].data()[i] == 0.8f) ++bright_cavity;
    }
    EXPECT_GT(bright_cavity, 50u) << "t" << t;
  }
}

TEST(Phantom, SameSeedIsBitIdenticalAndSeedsDiffer) {
  PhantomSpec s;
  s.time_points = 3;
  const PhantomSequence a = generate(s), b = generate(s);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.forward, b.forward);
  s.seed = 2;
  EXPECT_NE(generate(s).frames, a.frames);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Phantom, ExportRoundTripAndManifestOrder) {
  testing::TempDir tmp;
  PhantomSpec s;
  s.time_points = 4;
  const PhantomSequence seq = generate(s);
  const StudyManifest m = export_study(seq, tmp.path() / "a", "study-a");
  ASSERT_EQ(m.volumes.size(), 4u);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(m.volumes[t], "t" + std::to_string(t) + ".vol");
  EXPECT_EQ(m.fields.front(), "t0to1.field");
  EXPECT_EQ(m.fields[3], "t3to0.field");
  EXPECT_EQ(m.fields[4], "t1to0.field");

  const PhantomStudy back = load_phantom_study(tmp.path() / "a");
  EXPECT_EQ(back.study.frames, seq.frames);
  EXPECT_EQ(back.study.masks, seq.masks);
  EXPECT_EQ(back.forward, seq.forward);
  EXPECT_EQ(back.backward, seq.backward);
  EXPECT_EQ(back.study.manifest.study_id, "study-a");

  export_study(generate(s), tmp.path() / "b", "study-a");
  for (const auto& entry : std::filesystem::directory_iterator(tmp.path() / "a")) {
    EXPECT_EQ(file_bytes(entry.path()), file_bytes(tmp.path() / "b" / entry.path().filename()))
        << entry.path().filename();
  }
}

TEST(Phantom, SpecValidation) {
  PhantomSpec s;
  s.ejection_fraction = 1.0;
  EXPECT_THROW(validate(s), ValidationError);
  s = PhantomSpec{};
  s.time_points = 1;
  EXPECT_THROW(validate(s), ValidationError);
  s = PhantomSpec{};
  s.semi_axes = {20.0, 20.0, 20.0};
  EXPECT_THROW(generate(s), ValidationError);
  s = PhantomSpec{};
  EXPECT_THROW(analytic_field(s, 0, 10), ValidationError);
}

TEST(Phantom, CohortSpecsAreDeterministicAndDistinct) {
  const PhantomSpec base;
  const PhantomSpec a = cohort_spec(base, 2), b = cohort_spec(base, 2), c = cohort_spec(base, 3);
  EXPECT_EQ(a.semi_axes, b.semi_axes);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_NE(a.semi_axes, c.semi_axes);
  EXPECT_NE(a.seed, c.seed);
  for (int i = 0; i < 8; ++i) EXPECT_NO_THROW(validate(cohort_spec(base, i)));
}

TEST(Phantom, SpecJsonRoundTripAndRejection) {
  PhantomSpec s;
  s.dims = {24, 24, 24};
  s.center = {11.5, 11.5, 11.5};
  s.semi_axes = {5.0, 5.0, 6.0};
  s.thickness = 2.0;
  s.seed = 9;
  const auto j = to_json(s);
  EXPECT_EQ(to_json(phantom_spec_from_json(j)), j);
  EXPECT_EQ(phantom_spec_from_json(nlohmann::json::object()).dims, PhantomSpec{}.dims);
  auto bad = j;
  bad["radius"] = 3;
  EXPECT_THROW(phantom_spec_from_json(bad), ValidationError);
  bad = j;
  bad["ejection_fraction"] = "high";
  EXPECT_THROW(phantom_spec_from_json(bad), ValidationError);
}

}  // namespace
}  // namespace cardioseq
