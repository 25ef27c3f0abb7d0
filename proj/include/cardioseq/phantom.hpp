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

// Synthetic beating-ventricle phantom with analytic ground truth.
//
// Geometry lives in normalized ellipsoid coordinates u = (p - c) / a, with
// q = |u|. The end-diastolic template has the cavity at q <= 1, the
// myocardial shell at 1 < q <= q_epi and background beyond. Phase t maps the
// template through a radial profile followed by a twist about z; both steps
// have closed-form inverses, so fields between any two phases are exact up to
// floating point.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cardioseq/volume.hpp"
#include "json.hpp"

namespace cardioseq {

struct PhantomSpec {
  Dims dims{48, 48, 48};
  int time_points = 10;
  std::array<double, 3> center{23.5, 23.5, 23.5};
  std::array<double, 3> semi_axes{9.5, 9.5, 12.0};  // ED cavity, voxels
  double thickness = 3.5;                           // myocardium, voxels
  double ejection_fraction = 0.45;
  double max_twist_deg = 8.0;
  int papillary_count = 2;
  double papillary_radius = 2.2;  // voxels
  double papillary_azimuth_deg = 30.0;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;
  Spacing spacing{1.0, 1.0, 1.0};

  // Inner cavity core (q <= core_fraction) contracts less than the boundary;
  // the layer in between compresses so the papillary bodies approach the wall
  // at end-systole. `es_gap_slope` is that layer's radial stretch at ES.
  double core_fraction = 0.85;
  double es_gap_slope = 0.2;
  double taper_width = 4.0;  // voxels beyond the epicardium where motion fades
};

// Throws ValidationError when the spec is not realizable.
void validate(const PhantomSpec& spec);

// Contraction fraction in [0, 1]: sin^2(pi t / T).
double contraction(const PhantomSpec& spec, double t);
// Cavity scale s(t) = 1 - a sin^2(pi t / T), a = 1 - (1 - EF)^(1/3).
double cavity_scale(const PhantomSpec& spec, double t);

// Template point -> its position at phase t, and the inverse.
std::array<double, 3> phase_map(const PhantomSpec& spec, double t, std::array<double, 3> p);
std::array<double, 3> phase_map_inverse(const PhantomSpec& spec, double t,
                                        std::array<double, 3> p);

enum class Tissue : std::uint8_t { kBackground, kMyocardium, kBlood, kPapillary };
Tissue template_tissue(const PhantomSpec& spec, std::array<double, 3> p);
float tissue_intensity(Tissue tissue);
inline bool is_cavity(Tissue t) { return t == Tissue::kBlood || t == Tissue::kPapillary; }

struct PhantomSequence {
  PhantomSpec spec;
  std::vector<VolumeGrid> frames;
  std::vector<LabelMask> masks;
  // forward[k] warps frame k onto frame (k + 1) % T; backward[k] the reverse.
  std::vector<DeformationField> forward;
  std::vector<DeformationField> backward;
};

// Noise-free rendering of phase t.
VolumeGrid render_clean(const PhantomSpec& spec, int t);
LabelMask render_mask(const PhantomSpec& spec, int t);

PhantomSequence generate(const PhantomSpec& spec);

// phi(p) = M_from(M_to^-1(p)) - p, so warp(frame_from, phi) ~ frame_to.
DeformationField analytic_field(const PhantomSpec& spec, int t_from, int t_to);

// Minimum finite-difference Jacobian determinant of identity + field.
double min_jacobian_determinant(const DeformationField& f);

// Layout: manifest.json, t{k}.vol, t{k}.mask, t{k}to{k+1}.field and
// t{k+1}to{k}.field for every cyclic adjacent pair.
StudyManifest export_study(const PhantomSequence& seq, const std::filesystem::path& dir,
                           const std::string& study_id);

// Reload a study written by export_study, including its fields.
struct PhantomStudy {
  LoadedStudy study;
  std::vector<DeformationField> forward;
  std::vector<DeformationField> backward;
};
PhantomStudy load_phantom_study(const std::filesystem::path& dir);

// Per-study variation around `base` (semi-axes, center, thickness, papillary
// placement, noise seed). Deterministic in (base.seed, index).
PhantomSpec cohort_spec(const PhantomSpec& base, int index);

nlohmann::json to_json(const PhantomSpec& spec);
// Missing keys keep their defaults; unknown keys are rejected.
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

}  // namespace cardioseq
