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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cardioseq {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  // x-fastest linear layout.
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
  }
  bool operator==(const Dims&) const = default;
};

using Spacing = std::array<double, 3>;

std::string to_string(const Dims& d);

// Scalar intensity volume. Immutable once constructed; all samples finite.
class VolumeGrid {
 public:
  VolumeGrid() = default;
  VolumeGrid(Dims dims, Spacing spacing, std::vector<float> data);
  static VolumeGrid zeros(Dims dims, Spacing spacing = {1.0, 1.0, 1.0});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::vector<float>& data() const { return data_; }
  float at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }
  std::size_t size() const { return data_.size(); }

  bool operator==(const VolumeGrid&) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

// Displacement per voxel in voxel units, stored channel-major (all u_x, then
// all u_y, then all u_z).
class DeformationField {
 public:
  DeformationField() = default;
  DeformationField(Dims dims, Spacing spacing, std::vector<float> data);
  static DeformationField zeros(Dims dims, Spacing spacing = {1.0, 1.0, 1.0});
  static DeformationField constant(Dims dims, std::array<float, 3> u,
                                   Spacing spacing = {1.0, 1.0, 1.0});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::vector<float>& data() const { return data_; }
  const float* component(int c) const { return data_.data() + c * dims_.count(); }
  std::array<float, 3> at(std::size_t voxel) const {
    const std::size_t n = dims_.count();
    return {data_[voxel], data_[n + voxel], data_[2 * n + voxel]};
  }

  bool operator==(const DeformationField&) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> labels,
            int num_classes = 2);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  int num_classes() const { return num_classes_; }
  std::size_t count(int label) const;

  bool operator==(const LabelMask&) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> labels_;
  int num_classes_ = 2;
};

// Per-voxel class probabilities, class-major.
class ProbabilityMap {
 public:
  ProbabilityMap() = default;
  ProbabilityMap(Dims dims, int num_classes, std::vector<float> probs);

  const Dims& dims() const { return dims_; }
  int num_classes() const { return num_classes_; }
  const std::vector<float>& data() const { return probs_; }
  float at(int cls, std::size_t voxel) const {
    return probs_[static_cast<std::size_t>(cls) * dims_.count() + voxel];
  }
  // Ties resolve to the lowest class index (background).
  LabelMask argmax(Spacing spacing = {1.0, 1.0, 1.0}) const;

 private:
  Dims dims_;
  int num_classes_ = 2;
  std::vector<float> probs_;
};

// ---- file format ---------------------------------------------------------
//
// <stem>.json : {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"channels":c,
//                "dtype":"f32"|"u8"}
// <stem>.raw  : little-endian samples, channel-major then x-fastest.
//
// `path` may be given as the stem ("t0.vol") or as either member of the pair.

struct RawHeader {
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  int channels = 1;
  std::string dtype = "f32";
  int num_classes = 0;  // u8 masks only; 0 when absent
};

std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path raw_path(const std::filesystem::path& path);
RawHeader read_header(const std::filesystem::path& path);

void save_volume(const VolumeGrid& v, const std::filesystem::path& path);
VolumeGrid load_volume(const std::filesystem::path& path);
void save_field(const DeformationField& f, const std::filesystem::path& path);
DeformationField load_field(const std::filesystem::path& path);
void save_mask(const LabelMask& m, const std::filesystem::path& path);
LabelMask load_mask(const std::filesystem::path& path);

// ---- preprocessing -------------------------------------------------------

// Clamps the top `top_fraction` of voxels (by intensity) to the nearest-rank
// (1 - top_fraction) quantile. Requires 0 <= top_fraction < 1.
VolumeGrid clip_intensities(const VolumeGrid& v, double top_fraction);

// Min-max to [0, 1]. A constant volume maps to all zeros.
VolumeGrid normalize(const VolumeGrid& v);

// Nearest-rank value below which `1 - top_fraction` of samples lie: with N
// samples sorted ascending, returns sorted[N - 1 - floor(top_fraction * N)].
float upper_quantile(std::vector<float> values, double top_fraction);

// ---- study manifest ------------------------------------------------------

struct StudyManifest {
  std::string study_id;
  Spacing spacing{1.0, 1.0, 1.0};
  std::vector<std::string> volumes;  // relative stems, time order
  std::vector<std::string> masks;    // empty or one per volume
  std::vector<std::string> fields;   // optional t{k}to{k+1} stems
  std::filesystem::path directory;   // set on load; not serialized

  std::size_t time_points() const { return volumes.size(); }
  bool has_masks() const { return !masks.empty(); }
};

void save_manifest(const StudyManifest& m, const std::filesystem::path& file);
// Validates T >= 2 and that all referenced volumes share dims and spacing.
StudyManifest load_manifest(const std::filesystem::path& file_or_dir);

struct LoadedStudy {
  StudyManifest manifest;
  std::vector<VolumeGrid> frames;
  std::vector<LabelMask> masks;
};
LoadedStudy load_study(const std::filesystem::path& file_or_dir);

}  // namespace cardioseq
