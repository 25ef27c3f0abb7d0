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

#include "cardioseq/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cardioseq/error.hpp"
#include "json.hpp"

namespace cardioseq {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << d.nx << "x" << d.ny << "x" << d.nz;
  return os.str();
}

namespace {

void check_dims(const Dims& d) {
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) {
    throw ValidationError("dims must be positive, got " + to_string(d));
  }
}

void check_spacing(const Spacing& s) {
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("voxel spacing must be finite and > 0");
    }
  }
}

void check_finite(const std::vector<float>& data, const char* what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(std::string(what) + ": non-finite value at index " +
                            std::to_string(i));
    }
  }
}

}  // namespace

VolumeGrid::VolumeGrid(Dims dims, Spacing spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (data_.size() != dims_.count()) {
    throw ValidationError("volume data length " + std::to_string(data_.size()) +
                          " does not match dims " + to_string(dims_));
  }
  check_finite(data_, "volume");
}

VolumeGrid VolumeGrid::zeros(Dims dims, Spacing spacing) {
  return VolumeGrid(dims, spacing, std::vector<float>(dims.count(), 0.0f));
}

DeformationField::DeformationField(Dims dims, Spacing spacing,
                                   std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (data_.size() != 3 * dims_.count()) {
    throw ValidationError("field component count " +
                          std::to_string(data_.size()) + " != 3 x " +
                          to_string(dims_));
  }
  check_finite(data_, "deformation field");
}

DeformationField DeformationField::zeros(Dims dims, Spacing spacing) {
  return DeformationField(dims, spacing,
                          std::vector<float>(3 * dims.count(), 0.0f));
}

DeformationField DeformationField::constant(Dims dims, std::array<float, 3> u,
                                            Spacing spacing) {
  const std::size_t n = dims.count();
  std::vector<float> data(3 * n);
  for (int c = 0; c < 3; ++c) {
    std::fill_n(data.begin() + c * n, n, u[c]);
  }
  return DeformationField(dims, spacing, std::move(data));
}

LabelMask::LabelMask(Dims dims, Spacing spacing,
                     std::vector<std::uint8_t> labels, int num_classes)
    : dims_(dims),
      spacing_(spacing),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (num_classes_ < 2 || num_classes_ > 255) {
    throw ValidationError("num_classes must be in [2, 255]");
  }
  if (labels_.size() != dims_.count()) {
    throw ValidationError("mask length does not match dims " +
                          to_string(dims_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes_) {
      throw ValidationError("label " + std::to_string(labels_[i]) +
                            " at index " + std::to_string(i) +
                            " exceeds num_classes");
    }
  }
}

std::size_t LabelMask::count(int label) const {
  return static_cast<std::size_t>(
      std::count(labels_.begin(), labels_.end(), static_cast<std::uint8_t>(label)));
}

ProbabilityMap::ProbabilityMap(Dims dims, int num_classes,
                               std::vector<float> probs)
    : dims_(dims), num_classes_(num_classes), probs_(std::move(probs)) {
  check_dims(dims_);
  const std::size_t n = dims_.count();
  if (probs_.size() != n * static_cast<std::size_t>(num_classes_)) {
    throw ValidationError("probability map size mismatch");
  }
  for (std::size_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (int c = 0; c < num_classes_; ++c) {
      const float p = probs_[c * n + v];
      if (!(p >= 0.0f) || !std::isfinite(p)) {
        throw ValidationError("probability out of range at voxel " +
                              std::to_string(v));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-5) {
      throw ValidationError("probabilities do not sum to 1 at voxel " +
                            std::to_string(v));
    }
  }
}

LabelMask ProbabilityMap::argmax(Spacing spacing) const {
  const std::size_t n = dims_.count();
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    float best_p = probs_[v];
    for (int c = 1; c < num_classes_; ++c) {
      const float p = probs_[c * n + v];
      if (p > best_p) {
        best_p = p;
        best = c;
      }
    }
    labels[v] = static_cast<std::uint8_t>(best);
  }
  return LabelMask(dims_, spacing, std::move(labels), num_classes_);
}

// ---- file format ---------------------------------------------------------

namespace {

fs::path stem_of(const fs::path& path) {
  const std::string s = path.string();
  for (const char* ext : {".json", ".raw"}) {
    const std::string e(ext);
    if (s.size() > e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0) {
      return fs::path(s.substr(0, s.size() - e.size()));
    }
  }
  return path;
}

template <typename T>
void write_raw(const fs::path& file, const std::vector<T>& data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
  } else {
    for (T v : data) {
      auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
      std::reverse(bytes.begin(), bytes.end());
      out.write(bytes.data(), sizeof(T));
    }
  }
  if (!out) throw IoError("write failed: " + file.string());
}

template <typename T>
std::vector<T> read_raw(const fs::path& file, std::size_t expected) {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) throw IoError("missing raw file " + file.string());
  if (size != expected * sizeof(T)) {
    throw ValidationError("size mismatch: " + file.string() + " holds " +
                          std::to_string(size) + " bytes, header implies " +
                          std::to_string(expected * sizeof(T)));
  }
  std::vector<T> data(expected);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expected * sizeof(T)));
  if (!in) throw IoError("read failed: " + file.string());
  if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
    for (T& v : data) {
      auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
      std::reverse(bytes.begin(), bytes.end());
      v = std::bit_cast<T>(bytes);
    }
  }
  return data;
}

void write_header(const fs::path& file, const RawHeader& h) {
  json j;
  j["dims"] = {h.dims.nx, h.dims.ny, h.dims.nz};
  j["spacing"] = {h.spacing[0], h.spacing[1], h.spacing[2]};
  j["channels"] = h.channels;
  j["dtype"] = h.dtype;
  if (h.num_classes > 0) j["num_classes"] = h.num_classes;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + file.string());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

template <typename T>
std::vector<T> load_payload(const fs::path& path, const RawHeader& h,
                            int channels, const char* dtype) {
  if (h.channels != channels) {
    throw ValidationError(header_path(path).string() + ": expected " +
                          std::to_string(channels) + " channel(s), found " +
                          std::to_string(h.channels));
  }
  if (h.dtype != dtype) {
    throw ValidationError(header_path(path).string() + ": expected dtype " +
                          dtype + ", found " + h.dtype);
  }
  return read_raw<T>(raw_path(path), h.dims.count() * channels);
}

}  // namespace

fs::path header_path(const fs::path& path) {
  return fs::path(stem_of(path).string() + ".json");
}

fs::path raw_path(const fs::path& path) {
  return fs::path(stem_of(path).string() + ".raw");
}

RawHeader read_header(const fs::path& path) {
  const fs::path file = header_path(path);
  std::ifstream in(file);
  if (!in) throw IoError("missing header " + file.string());
  json j;
  try {
    in >> j;
    RawHeader h;
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto spacing = j.at("spacing").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3) {
      throw ValidationError(file.string() + ": dims/spacing need 3 entries");
    }
    h.dims = {dims[0], dims[1], dims[2]};
    h.spacing = {spacing[0], spacing[1], spacing[2]};
    h.channels = j.at("channels").get<int>();
    h.dtype = j.at("dtype").get<std::string>();
    h.num_classes = j.value("num_classes", 0);
    check_dims(h.dims);
    check_spacing(h.spacing);
    if (h.dtype != "f32" && h.dtype != "u8") {
      throw ValidationError(file.string() + ": unsupported dtype " + h.dtype);
    }
    return h;
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": malformed header (" + e.what() + ")");
  }
}

void save_volume(const VolumeGrid& v, const fs::path& path) {
  ensure_parent(header_path(path));
  write_header(header_path(path), {v.dims(), v.spacing(), 1, "f32", 0});
  write_raw(raw_path(path), v.data());
}

VolumeGrid load_volume(const fs::path& path) {
  const RawHeader h = read_header(path);
  return VolumeGrid(h.dims, h.spacing, load_payload<float>(path, h, 1, "f32"));
}

void save_field(const DeformationField& f, const fs::path& path) {
  ensure_parent(header_path(path));
  write_header(header_path(path), {f.dims(), f.spacing(), 3, "f32", 0});
  write_raw(raw_path(path), f.data());
}

DeformationField load_field(const fs::path& path) {
  const RawHeader h = read_header(path);
  return DeformationField(h.dims, h.spacing,
                          load_payload<float>(path, h, 3, "f32"));
}

void save_mask(const LabelMask& m, const fs::path& path) {
  ensure_parent(header_path(path));
  write_header(header_path(path),
               {m.dims(), m.spacing(), 1, "u8", m.num_classes()});
  write_raw(raw_path(path), m.labels());
}

LabelMask load_mask(const fs::path& path) {
  const RawHeader h = read_header(path);
  auto labels = load_payload<std::uint8_t>(path, h, 1, "u8");
  int classes = h.num_classes;
  if (classes == 0) {
    const auto mx = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    classes = std::max(2, static_cast<int>(mx) + 1);
  }
  return LabelMask(h.dims, h.spacing, std::move(labels), classes);
}

// ---- preprocessing -------------------------------------------------------

float upper_quantile(std::vector<float> values, double top_fraction) {
  if (values.empty()) throw ValidationError("quantile of empty set");
  const std::size_t n = values.size();
  const auto clipped = static_cast<std::size_t>(
      std::floor(top_fraction * static_cast<double>(n) + 1e-9));
  const std::size_t rank = n - 1 - std::min(clipped, n - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank),
                   values.end());
  return values[rank];
}

VolumeGrid clip_intensities(const VolumeGrid& v, double top_fraction) {
  if (!(top_fraction >= 0.0 && top_fraction < 1.0)) {
    throw ValidationError("clip fraction must lie in [0, 1)");
  }
  if (top_fraction == 0.0) return v;
  const float ceiling = upper_quantile(v.data(), top_fraction);
  std::vector<float> out = v.data();
  for (float& x : out) x = std::min(x, ceiling);
  return VolumeGrid(v.dims(), v.spacing(), std::move(out));
}

VolumeGrid normalize(const VolumeGrid& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<float> out(v.size(), 0.0f);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<float>((v.data()[i] - lo) / range);
    }
  }
  return VolumeGrid(v.dims(), v.spacing(), std::move(out));
}

// ---- study manifest ------------------------------------------------------

void save_manifest(const StudyManifest& m, const fs::path& file) {
  json j;
  j["study_id"] = m.study_id;
  j["spacing"] = {m.spacing[0], m.spacing[1], m.spacing[2]};
  j["time_points"] = m.volumes.size();
  j["volumes"] = m.volumes;
  if (!m.masks.empty()) j["masks"] = m.masks;
  if (!m.fields.empty()) j["fields"] = m.fields;
  ensure_parent(file);
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
}

StudyManifest load_manifest(const fs::path& file_or_dir) {
  fs::path file = file_or_dir;
  if (fs::is_directory(file)) file /= "manifest.json";
  std::ifstream in(file);
  if (!in) throw IoError("missing study manifest " + file.string());
  StudyManifest m;
  try {
    json j;
    in >> j;
    m.study_id = j.value("study_id", file.parent_path().filename().string());
    const auto sp = j.at("spacing").get<std::vector<double>>();
    if (sp.size() != 3) throw ValidationError("manifest spacing needs 3 entries");
    m.spacing = {sp[0], sp[1], sp[2]};
    m.volumes = j.at("volumes").get<std::vector<std::string>>();
    if (j.contains("masks")) m.masks = j["masks"].get<std::vector<std::string>>();
    if (j.contains("fields")) m.fields = j["fields"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": malformed manifest (" + e.what() + ")");
  }
  m.directory = file.parent_path();
  if (m.volumes.size() < 2) {
    throw ValidationError(file.string() + ": a study needs at least 2 time points");
  }
  if (!m.masks.empty() && m.masks.size() != m.volumes.size()) {
    throw ValidationError(file.string() + ": mask count differs from volume count");
  }
  std::optional<RawHeader> first;
  for (const auto& rel : m.volumes) {
    const RawHeader h = read_header(m.directory / rel);
    if (!first) {
      first = h;
    } else if (!(h.dims == first->dims) || h.spacing != first->spacing) {
      throw ValidationError(file.string() + ": volume " + rel +
                            " differs in dims or spacing");
    }
  }
  if (first->spacing != m.spacing) {
    throw ValidationError(file.string() + ": manifest spacing differs from volumes");
  }
  return m;
}

LoadedStudy load_study(const fs::path& file_or_dir) {
  LoadedStudy s;
  s.manifest = load_manifest(file_or_dir);
  for (const auto& rel : s.manifest.volumes) {
    s.frames.push_back(load_volume(s.manifest.directory / rel));
  }
  for (const auto& rel : s.manifest.masks) {
    s.masks.push_back(load_mask(s.manifest.directory / rel));
  }
  return s;
}

}  // namespace cardioseq
