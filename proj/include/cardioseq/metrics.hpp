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
#include <optional>
#include <string>
#include <vector>

#include "cardioseq/volume.hpp"
#include "json.hpp"

namespace cardioseq {

// 2|A n B| / (|A| + |B|) for label `cls`; 1 when both sets are empty.
double dice(const LabelMask& a, const LabelMask& b, int cls = 1);
// |A n B| / |A u B|; 1 when both sets are empty.
double jaccard(const LabelMask& a, const LabelMask& b, int cls = 1);

// Voxels of label `cls` with at least one 6-neighbour outside the set (or on
// the volume border).
std::vector<std::array<int, 3>> boundary_voxels(const LabelMask& m, int cls = 1);

enum class HausdorffMethod { kBruteForce, kGridBucket };

// Symmetric Hausdorff distance between the boundary sets, in physical units
// given by `spacing`. Throws UndefinedMetricError if either set is empty.
double hausdorff(const LabelMask& a, const LabelMask& b, int cls, const Spacing& spacing,
                 HausdorffMethod method = HausdorffMethod::kGridBucket);

// Mean Euclidean norm of the per-voxel difference, in voxels.
double endpoint_error(const DeformationField& f, const DeformationField& truth);

struct MetricRecord {
  std::string study_id;
  int time_index = 0;
  int class_id = 1;
  double dice = 0.0;
  double jaccard = 0.0;
  // Empty when the metric is undefined; `error` then names the reason.
  std::optional<double> hausdorff_mm;
  std::optional<double> epe_voxels;
  std::string error;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
  std::size_t skipped = 0;
};

struct MetricSummary {
  Aggregate dice;
  Aggregate jaccard;
  Aggregate hausdorff_mm;
};

// One record per (time index, foreground class).
std::vector<MetricRecord> per_phase_report(const std::vector<LabelMask>& predictions,
                                           const std::vector<LabelMask>& truths,
                                           const Spacing& spacing,
                                           const std::string& study_id = "");

// Records with an undefined Hausdorff distance are skipped for that metric
// and counted in `skipped`.
MetricSummary summarize(const std::vector<MetricRecord>& records);

// Stable column order:
// study_id,time_index,class_id,dice,jaccard,hausdorff_mm,epe_voxels,error
std::string to_csv(const std::vector<MetricRecord>& records);
nlohmann::json to_json(const MetricSummary& s);
// Summary plus per-phase means and stds.
nlohmann::json summary_json(const std::vector<MetricRecord>& records);

}  // namespace cardioseq
