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

// Training, inference and ablation orchestration.
//
// Direction conventions: for target phase t and neighbour d, the motion field
// is ssnet(I_t, I_d), which warps I_d onto I_t. Neighbours wrap cyclically
// unless the endpoint policy says otherwise.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cardioseq/adam.hpp"
#include "cardioseq/metrics.hpp"
#include "cardioseq/networks.hpp"
#include "cardioseq/objectives.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/transform.hpp"
#include "cardioseq/volume.hpp"
#include "json.hpp"

namespace cardioseq {

enum class Precision { kF32, kF64 };
enum class MotionSource { kZero, kPredicted, kAnalytic };
enum class EndpointPolicy { kCyclic, kMirror };

struct TrainConfig {
  std::vector<std::string> train_studies;
  std::vector<std::string> eval_studies;
  int epochs_motion = 40;
  int epochs_seg = 30;
  double lr_motion = 1e-4;
  double lr_seg = 1e-4;
  MotionLossWeights motion_weights;
  SegLossConfig seg_loss;
  std::array<int, 3> patch{32, 32, 32};
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;
  SSNetConfig ssnet;
  SSSLConfig sssl;
  double clip_fraction = 0.005;
  DistanceMapConfig distance;
  MotionSource seg_motion_source = MotionSource::kPredicted;
  EndpointPolicy endpoints = EndpointPolicy::kCyclic;
  // Multiplies motion fields before they enter the segmentation network.
  double field_input_scale = 1.0;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& file);
std::string precision_name(Precision p);
Precision parse_precision(const std::string& s);

// A study after intensity preprocessing (top-fraction clipping, min-max).
struct Study {
  std::string id;
  Spacing spacing{1.0, 1.0, 1.0};
  std::vector<VolumeGrid> frames;
  std::vector<LabelMask> masks;
  // Optional ground-truth fields: forward[k] warps frame k onto k+1.
  std::vector<DeformationField> forward;
  std::vector<DeformationField> backward;

  int time_points() const { return static_cast<int>(frames.size()); }
};

Study prepare_study(const LoadedStudy& loaded, double clip_fraction);
// Loads t{k}to{k+1} / t{k+1}to{k} fields when the manifest lists all 2T.
Study load_prepared_study(const std::filesystem::path& dir, double clip_fraction);

// In-memory equivalent of exporting and reloading a phantom study.
Study study_from_phantom(const PhantomSequence& seq, const std::string& id,
                         double clip_fraction);

// Chronological (-1) and reverse-chronological (+1) neighbours of phase t.
int neighbor(int t, int direction, int time_points, EndpointPolicy policy);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double photometric = 0.0;
  double smooth = 0.0;
  double consist = 0.0;
  double seconds = 0.0;
};

struct MotionTrainResult {
  ad::ParameterSet<float> params;  // best-by-loss
  std::vector<EpochLog> history;
  double best_loss = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

// With a non-empty out_dir writes <out_dir>/ssnet (checkpoint) and
// <out_dir>/motion_loss.csv. On a non-finite loss the last good parameters
// are saved to <out_dir>/ssnet_last_good and NumericalError is thrown.
MotionTrainResult train_motion(const std::vector<Study>& studies, const TrainConfig& cfg,
                               const std::filesystem::path& out_dir = {},
                               const ProgressFn& progress = {});

struct SegTrainResult {
  ad::ParameterSet<float> params;
  std::vector<EpochLog> history;
  double best_loss = 0.0;
};

// Motion parameters are only read; their fingerprint is verified after
// training. `motion` may be null when cfg.seg_motion_source != kPredicted.
SegTrainResult train_segmentation(const std::vector<Study>& studies, const TrainConfig& cfg,
                                  const ad::ParameterSet<float>* motion,
                                  const std::filesystem::path& out_dir = {},
                                  const ProgressFn& progress = {});

// ---- inference -------------------------------------------------------------

struct Models {
  SSNetConfig ssnet;
  ad::ParameterSet<float> motion;
  SSSLConfig sssl;
  ad::ParameterSet<float> seg;
  double field_input_scale = 1.0;
  DistanceMapConfig distance;
  EndpointPolicy endpoints = EndpointPolicy::kCyclic;
};

// Loads both checkpoints; field scaling, distance threshold and endpoint
// policy come from the segmentation checkpoint's metadata.
Models load_models(const std::filesystem::path& motion_dir,
                   const std::filesystem::path& seg_dir);

struct SegOutcome {
  ProbabilityMap probs;
  LabelMask mask;
};

// Field that warps `moving` onto `target`.
DeformationField predict_field(const SSNetConfig& cfg, const ad::ParameterSet<float>& params,
                               const VolumeGrid& target, const VolumeGrid& moving);

// Segments `image` guided by `field` (zero field: intensity only).
SegOutcome segment_with_field(const Models& m, const VolumeGrid& image,
                              const DeformationField& field);

// direction -1: chronological neighbour t-1; +1: t+1.
SegOutcome infer_single(const Models& m, const Study& study, int t, int direction);
SegOutcome infer_bidirectional(const Models& m, const Study& study, int t);
// Mean of probabilities followed by argmax (ties to background).
SegOutcome fuse(const ProbabilityMap& a, const ProbabilityMap& b, Spacing spacing);

// ---- interval ablation -----------------------------------------------------

enum class IntervalScheme { kD0, kD1, kD3, kD5 };
std::string scheme_name(IntervalScheme s);

struct AblationPlan {
  int ed = 1;
  int es = 5;
  std::vector<IntervalScheme> schemes{IntervalScheme::kD0, IntervalScheme::kD1,
                                      IntervalScheme::kD3, IntervalScheme::kD5};
};

// Phase pairs (from, to) chained by a scheme between ED and ES.
std::vector<std::pair<int, int>> scheme_steps(IntervalScheme s, const AblationPlan& plan);

// Field that warps phase `from` onto phase `to` through the scheme's chain.
// `pair_field(a, b)` must return the field warping phase a onto phase b.
DeformationField chain_field(IntervalScheme s, const AblationPlan& plan, bool toward_es,
                             const std::function<DeformationField(int, int)>& pair_field,
                             const Dims& dims, Spacing spacing);

struct AblationRecord {
  IntervalScheme scheme;
  int phase = 0;
  double dice = 0.0;
};

std::vector<AblationRecord> run_interval_ablation(const AblationPlan& plan, const Models& m,
                                                  const Study& study);

// ---- reproducibility -------------------------------------------------------

std::uint64_t config_hash(const nlohmann::json& config);
nlohmann::json run_manifest(const std::string& command, const nlohmann::json& config,
                            std::uint64_t seed);
void write_json(const nlohmann::json& j, const std::filesystem::path& file);
void write_text(const std::string& text, const std::filesystem::path& file);

}  // namespace cardioseq
