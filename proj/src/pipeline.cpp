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

#include "cardioseq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "cardioseq/error.hpp"
#include "cardioseq/kernels.hpp"
#include "cardioseq/ops.hpp"

namespace cardioseq {

namespace fs = std::filesystem;
using ad::Tensor;
using nlohmann::json;

// ---- configuration ---------------------------------------------------------

std::string precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw ValidationError("unknown precision '" + s + "' (expected f32 or f64)");
}

namespace {

const char* source_name(MotionSource s) {
  switch (s) {
    case MotionSource::kZero: return "zero";
    case MotionSource::kPredicted: return "predicted";
    case MotionSource::kAnalytic: return "analytic";
  }
  return "predicted";
}

MotionSource parse_source(const std::string& s) {
  if (s == "zero") return MotionSource::kZero;
  if (s == "predicted") return MotionSource::kPredicted;
  if (s == "analytic") return MotionSource::kAnalytic;
  throw ValidationError("unknown seg_motion_source '" + s + "'");
}

EndpointPolicy parse_endpoints(const std::string& s) {
  if (s == "cyclic") return EndpointPolicy::kCyclic;
  if (s == "mirror") return EndpointPolicy::kMirror;
  throw ValidationError("unknown endpoints policy '" + s + "'");
}

void check_patch(const std::array<int, 3>& patch, int depth, const char* net) {
  const int m = 1 << depth;
  for (int p : patch) {
    if (p < m || p % m != 0) {
      throw ValidationError(std::string("patch extent ") + std::to_string(p) +
                            " must be a positive multiple of 2^depth = " + std::to_string(m) +
                            " (" + net + ")");
    }
  }
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.epochs_motion < 0 || c.epochs_seg < 0) {
    throw ValidationError("epochs must be non-negative");
  }
  if (!(c.lr_motion > 0.0) || !(c.lr_seg > 0.0)) {
    throw ValidationError("learning rates must be positive");
  }
  if (c.clip_fraction < 0.0 || c.clip_fraction >= 1.0) {
    throw ValidationError("clip_fraction must lie in [0, 1)");
  }
  if (!(c.distance.threshold_quantile > 0.0 && c.distance.threshold_quantile < 1.0)) {
    throw ValidationError("distance threshold quantile must lie in (0, 1)");
  }
  validate(c.ssnet);
  validate(c.sssl);
  if (c.sssl.motion_in != 3 || c.ssnet.out_channels != 3 || c.ssnet.in_channels != 2) {
    throw ValidationError("network channel counts must match fields (3) and image pairs (2)");
  }
  check_patch(c.patch, c.ssnet.depth, "ssnet");
  check_patch(c.patch, c.sssl.depth, "sssl");
}

json to_json(const TrainConfig& c) {
  return {{"train_studies", c.train_studies},
          {"eval_studies", c.eval_studies},
          {"epochs_motion", c.epochs_motion},
          {"epochs_seg", c.epochs_seg},
          {"lr_motion", c.lr_motion},
          {"lr_seg", c.lr_seg},
          {"motion_weights", {{"smooth", c.motion_weights.smooth},
                              {"consist", c.motion_weights.consist}}},
          {"seg_loss", {{"alpha", c.seg_loss.alpha}, {"smoothing", c.seg_loss.smoothing}}},
          {"patch", c.patch},
          {"seed", c.seed},
          {"precision", precision_name(c.precision)},
          {"ssnet", to_json(c.ssnet)},
          {"sssl", to_json(c.sssl)},
          {"clip_fraction", c.clip_fraction},
          {"distance_threshold_quantile", c.distance.threshold_quantile},
          {"seg_motion_source", source_name(c.seg_motion_source)},
          {"endpoints", c.endpoints == EndpointPolicy::kCyclic ? "cyclic" : "mirror"},
          {"field_input_scale", c.field_input_scale}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "train_studies", "eval_studies", "epochs_motion", "epochs_seg", "lr_motion",
      "lr_seg", "motion_weights", "seg_loss", "patch", "seed", "precision", "ssnet",
      "sssl", "clip_fraction", "distance_threshold_quantile", "seg_motion_source",
      "endpoints", "field_input_scale"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.train_studies = j.value("train_studies", c.train_studies);
    c.eval_studies = j.value("eval_studies", c.eval_studies);
    c.epochs_motion = j.value("epochs_motion", c.epochs_motion);
    c.epochs_seg = j.value("epochs_seg", c.epochs_seg);
    c.lr_motion = j.value("lr_motion", c.lr_motion);
    c.lr_seg = j.value("lr_seg", c.lr_seg);
    if (j.contains("motion_weights")) {
      const auto& w = j.at("motion_weights");
      c.motion_weights.smooth = w.value("smooth", c.motion_weights.smooth);
      c.motion_weights.consist = w.value("consist", c.motion_weights.consist);
    }
    if (j.contains("seg_loss")) {
      const auto& s = j.at("seg_loss");
      c.seg_loss.alpha = s.value("alpha", c.seg_loss.alpha);
      c.seg_loss.smoothing = s.value("smoothing", c.seg_loss.smoothing);
    }
    c.patch = j.value("patch", c.patch);
    c.seed = j.value("seed", c.seed);
    c.precision = parse_precision(j.value("precision", std::string("f32")));
    if (j.contains("ssnet")) c.ssnet = ssnet_config_from_json(j.at("ssnet"));
    if (j.contains("sssl")) c.sssl = sssl_config_from_json(j.at("sssl"));
    c.clip_fraction = j.value("clip_fraction", c.clip_fraction);
    c.distance.threshold_quantile =
        j.value("distance_threshold_quantile", c.distance.threshold_quantile);
    c.seg_motion_source = parse_source(j.value("seg_motion_source", std::string("predicted")));
    c.endpoints = parse_endpoints(j.value("endpoints", std::string("cyclic")));
    c.field_input_scale = j.value("field_input_scale", c.field_input_scale);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

// ---- data ------------------------------------------------------------------

Study prepare_study(const LoadedStudy& loaded, double clip_fraction) {
  Study s;
  s.id = loaded.manifest.study_id;
  s.spacing = loaded.manifest.spacing;
  for (const auto& f : loaded.frames) s.frames.push_back(normalize(clip_intensities(f, clip_fraction)));
  s.masks = loaded.masks;
  return s;
}

Study load_prepared_study(const fs::path& dir, double clip_fraction) {
  const LoadedStudy loaded = load_study(dir);
  Study s = prepare_study(loaded, clip_fraction);
  const auto& m = loaded.manifest;
  const int T = s.time_points();
  if (m.fields.size() == static_cast<std::size_t>(2 * T)) {
    for (int t = 0; t < T; ++t) s.forward.push_back(load_field(m.directory / m.fields[t]));
    for (int t = 0; t < T; ++t) s.backward.push_back(load_field(m.directory / m.fields[T + t]));
  }
  return s;
}

Study study_from_phantom(const PhantomSequence& seq, const std::string& id,
                         double clip_fraction) {
  LoadedStudy loaded;
  loaded.manifest.study_id = id;
  loaded.manifest.spacing = seq.spec.spacing;
  loaded.frames = seq.frames;
  loaded.masks = seq.masks;
  Study s = prepare_study(loaded, clip_fraction);
  s.forward = seq.forward;
  s.backward = seq.backward;
  return s;
}

int neighbor(int t, int direction, int T, EndpointPolicy policy) {
  if (T < 2) throw ValidationError("neighbor: need at least 2 phases");
  if (t < 0 || t >= T) throw ValidationError("phase " + std::to_string(t) + " out of range");
  if (direction != -1 && direction != 1) throw ValidationError("direction must be -1 or +1");
  const int n = t + direction;
  if (n >= 0 && n < T) return n;
  if (policy == EndpointPolicy::kCyclic) return (n + T) % T;
  return t - direction;
}

namespace {

using Origin = std::array<int, 3>;

std::array<int, 3> effective_patch(const TrainConfig& cfg, const Dims& d) {
  const std::array<int, 3> p{std::min(cfg.patch[0], d.nx), std::min(cfg.patch[1], d.ny),
                             std::min(cfg.patch[2], d.nz)};
  return p;
}

template <typename T>
Tensor<T> crop(const float* data, int channels, const Dims& d, const Origin& o,
               const std::array<int, 3>& p) {
  const Dims pd{p[0], p[1], p[2]};
  std::vector<T> out(static_cast<std::size_t>(channels) * pd.count());
  for (int c = 0; c < channels; ++c) {
    const float* src = data + c * d.count();
    T* dst = out.data() + c * pd.count();
    for (int z = 0; z < p[2]; ++z) {
      for (int y = 0; y < p[1]; ++y) {
        const float* row = src + d.index(o[0], o[1] + y, o[2] + z);
        T* drow = dst + pd.index(0, y, z);
        for (int x = 0; x < p[0]; ++x) drow[x] = static_cast<T>(row[x]);
      }
    }
  }
  return Tensor<T>::leaf({channels, p[0], p[1], p[2]}, std::move(out));
}

LabelMask crop_mask(const LabelMask& m, const Origin& o, const std::array<int, 3>& p) {
  const Dims d = m.dims();
  const Dims pd{p[0], p[1], p[2]};
  std::vector<std::uint8_t> out(pd.count());
  for (int z = 0; z < p[2]; ++z) {
    for (int y = 0; y < p[1]; ++y) {
      for (int x = 0; x < p[0]; ++x) {
        out[pd.index(x, y, z)] = m.labels()[d.index(o[0] + x, o[1] + y, o[2] + z)];
      }
    }
  }
  return LabelMask(pd, m.spacing(), std::move(out), m.num_classes());
}

Origin random_origin(std::mt19937_64& rng, const Dims& d, const std::array<int, 3>& p) {
  auto pick = [&](int n, int extent) {
    if (extent >= n) return 0;
    return static_cast<int>(rng() % static_cast<std::uint64_t>(n - extent + 1));
  };
  return {pick(d.nx, p[0]), pick(d.ny, p[1]), pick(d.nz, p[2])};
}

template <typename T>
bool finite(const Tensor<T>& t) {
  return std::isfinite(static_cast<double>(t.item()));
}

std::string loss_csv(const std::vector<EpochLog>& h, bool motion) {
  std::string out = motion ? "epoch,loss,photometric,smooth,consist\n" : "epoch,loss\n";
  char buf[160];
  for (const auto& e : h) {
    if (motion) {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.loss, e.photometric,
                    e.smooth, e.consist);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.9g\n", e.epoch, e.loss);
    }
    out += buf;
  }
  return out;
}

void check_studies(const std::vector<Study>& studies, bool need_masks) {
  if (studies.empty()) throw ValidationError("no training studies");
  for (const auto& s : studies) {
    if (s.time_points() < 2) throw ValidationError("study " + s.id + " has fewer than 2 phases");
    if (need_masks && s.masks.size() != s.frames.size()) {
      throw ValidationError("study " + s.id + " lacks masks");
    }
  }
}

struct MotionStep {
  std::size_t study;
  int target;
  int adjacent;
};

template <typename T>
MotionTrainResult train_motion_impl(const std::vector<Study>& studies, const TrainConfig& cfg,
                                    const fs::path& out_dir, const ProgressFn& progress) {
  const ad::ParameterSet<float> init = init_parameters(cfg.ssnet, cfg.seed);
  ad::ParameterSet<T> work = init.template cast<T>();
  ad::AdamState adam;
  adam.config.lr = cfg.lr_motion;

  std::vector<MotionStep> steps;
  for (std::size_t s = 0; s < studies.size(); ++s) {
    const int T_ = studies[s].time_points();
    for (int t = 0; t < T_; ++t) {
      const int next = t + 1;
      if (next >= T_ && (cfg.endpoints == EndpointPolicy::kMirror || T_ == 2)) continue;
      // One step covers both orders: the loss evaluates (target, adjacent)
      // and its swap through the shared network.
      steps.push_back({s, next % T_, t});
    }
  }

  MotionTrainResult result;
  result.params = init.template cast<float>();
  result.best_loss = std::numeric_limits<double>::infinity();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_network(result.params, cfg.ssnet, out_dir / "ssnet", {{"epoch", 0}});
  }

  std::mt19937_64 rng(cfg.seed ^ 0x6d6f74696f6eull);
  for (int epoch = 1; epoch <= cfg.epochs_motion; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(steps.begin(), steps.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (const auto& st : steps) {
      const Study& s = studies[st.study];
      const Dims d = s.frames[st.target].dims();
      const auto p = effective_patch(cfg, d);
      const Origin o = random_origin(rng, d, p);
      const auto tgt = crop<T>(s.frames[st.target].data().data(), 1, d, o, p);
      const auto adj = crop<T>(s.frames[st.adjacent].data().data(), 1, d, o, p);
      const auto fwd = ssnet_forward(work, tgt, adj, cfg.ssnet);
      const auto bwd = ssnet_forward(work, adj, tgt, cfg.ssnet);
      if (fwd.shape() != bwd.shape()) throw NumericalError("ssnet: directional shapes differ");
      const auto terms = motion_loss(tgt, adj, fwd, bwd, cfg.motion_weights);
      if (!finite(terms.total)) {
        if (!out_dir.empty()) {
          save_network(result.params, cfg.ssnet, out_dir / "ssnet_last_good",
                       {{"epoch", epoch}, {"reason", "non-finite loss"}});
          write_text(loss_csv(result.history, true), out_dir / "motion_loss.csv");
        }
        throw NumericalError("motion training diverged at epoch " + std::to_string(epoch));
      }
      ad::backward(terms.total);
      ad::adam_step(work, adam);
      log.loss += terms.total.item();
      log.photometric += terms.photometric.item();
      log.smooth += terms.smooth.item();
      log.consist += terms.consist.item();
    }
    const double n = std::max<std::size_t>(steps.size(), 1);
    log.loss /= n;
    log.photometric /= n;
    log.smooth /= n;
    log.consist /= n;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (log.loss < result.best_loss) {
      result.best_loss = log.loss;
      result.params = work.template cast<float>();
      if (!out_dir.empty()) {
        save_network(result.params, cfg.ssnet, out_dir / "ssnet", {{"epoch", epoch},
                                                                   {"loss", log.loss}});
      }
    }
    if (progress) {
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "motion epoch %d loss %.6f (photo %.6f smooth %.6f consist %.6f) %.1fs", epoch,
                    log.loss, log.photometric, log.smooth, log.consist, log.seconds);
      progress(buf);
    }
  }
  if (!out_dir.empty()) write_text(loss_csv(result.history, true), out_dir / "motion_loss.csv");
  return result;
}

DeformationField source_field(const Study& s, int t, int d, MotionSource src,
                              const SSNetConfig& ncfg, const ad::ParameterSet<float>* motion) {
  const Dims dims = s.frames[t].dims();
  switch (src) {
    case MotionSource::kZero: return DeformationField::zeros(dims, s.spacing);
    case MotionSource::kPredicted:
      if (!motion) throw ValidationError("predicted motion source needs an SS-Net checkpoint");
      return predict_field(ncfg, *motion, s.frames[t], s.frames[d]);
    case MotionSource::kAnalytic: {
      const int T = s.time_points();
      if (s.forward.size() != static_cast<std::size_t>(T)) {
        throw ValidationError("study " + s.id + " has no analytic fields");
      }
      // forward[k] warps k onto k+1; backward[k] warps k+1 onto k.
      if ((d + 1) % T == t) return s.forward[d];
      return s.backward[t];
    }
  }
  throw ValidationError("unknown motion source");
}

DeformationField scaled(const DeformationField& f, double k) {
  if (k == 1.0) return f;
  std::vector<float> v = f.data();
  for (float& x : v) x = static_cast<float>(x * k);
  return DeformationField(f.dims(), f.spacing(), std::move(v));
}

// Inference settings travel with the segmentation checkpoint.
json seg_extra(const TrainConfig& cfg, int epoch) {
  return {{"epoch", epoch},
          {"field_input_scale", cfg.field_input_scale},
          {"distance_threshold_quantile", cfg.distance.threshold_quantile},
          {"endpoints", cfg.endpoints == EndpointPolicy::kCyclic ? "cyclic" : "mirror"}};
}

struct SegSample {
  DeformationField field;  // already scaled for network input
  VolumeGrid dist;
};

template <typename T>
SegTrainResult train_seg_impl(const std::vector<Study>& studies, const TrainConfig& cfg,
                              const ad::ParameterSet<float>* motion, const fs::path& out_dir,
                              const ProgressFn& progress) {
  const std::uint64_t motion_hash = motion ? ad::fingerprint(*motion) : 0;

  // The frozen motion network is deterministic, so its fields are computed once.
  std::vector<std::vector<std::array<SegSample, 2>>> cache(studies.size());
  for (std::size_t si = 0; si < studies.size(); ++si) {
    const Study& s = studies[si];
    for (int t = 0; t < s.time_points(); ++t) {
      std::array<SegSample, 2> both;
      for (int k = 0; k < 2; ++k) {
        const int d = neighbor(t, k == 0 ? -1 : 1, s.time_points(), cfg.endpoints);
        const DeformationField f =
            source_field(s, t, d, cfg.seg_motion_source, cfg.ssnet, motion);
        both[k] = {scaled(f, cfg.field_input_scale), motion_distance_map(f, cfg.distance)};
      }
      cache[si].push_back(std::move(both));
    }
    if (progress) progress("seg: prepared motion inputs for " + s.id);
  }

  const ad::ParameterSet<float> init = init_parameters(cfg.sssl, cfg.seed ^ 0x5e9ull);
  ad::ParameterSet<T> work = init.template cast<T>();
  ad::AdamState adam;
  adam.config.lr = cfg.lr_seg;

  std::vector<std::pair<std::size_t, int>> order;
  for (std::size_t s = 0; s < studies.size(); ++s) {
    for (int t = 0; t < studies[s].time_points(); ++t) order.emplace_back(s, t);
  }

  SegTrainResult result;
  result.params = init.template cast<float>();
  result.best_loss = std::numeric_limits<double>::infinity();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_network(result.params, cfg.sssl, out_dir / "sssl", seg_extra(cfg, 0));
  }

  std::mt19937_64 rng(cfg.seed ^ 0x7365676d656e74ull);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs_seg; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (const auto& [si, t] : order) {
      const Study& s = studies[si];
      // Even steps look back in time, odd steps forward.
      const SegSample& sample = cache[si][t][step % 2];
      ++step;
      const Dims d = s.frames[t].dims();
      const auto p = effective_patch(cfg, d);
      const Origin o = random_origin(rng, d, p);
      const auto img = crop<T>(s.frames[t].data().data(), 1, d, o, p);
      const auto dist = crop<T>(sample.dist.data().data(), 1, d, o, p);
      const auto fld = crop<T>(sample.field.data().data(), 3, d, o, p);
      const LabelMask truth = crop_mask(s.masks[t], o, p);
      const auto probs = sssl_forward(work, img, dist, fld, cfg.sssl);
      const auto loss = segmentation_loss(probs, truth, cfg.seg_loss);
      if (!finite(loss)) {
        if (!out_dir.empty()) {
          save_network(result.params, cfg.sssl, out_dir / "sssl_last_good",
                       {{"epoch", epoch}, {"reason", "non-finite loss"}});
          write_text(loss_csv(result.history, false), out_dir / "seg_loss.csv");
        }
        throw NumericalError("segmentation training diverged at epoch " + std::to_string(epoch));
      }
      ad::backward(loss);
      ad::adam_step(work, adam);
      log.loss += loss.item();
    }
    log.loss /= std::max<std::size_t>(order.size(), 1);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (log.loss < result.best_loss) {
      result.best_loss = log.loss;
      result.params = work.template cast<float>();
      if (!out_dir.empty()) {
        json extra = seg_extra(cfg, epoch);
        extra["loss"] = log.loss;
        save_network(result.params, cfg.sssl, out_dir / "sssl", extra);
      }
    }
    if (progress) {
      char buf[120];
      std::snprintf(buf, sizeof buf, "seg epoch %d loss %.6f %.1fs", epoch, log.loss,
                    log.seconds);
      progress(buf);
    }
  }
  if (motion && ad::fingerprint(*motion) != motion_hash) {
    throw NumericalError("motion parameters changed during segmentation training");
  }
  if (!out_dir.empty()) write_text(loss_csv(result.history, false), out_dir / "seg_loss.csv");
  return result;
}

}  // namespace

MotionTrainResult train_motion(const std::vector<Study>& studies, const TrainConfig& cfg,
                               const fs::path& out_dir, const ProgressFn& progress) {
  const kernels::DenormalGuard ftz;
  validate(cfg);
  check_studies(studies, false);
  if (cfg.precision == Precision::kF64) {
    return train_motion_impl<double>(studies, cfg, out_dir, progress);
  }
  return train_motion_impl<float>(studies, cfg, out_dir, progress);
}

SegTrainResult train_segmentation(const std::vector<Study>& studies, const TrainConfig& cfg,
                                  const ad::ParameterSet<float>* motion, const fs::path& out_dir,
                                  const ProgressFn& progress) {
  const kernels::DenormalGuard ftz;
  validate(cfg);
  check_studies(studies, true);
  if (motion) check_layout(*motion, ssnet_layout(cfg.ssnet));
  if (cfg.precision == Precision::kF64) {
    return train_seg_impl<double>(studies, cfg, motion, out_dir, progress);
  }
  return train_seg_impl<float>(studies, cfg, motion, out_dir, progress);
}

// ---- inference -------------------------------------------------------------

DeformationField predict_field(const SSNetConfig& cfg, const ad::ParameterSet<float>& params,
                               const VolumeGrid& target, const VolumeGrid& moving) {
  const kernels::DenormalGuard ftz;
  if (!(target.dims() == moving.dims())) throw ValidationError("predict_field: dims differ");
  const auto frozen = params.frozen();
  const auto out = ssnet_forward(frozen, ad::from_volume<float>(target),
                                 ad::from_volume<float>(moving), cfg);
  return ad::to_field(out, target.spacing());
}

SegOutcome segment_with_field(const Models& m, const VolumeGrid& image,
                              const DeformationField& field) {
  const kernels::DenormalGuard ftz;
  if (!(image.dims() == field.dims())) throw ValidationError("segment: field dims differ");
  const VolumeGrid dist = motion_distance_map(field, m.distance);
  const auto frozen = m.seg.frozen();
  const auto probs =
      sssl_forward(frozen, ad::from_volume<float>(image), ad::from_volume<float>(dist),
                   ad::from_field<float>(scaled(field, m.field_input_scale)), m.sssl);
  SegOutcome out{ProbabilityMap(image.dims(), m.sssl.num_classes, probs.value()), {}};
  out.mask = out.probs.argmax(image.spacing());
  return out;
}

Models load_models(const fs::path& motion_dir, const fs::path& seg_dir) {
  Models m;
  SSNetCheckpoint motion = load_ssnet(motion_dir);
  SSSLCheckpoint seg = load_sssl(seg_dir);
  m.ssnet = motion.config;
  m.motion = std::move(motion.params);
  m.sssl = seg.config;
  m.seg = std::move(seg.params);
  const json extra = seg.metadata.value("extra", json::object());
  try {
    m.field_input_scale = extra.value("field_input_scale", 1.0);
    m.distance.threshold_quantile =
        extra.value("distance_threshold_quantile", m.distance.threshold_quantile);
    m.endpoints = parse_endpoints(extra.value("endpoints", std::string("cyclic")));
  } catch (const json::exception& e) {
    throw ValidationError(seg_dir.string() + ": malformed inference settings: " + e.what());
  }
  return m;
}

SegOutcome infer_single(const Models& m, const Study& study, int t, int direction) {
  const int d = neighbor(t, direction, study.time_points(), m.endpoints);
  const DeformationField f = predict_field(m.ssnet, m.motion, study.frames[t], study.frames[d]);
  return segment_with_field(m, study.frames[t], f);
}

SegOutcome fuse(const ProbabilityMap& a, const ProbabilityMap& b, Spacing spacing) {
  if (!(a.dims() == b.dims()) || a.num_classes() != b.num_classes()) {
    throw ValidationError("fuse: probability maps differ in shape");
  }
  std::vector<float> mean(a.data().size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = 0.5f * (a.data()[i] + b.data()[i]);
  SegOutcome out{ProbabilityMap(a.dims(), a.num_classes(), std::move(mean)), {}};
  out.mask = out.probs.argmax(spacing);
  return out;
}

SegOutcome infer_bidirectional(const Models& m, const Study& study, int t) {
  const SegOutcome back = infer_single(m, study, t, -1);
  const SegOutcome ahead = infer_single(m, study, t, 1);
  return fuse(back.probs, ahead.probs, study.frames[t].spacing());
}

// ---- interval ablation -----------------------------------------------------

std::string scheme_name(IntervalScheme s) {
  switch (s) {
    case IntervalScheme::kD0: return "D0";
    case IntervalScheme::kD1: return "D1";
    case IntervalScheme::kD3: return "D3";
    case IntervalScheme::kD5: return "D5";
  }
  return "?";
}

std::vector<std::pair<int, int>> scheme_steps(IntervalScheme s, const AblationPlan& plan) {
  if (plan.es <= plan.ed) throw ValidationError("ablation: ES phase must follow ED phase");
  std::vector<std::pair<int, int>> out;
  switch (s) {
    case IntervalScheme::kD0: break;
    case IntervalScheme::kD1: out.emplace_back(plan.ed, plan.es); break;
    case IntervalScheme::kD3: {
      const int mid = (plan.ed + plan.es) / 2;
      if (mid == plan.ed) throw ValidationError("ablation: D3 needs an intermediate phase");
      out.emplace_back(plan.ed, mid);
      out.emplace_back(mid, plan.es);
      break;
    }
    case IntervalScheme::kD5:
      for (int t = plan.ed; t < plan.es; ++t) out.emplace_back(t, t + 1);
      break;
  }
  return out;
}

DeformationField chain_field(IntervalScheme s, const AblationPlan& plan, bool toward_es,
                             const std::function<DeformationField(int, int)>& pair_field,
                             const Dims& dims, Spacing spacing) {
  auto steps = scheme_steps(s, plan);
  if (steps.empty()) return DeformationField::zeros(dims, spacing);
  if (!toward_es) {
    std::reverse(steps.begin(), steps.end());
    for (auto& [a, b] : steps) std::swap(a, b);
  }
  // acc warps steps.front().first onto the current end of the chain.
  DeformationField acc = pair_field(steps[0].first, steps[0].second);
  for (std::size_t i = 1; i < steps.size(); ++i) {
    acc = compose(pair_field(steps[i].first, steps[i].second), acc);
  }
  return acc;
}

std::vector<AblationRecord> run_interval_ablation(const AblationPlan& plan, const Models& m,
                                                  const Study& study) {
  const int T = study.time_points();
  if (plan.ed < 0 || plan.es >= T || plan.ed >= plan.es) {
    throw ValidationError("ablation: study " + study.id + " lacks phases " +
                          std::to_string(plan.ed) + " and " + std::to_string(plan.es));
  }
  if (study.masks.size() != static_cast<std::size_t>(T)) {
    throw ValidationError("ablation: study " + study.id + " lacks masks");
  }
  std::map<std::pair<int, int>, DeformationField> memo;
  auto pair_field = [&](int a, int b) -> DeformationField {
    auto it = memo.find({a, b});
    if (it != memo.end()) return it->second;
    DeformationField f = predict_field(m.ssnet, m.motion, study.frames[b], study.frames[a]);
    memo.emplace(std::make_pair(a, b), f);
    return f;
  };
  std::vector<AblationRecord> out;
  for (IntervalScheme s : plan.schemes) {
    for (int phase : {plan.ed, plan.es}) {
      const bool toward_es = phase == plan.es;
      const DeformationField f = chain_field(s, plan, toward_es, pair_field,
                                             study.frames[phase].dims(), study.spacing);
      const SegOutcome seg = segment_with_field(m, study.frames[phase], f);
      out.push_back({s, phase, dice(seg.mask, study.masks[phase], 1)});
    }
  }
  return out;
}

// ---- reproducibility -------------------------------------------------------

std::uint64_t config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

json run_manifest(const std::string& command, const json& config, std::uint64_t seed) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  return {{"command", command},
          {"config", config},
          {"config_hash", hash},
          {"seed", seed},
          {"version", CARDIOSEQ_VERSION},
          {"compiler", __VERSION__},
          {"cxx_standard", __cplusplus},
          {"simd", std::string(kernels::to_string(kernels::active_simd_level()))},
          {"threads", 1}};
}

void write_json(const json& j, const fs::path& file) { write_text(j.dump(2) + "\n", file); }

void write_text(const std::string& text, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("failed writing " + file.string());
}

}  // namespace cardioseq
