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

// Command-line front end: phantom generation, training, inference,
// evaluation, interval ablation and reporting. Every run writes
// <out-dir>/run_manifest.json.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cardioseq/error.hpp"
#include "cardioseq/metrics.hpp"
#include "cardioseq/phantom.hpp"
#include "cardioseq/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cardioseq {
namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string precision = "f32";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Overrides the configured seed");
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--precision", o.precision, "Training precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

void log(const std::string& line) { std::cerr << line << "\n"; }

// Study paths in a config resolve against the config file's directory.
std::vector<fs::path> resolve(const std::vector<std::string>& dirs, const fs::path& base) {
  std::vector<fs::path> out;
  for (const auto& d : dirs) {
    const fs::path p(d);
    out.push_back(p.is_absolute() ? p : base / p);
  }
  return out;
}

TrainConfig train_config(const CommonOptions& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  TrainConfig cfg = load_train_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.precision = parse_precision(o.precision);
  validate(cfg);
  return cfg;
}

std::vector<Study> load_studies(const std::vector<fs::path>& dirs, double clip_fraction) {
  if (dirs.empty()) throw ValidationError("no studies given");
  std::vector<Study> out;
  for (const auto& d : dirs) out.push_back(load_prepared_study(d, clip_fraction));
  return out;
}

void finish(const CommonOptions& o, const std::string& command, const json& config,
            std::uint64_t seed) {
  write_json(run_manifest(command, config, seed), fs::path(o.out_dir) / "run_manifest.json");
}

// ---- subcommands -----------------------------------------------------------

struct PhantomOptions {
  int studies = 8;
};

void phantom_gen(const CommonOptions& o, const PhantomOptions& p) {
  if (p.studies < 1) throw ValidationError("--studies must be at least 1");
  PhantomSpec base = o.config.empty() ? PhantomSpec{} : phantom_spec_from_json(read_json(o.config));
  if (o.seed) base.seed = *o.seed;
  validate(base);
  for (int i = 0; i < p.studies; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03d", i);
    export_study(generate(cohort_spec(base, i)), fs::path(o.out_dir) / id, id);
    log(std::string("wrote ") + id);
  }
  json config = {{"phantom", to_json(base)}, {"studies", p.studies}};
  finish(o, "phantom-gen", config, base.seed);
}

void train_motion_cmd(const CommonOptions& o) {
  const TrainConfig cfg = train_config(o);
  const fs::path base = fs::path(o.config).parent_path();
  const auto studies = load_studies(resolve(cfg.train_studies, base), cfg.clip_fraction);
  const auto result = train_motion(studies, cfg, o.out_dir, log);
  log("best motion loss " + std::to_string(result.best_loss));
  finish(o, "train-motion", to_json(cfg), cfg.seed);
}

void train_seg_cmd(const CommonOptions& o, const std::string& motion_dir) {
  TrainConfig cfg = train_config(o);
  const fs::path base = fs::path(o.config).parent_path();
  std::optional<SSNetCheckpoint> motion;
  if (cfg.seg_motion_source == MotionSource::kPredicted) {
    if (motion_dir.empty()) throw ValidationError("--motion is required for predicted fields");
    motion = load_ssnet(motion_dir);
    cfg.ssnet = motion->config;
  }
  const auto studies = load_studies(resolve(cfg.train_studies, base), cfg.clip_fraction);
  const auto result =
      train_segmentation(studies, cfg, motion ? &motion->params : nullptr, o.out_dir, log);
  log("best segmentation loss " + std::to_string(result.best_loss));
  finish(o, "train-seg", to_json(cfg), cfg.seed);
}

struct InferOptions {
  std::string motion;
  std::string seg;
  std::string study;
  std::optional<int> phase;
  std::string mode = "bidirectional";
  double clip_fraction = 0.005;
};

void infer_cmd(const CommonOptions& o, const InferOptions& p) {
  const Models m = load_models(p.motion, p.seg);
  const Study study = load_prepared_study(p.study, p.clip_fraction);
  const int T = study.time_points();
  std::vector<int> phases;
  if (p.phase) {
    if (*p.phase < 0 || *p.phase >= T) {
      throw ValidationError("phase " + std::to_string(*p.phase) + " out of range");
    }
    phases.push_back(*p.phase);
  } else {
    for (int t = 0; t < T; ++t) phases.push_back(t);
  }
  for (int t : phases) {
    SegOutcome out;
    if (p.mode == "bidirectional") {
      out = infer_bidirectional(m, study, t);
    } else if (p.mode == "backward") {
      out = infer_single(m, study, t, -1);
    } else if (p.mode == "forward") {
      out = infer_single(m, study, t, 1);
    } else {
      out = segment_with_field(m, study.frames[t],
                               DeformationField::zeros(study.frames[t].dims(), study.spacing));
    }
    save_mask(out.mask, fs::path(o.out_dir) / ("t" + std::to_string(t) + ".mask"));
  }
  json config = {{"motion", p.motion}, {"seg", p.seg},   {"study", p.study},
                 {"mode", p.mode},     {"phases", phases}, {"clip_fraction", p.clip_fraction}};
  finish(o, "infer", config, o.seed.value_or(0));
}

// A study directory (manifest.json) or a directory of t{k}.mask files.
std::vector<LabelMask> load_masks(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) {
    const StudyManifest m = load_manifest(dir);
    if (!m.has_masks()) throw ValidationError(dir.string() + " has no masks");
    std::vector<LabelMask> out;
    for (const auto& name : m.masks) out.push_back(load_mask(dir / name));
    return out;
  }
  if (!fs::is_directory(dir)) throw IoError("no such directory " + dir.string());
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    const std::string suffix = ".mask.json";
    if (name.size() > suffix.size() && name[0] == 't' &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      const std::string index = name.substr(1, name.size() - suffix.size() - 1);
      if (!index.empty() && std::all_of(index.begin(), index.end(), ::isdigit)) {
        files.emplace_back(std::stoi(index), dir / ("t" + index + ".mask"));
      }
    }
  }
  if (files.empty()) throw ValidationError(dir.string() + " holds no t{k}.mask files");
  std::sort(files.begin(), files.end());
  std::vector<LabelMask> out;
  for (const auto& [t, path] : files) out.push_back(load_mask(path));
  return out;
}

void eval_cmd(const CommonOptions& o, const std::string& pred, const std::string& truth,
              const std::string& study_id) {
  const auto preds = load_masks(pred);
  const auto truths = load_masks(truth);
  if (preds.empty() || preds.size() != truths.size()) {
    throw ValidationError("prediction and truth phase counts differ");
  }
  const auto records = per_phase_report(preds, truths, truths.front().spacing(), study_id);
  write_text(to_csv(records), fs::path(o.out_dir) / "metrics.csv");
  write_json(summary_json(records), fs::path(o.out_dir) / "summary.json");
  const MetricSummary s = summarize(records);
  log("mean dice " + std::to_string(s.dice.mean));
  finish(o, "eval", {{"pred", pred}, {"truth", truth}, {"study_id", study_id}},
         o.seed.value_or(0));
}

struct AblateOptions {
  std::string motion;
  std::string seg;
  std::vector<std::string> studies;
  int ed = 1;
  int es = 5;
  double clip_fraction = 0.005;
};

void ablate_cmd(const CommonOptions& o, const AblateOptions& p) {
  const Models m = load_models(p.motion, p.seg);
  AblationPlan plan;
  plan.ed = p.ed;
  plan.es = p.es;
  std::vector<fs::path> dirs(p.studies.begin(), p.studies.end());
  std::string csv = "study_id,scheme,phase,dice\n";
  std::map<std::string, std::map<int, std::vector<double>>> by_scheme;
  for (const Study& study : load_studies(dirs, p.clip_fraction)) {
    for (const auto& r : run_interval_ablation(plan, m, study)) {
      char line[160];
      std::snprintf(line, sizeof line, "%s,%s,%d,%.9g\n", study.id.c_str(),
                    scheme_name(r.scheme).c_str(), r.phase, r.dice);
      csv += line;
      by_scheme[scheme_name(r.scheme)][r.phase].push_back(r.dice);
    }
  }
  json summary = json::object();
  for (const auto& [scheme, phases] : by_scheme) {
    for (const auto& [phase, values] : phases) {
      double mean = 0.0;
      for (double v : values) mean += v;
      summary[scheme][phase == plan.ed ? "ed" : "es"] = mean / values.size();
    }
  }
  write_text(csv, fs::path(o.out_dir) / "ablation.csv");
  write_json(summary, fs::path(o.out_dir) / "ablation.json");
  finish(o, "ablate-intervals",
         {{"motion", p.motion}, {"seg", p.seg}, {"studies", p.studies}, {"ed", p.ed},
          {"es", p.es}, {"clip_fraction", p.clip_fraction}},
         o.seed.value_or(0));
}

// Collects summary.json and ablation.json from run directories.
void report_cmd(const CommonOptions& o, const std::vector<std::string>& runs) {
  if (runs.empty()) throw ValidationError("report needs at least one --run directory");
  json report = json::object();
  std::string md = "# cardioseq report\n";
  for (const auto& run : runs) {
    const fs::path dir(run);
    if (!fs::is_directory(dir)) throw IoError("no such run directory " + run);
    json entry = json::object();
    md += "\n## " + dir.filename().string() + "\n\n";
    bool found = false;
    if (fs::exists(dir / "summary.json")) {
      const json s = read_json(dir / "summary.json");
      entry["summary"] = s;
      char line[200];
      std::snprintf(line, sizeof line,
                    "| metric | mean | std | count |\n|---|---|---|---|\n"
                    "| dice | %.4f | %.4f | %zu |\n| hausdorff_mm | %.3f | %.3f | %zu |\n",
                    s["overall"]["dice"]["mean"].get<double>(),
                    s["overall"]["dice"]["std"].get<double>(),
                    s["overall"]["dice"]["count"].get<std::size_t>(),
                    s["overall"]["hausdorff_mm"]["mean"].get<double>(),
                    s["overall"]["hausdorff_mm"]["std"].get<double>(),
                    s["overall"]["hausdorff_mm"]["count"].get<std::size_t>());
      md += line;
      found = true;
    }
    if (fs::exists(dir / "ablation.json")) {
      const json a = read_json(dir / "ablation.json");
      entry["ablation"] = a;
      md += "\n| scheme | ED dice | ES dice |\n|---|---|---|\n";
      for (const auto& [scheme, v] : a.items()) {
        char line[120];
        std::snprintf(line, sizeof line, "| %s | %.4f | %.4f |\n", scheme.c_str(),
                      v.value("ed", 0.0), v.value("es", 0.0));
        md += line;
      }
      found = true;
    }
    if (!found) md += "no summary.json or ablation.json\n";
    report[dir.filename().string()] = entry;
  }
  write_json(report, fs::path(o.out_dir) / "report.json");
  write_text(md, fs::path(o.out_dir) / "report.md");
  finish(o, "report", {{"runs", runs}}, o.seed.value_or(0));
}

int run(int argc, char** argv) {
  CLI::App app{"cardioseq: spatiotemporal cardiac segmentation on phantoms"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CARDIOSEQ_VERSION));

  CommonOptions common;
  PhantomOptions phantom;
  InferOptions infer;
  AblateOptions ablate;
  std::string motion_dir, pred, truth, study_id = "study";
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("phantom-gen", "Generate a phantom cohort with analytic fields");
  add_common(gen, common);
  gen->add_option("--studies", phantom.studies, "Number of studies")->capture_default_str();

  auto* tm = app.add_subcommand("train-motion", "Train SS-Net without labels");
  add_common(tm, common);

  auto* ts = app.add_subcommand("train-seg", "Train SS-SL with a frozen SS-Net");
  add_common(ts, common);
  ts->add_option("--motion", motion_dir, "SS-Net checkpoint directory");

  auto* inf = app.add_subcommand("infer", "Segment the phases of one study");
  add_common(inf, common);
  inf->add_option("--motion", infer.motion, "SS-Net checkpoint directory")->required();
  inf->add_option("--seg", infer.seg, "SS-SL checkpoint directory")->required();
  inf->add_option("--study", infer.study, "Study directory")->required();
  inf->add_option("--phase", infer.phase, "Single phase index (default: all)");
  inf->add_option("--mode", infer.mode, "Motion guidance")
      ->check(CLI::IsMember({"bidirectional", "backward", "forward", "zero"}))
      ->capture_default_str();
  inf->add_option("--clip-fraction", infer.clip_fraction)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Compare predicted and reference masks");
  add_common(ev, common);
  ev->add_option("--pred", pred, "Study directory or directory of t{k}.mask files")->required();
  ev->add_option("--truth", truth, "Study directory or directory of t{k}.mask files")->required();
  ev->add_option("--study-id", study_id)->capture_default_str();

  auto* ab = app.add_subcommand("ablate-intervals", "Dice at ED and ES per interval scheme");
  add_common(ab, common);
  ab->add_option("--motion", ablate.motion, "SS-Net checkpoint directory")->required();
  ab->add_option("--seg", ablate.seg, "SS-SL checkpoint directory")->required();
  ab->add_option("--study", ablate.studies, "Study directory (repeatable)")->required();
  ab->add_option("--ed", ablate.ed)->capture_default_str();
  ab->add_option("--es", ablate.es)->capture_default_str();
  ab->add_option("--clip-fraction", ablate.clip_fraction)->capture_default_str();

  auto* rp = app.add_subcommand("report", "Collect run summaries into one report");
  add_common(rp, common);
  rp->add_option("--run", runs, "Run directory (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 1;
  }

  try {
    if (*gen) phantom_gen(common, phantom);
    if (*tm) train_motion_cmd(common);
    if (*ts) train_seg_cmd(common, motion_dir);
    if (*inf) infer_cmd(common, infer);
    if (*ev) eval_cmd(common, pred, truth, study_id);
    if (*ab) ablate_cmd(common, ablate);
    if (*rp) report_cmd(common, runs);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace
}  // namespace cardioseq

int main(int argc, char** argv) { return cardioseq::run(argc, argv); }
