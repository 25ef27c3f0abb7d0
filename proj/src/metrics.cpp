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

#include "cardioseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <map>

#include "cardioseq/error.hpp"

namespace cardioseq {

namespace {

void require_same_dims(const LabelMask& a, const LabelMask& b) {
  if (!(a.dims() == b.dims())) {
    throw ValidationError("mask dims differ: " + to_string(a.dims()) + " vs " +
                          to_string(b.dims()));
  }
}

struct Overlap {
  std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(const LabelMask& a, const LabelMask& b, int cls) {
  require_same_dims(a, b);
  Overlap o;
  const auto& la = a.labels();
  const auto& lb = b.labels();
  for (std::size_t i = 0; i < la.size(); ++i) {
    const bool ia = la[i] == cls, ib = lb[i] == cls;
    o.a += ia;
    o.b += ib;
    o.both += ia && ib;
  }
  return o;
}

using Point = std::array<int, 3>;

double sq_dist(const Point& p, const Point& q, const Spacing& s) {
  const double dx = (p[0] - q[0]) * s[0];
  const double dy = (p[1] - q[1]) * s[1];
  const double dz = (p[2] - q[2]) * s[2];
  return dx * dx + dy * dy + dz * dz;
}

// Largest nearest-neighbour squared distance from `from` to `to`.
double directed_brute(const std::vector<Point>& from, const std::vector<Point>& to,
                      const Spacing& s) {
  double worst = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, sq_dist(p, q, s));
    worst = std::max(worst, best);
  }
  return worst;
}

// Uniform bucket grid over `to`; rings of buckets are visited outward until
// the ring's lower distance bound exceeds the best candidate. The minimum is
// taken over the same squared distances as the brute-force path, so results
// agree exactly.
class BucketGrid {
 public:
  BucketGrid(const std::vector<Point>& pts, const Dims& d, int cell) : cell_(cell) {
    g_ = {(d.nx + cell - 1) / cell, (d.ny + cell - 1) / cell, (d.nz + cell - 1) / cell};
    buckets_.resize(static_cast<std::size_t>(g_[0]) * g_[1] * g_[2]);
    for (const auto& p : pts) buckets_[bucket(p[0] / cell, p[1] / cell, p[2] / cell)].push_back(p);
  }

  double nearest_sq(const Point& p, const Spacing& s) const {
    const int c[3] = {p[0] / cell_, p[1] / cell_, p[2] / cell_};
    const double smin = std::min({s[0], s[1], s[2]});
    const int max_ring = std::max({g_[0], g_[1], g_[2]});
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= max_ring; ++r) {
      if (r > 0) {
        const double bound = ((r - 1) * cell_ + 1) * smin;
        if (bound * bound > best) break;
      }
      for (int z = c[2] - r; z <= c[2] + r; ++z) {
        if (z < 0 || z >= g_[2]) continue;
        for (int y = c[1] - r; y <= c[1] + r; ++y) {
          if (y < 0 || y >= g_[1]) continue;
          const bool shell_yz = std::abs(z - c[2]) == r || std::abs(y - c[1]) == r;
          for (int x = c[0] - r; x <= c[0] + r; ++x) {
            if (x < 0 || x >= g_[0]) continue;
            if (!shell_yz && std::abs(x - c[0]) != r) continue;
            for (const auto& q : buckets_[bucket(x, y, z)]) best = std::min(best, sq_dist(p, q, s));
          }
        }
      }
    }
    return best;
  }

 private:
  std::size_t bucket(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(g_[0]) * (static_cast<std::size_t>(y) +
                                              static_cast<std::size_t>(g_[1]) * z);
  }

  int cell_;
  std::array<int, 3> g_{};
  std::vector<std::vector<Point>> buckets_;
};

double directed_grid(const std::vector<Point>& from, const std::vector<Point>& to,
                     const Dims& d, const Spacing& s) {
  const BucketGrid grid(to, d, 4);
  double worst = 0.0;
  for (const auto& p : from) worst = std::max(worst, grid.nearest_sq(p, s));
  return worst;
}

}  // namespace

double dice(const LabelMask& a, const LabelMask& b, int cls) {
  const Overlap o = overlap(a, b, cls);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double jaccard(const LabelMask& a, const LabelMask& b, int cls) {
  const Overlap o = overlap(a, b, cls);
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

std::vector<Point> boundary_voxels(const LabelMask& m, int cls) {
  const Dims d = m.dims();
  const auto& l = m.labels();
  std::vector<Point> out;
  auto inside = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) return false;
    return l[d.index(x, y, z)] == cls;
  };
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!inside(x, y, z)) continue;
        if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) ||
            !inside(x, y + 1, z) || !inside(x, y, z - 1) || !inside(x, y, z + 1)) {
          out.push_back({x, y, z});
        }
      }
    }
  }
  return out;
}

double hausdorff(const LabelMask& a, const LabelMask& b, int cls, const Spacing& spacing,
                 HausdorffMethod method) {
  require_same_dims(a, b);
  const auto ba = boundary_voxels(a, cls);
  const auto bb = boundary_voxels(b, cls);
  if (ba.empty() || bb.empty()) {
    throw UndefinedMetricError("hausdorff: empty set for class " + std::to_string(cls));
  }
  double sq = 0.0;
  if (method == HausdorffMethod::kBruteForce) {
    sq = std::max(directed_brute(ba, bb, spacing), directed_brute(bb, ba, spacing));
  } else {
    sq = std::max(directed_grid(ba, bb, a.dims(), spacing),
                  directed_grid(bb, ba, a.dims(), spacing));
  }
  return std::sqrt(sq);
}

double endpoint_error(const DeformationField& f, const DeformationField& truth) {
  if (!(f.dims() == truth.dims())) throw ValidationError("endpoint_error: dims differ");
  const std::size_t n = f.dims().count();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(f.data()[c * n + i]) - truth.data()[c * n + i];
      s += d * d;
    }
    acc += std::sqrt(s);
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

std::vector<MetricRecord> per_phase_report(const std::vector<LabelMask>& predictions,
                                           const std::vector<LabelMask>& truths,
                                           const Spacing& spacing, const std::string& study_id) {
  if (predictions.size() != truths.size()) {
    throw ValidationError("per_phase_report: prediction and truth counts differ");
  }
  std::vector<MetricRecord> out;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const int k = std::max(predictions[t].num_classes(), truths[t].num_classes());
    for (int cls = 1; cls < k; ++cls) {
      MetricRecord r;
      r.study_id = study_id;
      r.time_index = static_cast<int>(t);
      r.class_id = cls;
      r.dice = dice(predictions[t], truths[t], cls);
      r.jaccard = jaccard(predictions[t], truths[t], cls);
      try {
        r.hausdorff_mm = hausdorff(predictions[t], truths[t], cls, spacing);
      } catch (const UndefinedMetricError&) {
        r.error = "empty_set";
      }
      out.push_back(r);
    }
  }
  return out;
}

namespace {

Aggregate aggregate(const std::vector<double>& v, std::size_t skipped) {
  Aggregate a;
  a.count = v.size();
  a.skipped = skipped;
  if (v.empty()) return a;
  double s = 0.0;
  for (double x : v) s += x;
  a.mean = s / v.size();
  double q = 0.0;
  for (double x : v) q += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(q / v.size());
  return a;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

MetricSummary summarize(const std::vector<MetricRecord>& records) {
  std::vector<double> d, j, h;
  std::size_t skipped = 0;
  for (const auto& r : records) {
    d.push_back(r.dice);
    j.push_back(r.jaccard);
    if (r.hausdorff_mm) {
      h.push_back(*r.hausdorff_mm);
    } else {
      ++skipped;
    }
  }
  return {aggregate(d, 0), aggregate(j, 0), aggregate(h, skipped)};
}

std::string to_csv(const std::vector<MetricRecord>& records) {
  std::string out = "study_id,time_index,class_id,dice,jaccard,hausdorff_mm,epe_voxels,error\n";
  for (const auto& r : records) {
    out += r.study_id + "," + std::to_string(r.time_index) + "," + std::to_string(r.class_id) +
           "," + fmt(r.dice) + "," + fmt(r.jaccard) + "," +
           (r.hausdorff_mm ? fmt(*r.hausdorff_mm) : "") + "," +
           (r.epe_voxels ? fmt(*r.epe_voxels) : "") + "," + r.error + "\n";
  }
  return out;
}

namespace {
nlohmann::json agg_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"count", a.count}, {"skipped", a.skipped}};
}
}  // namespace

nlohmann::json to_json(const MetricSummary& s) {
  return {{"dice", agg_json(s.dice)},
          {"jaccard", agg_json(s.jaccard)},
          {"hausdorff_mm", agg_json(s.hausdorff_mm)}};
}

nlohmann::json summary_json(const std::vector<MetricRecord>& records) {
  nlohmann::json j;
  j["overall"] = to_json(summarize(records));
  std::map<int, std::vector<MetricRecord>> by_phase;
  for (const auto& r : records) by_phase[r.time_index].push_back(r);
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& [t, recs] : by_phase) {
    nlohmann::json p = to_json(summarize(recs));
    p["time_index"] = t;
    phases.push_back(p);
  }
  j["per_phase"] = phases;
  j["records"] = records.size();
  return j;
}

}  // namespace cardioseq
