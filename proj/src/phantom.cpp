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

#include "cardioseq/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "cardioseq/error.hpp"

namespace cardioseq {

namespace fs = std::filesystem;
using Vec3 = std::array<double, 3>;

namespace {

double mean_axis(const PhantomSpec& s) {
  return (s.semi_axes[0] + s.semi_axes[1] + s.semi_axes[2]) / 3.0;
}

double q_epi(const PhantomSpec& s) { return 1.0 + s.thickness / mean_axis(s); }
double q_out(const PhantomSpec& s) { return q_epi(s) + s.taper_width / mean_axis(s); }

double es_scale(const PhantomSpec& s) { return std::cbrt(1.0 - s.ejection_fraction); }

double core_scale(const PhantomSpec& s, double f) {
  const double q1 = s.core_fraction;
  const double kappa_es = (es_scale(s) - s.es_gap_slope * (1.0 - q1)) / q1;
  return 1.0 - (1.0 - kappa_es) * f;
}

struct Profile {
  double q1, kappa, scale, qe, qo, rho_e;
};

Profile profile(const PhantomSpec& s, double t) {
  const double f = contraction(s, t);
  Profile p;
  p.q1 = s.core_fraction;
  p.kappa = core_scale(s, f);
  p.scale = cavity_scale(s, t);
  p.qe = q_epi(s);
  p.qo = q_out(s);
  p.rho_e = std::cbrt(p.qe * p.qe * p.qe - 1.0 + p.scale * p.scale * p.scale);
  return p;
}

// Strictly increasing radial profile; rho(q) == q for q >= qo.
double radial(const Profile& p, double q) {
  if (q <= p.q1) return p.kappa * q;
  if (q <= 1.0) {
    return p.kappa * p.q1 + (p.scale - p.kappa * p.q1) * (q - p.q1) / (1.0 - p.q1);
  }
  if (q <= p.qe) return std::cbrt(q * q * q - 1.0 + p.scale * p.scale * p.scale);
  if (q <= p.qo) return q + (p.rho_e - p.qe) * (p.qo - q) / (p.qo - p.qe);
  return q;
}

double radial_inverse(const Profile& p, double r) {
  const double core = p.kappa * p.q1;
  if (r <= core) return r / p.kappa;
  if (r <= p.scale) return p.q1 + (r - core) * (1.0 - p.q1) / (p.scale - core);
  if (r <= p.rho_e) return std::cbrt(r * r * r + 1.0 - p.scale * p.scale * p.scale);
  if (r <= p.qo) {
    const double k = (p.rho_e - p.qe) / (p.qo - p.qe);
    return (r - k * p.qo) / (1.0 - k);
  }
  return r;
}

// Rotation angle about z; depends only on |v| and v_z, both of which the
// rotation preserves.
double twist_angle(const PhantomSpec& s, const Profile& p, double f, const Vec3& v) {
  const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  double w = 1.0;
  if (r >= p.qo) {
    w = 0.0;
  } else if (r > p.qe) {
    w = (p.qo - r) / (p.qo - p.qe);
  }
  const double theta = s.max_twist_deg * std::numbers::pi / 180.0;
  return theta * f * std::clamp(v[2], -1.0, 1.0) * w;
}

Vec3 rotate_z(const Vec3& v, double angle) {
  const double c = std::cos(angle), sn = std::sin(angle);
  return {c * v[0] - sn * v[1], sn * v[0] + c * v[1], v[2]};
}

Vec3 scale_radial(const Vec3& u, double q, double rho) {
  if (q == 0.0) return u;
  const double k = rho / q;
  return {u[0] * k, u[1] * k, u[2] * k};
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 papillary_center(const PhantomSpec& s, int k) {
  const double az = (s.papillary_azimuth_deg + 360.0 * k / s.papillary_count) *
                    std::numbers::pi / 180.0;
  const double el = -0.25;
  const double amin = std::min({s.semi_axes[0], s.semi_axes[1], s.semi_axes[2]});
  const double qc = s.core_fraction - s.papillary_radius / amin - 0.02;
  Vec3 d{std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el)};
  Vec3 c;
  for (int i = 0; i < 3; ++i) c[i] = s.center[i] + s.semi_axes[i] * qc * d[i];
  return c;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 29;
  return x;
}

std::string frame_name(int k, const char* kind) {
  return "t" + std::to_string(k) + "." + kind;
}

std::string field_name(int from, int to) {
  return "t" + std::to_string(from) + "to" + std::to_string(to) + ".field";
}

}  // namespace

double contraction(const PhantomSpec& spec, double t) {
  const double v = std::sin(std::numbers::pi * t / spec.time_points);
  return v * v;
}

double cavity_scale(const PhantomSpec& spec, double t) {
  return 1.0 - (1.0 - es_scale(spec)) * contraction(spec, t);
}

void validate(const PhantomSpec& s) {
  if (s.dims.nx < 8 || s.dims.ny < 8 || s.dims.nz < 8) {
    throw ValidationError("phantom: dims must be at least 8 per axis");
  }
  if (s.time_points < 2) throw ValidationError("phantom: need at least 2 time points");
  if (!(s.ejection_fraction > 0.0 && s.ejection_fraction < 1.0)) {
    throw ValidationError("phantom: ejection fraction must lie in (0, 1)");
  }
  for (double a : s.semi_axes) {
    if (!(a > 1.0)) throw ValidationError("phantom: semi-axes must exceed 1 voxel");
  }
  if (!(s.thickness > 0.0)) throw ValidationError("phantom: thickness must be positive");
  if (!(s.noise_sigma >= 0.0)) throw ValidationError("phantom: noise sigma must be >= 0");
  if (!(s.core_fraction > 0.0 && s.core_fraction < 1.0)) {
    throw ValidationError("phantom: core_fraction must lie in (0, 1)");
  }
  if (!(s.es_gap_slope > 0.0) || core_scale(s, 1.0) <= 0.0) {
    throw ValidationError("phantom: es_gap_slope incompatible with ejection fraction");
  }
  if (s.papillary_count < 0) throw ValidationError("phantom: papillary count must be >= 0");
  if (s.papillary_count > 0) {
    const double amin = std::min({s.semi_axes[0], s.semi_axes[1], s.semi_axes[2]});
    if (s.core_fraction - s.papillary_radius / amin - 0.02 <= 0.0) {
      throw ValidationError("phantom: papillary radius too large for the cavity");
    }
  }
  // Largest wall displacement: radial contraction plus twist arc at the epicardium.
  const double amax = std::max({s.semi_axes[0], s.semi_axes[1], s.semi_axes[2]});
  const double max_disp = amax * (1.0 - es_scale(s)) +
                          s.max_twist_deg * std::numbers::pi / 180.0 * q_epi(s) * amax;
  const int n[3] = {s.dims.nx, s.dims.ny, s.dims.nz};
  for (int i = 0; i < 3; ++i) {
    const double room = std::min(s.center[i], n[i] - 1 - s.center[i]) - s.semi_axes[i];
    if (room < s.thickness + max_disp) {
      throw ValidationError("phantom: cavity does not fit with margin along axis " +
                            std::to_string(i));
    }
  }
}

Vec3 phase_map(const PhantomSpec& s, double t, Vec3 p) {
  const Profile pr = profile(s, t);
  Vec3 u;
  for (int i = 0; i < 3; ++i) u[i] = (p[i] - s.center[i]) / s.semi_axes[i];
  const double q = norm(u);
  Vec3 v = scale_radial(u, q, radial(pr, q));
  v = rotate_z(v, twist_angle(s, pr, contraction(s, t), v));
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = s.center[i] + s.semi_axes[i] * v[i];
  return out;
}

Vec3 phase_map_inverse(const PhantomSpec& s, double t, Vec3 p) {
  const Profile pr = profile(s, t);
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = (p[i] - s.center[i]) / s.semi_axes[i];
  v = rotate_z(v, -twist_angle(s, pr, contraction(s, t), v));
  const double r = norm(v);
  const Vec3 u = scale_radial(v, r, radial_inverse(pr, r));
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = s.center[i] + s.semi_axes[i] * u[i];
  return out;
}

Tissue template_tissue(const PhantomSpec& s, Vec3 p) {
  for (int k = 0; k < s.papillary_count; ++k) {
    const Vec3 c = papillary_center(s, k);
    const double d2 = (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]) +
                      (p[2] - c[2]) * (p[2] - c[2]);
    if (d2 <= s.papillary_radius * s.papillary_radius) return Tissue::kPapillary;
  }
  Vec3 u;
  for (int i = 0; i < 3; ++i) u[i] = (p[i] - s.center[i]) / s.semi_axes[i];
  const double q = norm(u);
  if (q <= 1.0) return Tissue::kBlood;
  if (q <= q_epi(s)) return Tissue::kMyocardium;
  return Tissue::kBackground;
}

float tissue_intensity(Tissue tissue) {
  switch (tissue) {
    case Tissue::kBackground: return 0.2f;
    case Tissue::kMyocardium: return 0.8f;
    case Tissue::kBlood: return 0.55f;
    case Tissue::kPapillary: return 0.8f;
  }
  return 0.2f;
}

namespace {

template <typename Fn>
void for_each_voxel(const Dims& d, Fn&& fn) {
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) fn(d.index(x, y, z), Vec3{double(x), double(y), double(z)});
    }
  }
}

std::vector<Tissue> render_tissue(const PhantomSpec& s, int t) {
  std::vector<Tissue> out(s.dims.count());
  for_each_voxel(s.dims, [&](std::size_t i, const Vec3& p) {
    out[i] = template_tissue(s, phase_map_inverse(s, t, p));
  });
  return out;
}

}  // namespace

VolumeGrid render_clean(const PhantomSpec& s, int t) {
  validate(s);
  const auto tissue = render_tissue(s, t);
  std::vector<float> data(tissue.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = tissue_intensity(tissue[i]);
  return VolumeGrid(s.dims, s.spacing, std::move(data));
}

LabelMask render_mask(const PhantomSpec& s, int t) {
  validate(s);
  const auto tissue = render_tissue(s, t);
  std::vector<std::uint8_t> labels(tissue.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = is_cavity(tissue[i]) ? 1 : 0;
  return LabelMask(s.dims, s.spacing, std::move(labels), 2);
}

DeformationField analytic_field(const PhantomSpec& s, int t_from, int t_to) {
  validate(s);
  if (t_from < 0 || t_to < 0 || t_from >= s.time_points || t_to >= s.time_points) {
    throw ValidationError("phantom: phase index out of range");
  }
  if (t_from == t_to) return DeformationField::zeros(s.dims, s.spacing);
  const std::size_t n = s.dims.count();
  std::vector<float> data(3 * n);
  for_each_voxel(s.dims, [&](std::size_t i, const Vec3& p) {
    const Vec3 q = phase_map(s, t_from, phase_map_inverse(s, t_to, p));
    for (int c = 0; c < 3; ++c) data[c * n + i] = static_cast<float>(q[c] - p[c]);
  });
  return DeformationField(s.dims, s.spacing, std::move(data));
}

PhantomSequence generate(const PhantomSpec& s) {
  validate(s);
  PhantomSequence seq;
  seq.spec = s;
  const int T = s.time_points;
  for (int t = 0; t < T; ++t) {
    const auto tissue = render_tissue(s, t);
    std::vector<float> data(tissue.size());
    std::vector<std::uint8_t> labels(tissue.size());
    std::mt19937_64 rng(mix(s.seed, static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < tissue.size(); ++i) {
      const double n = s.noise_sigma > 0.0 ? s.noise_sigma * noise(rng) : 0.0;
      data[i] = static_cast<float>(tissue_intensity(tissue[i]) + n);
      labels[i] = is_cavity(tissue[i]) ? 1 : 0;
    }
    seq.frames.emplace_back(s.dims, s.spacing, std::move(data));
    seq.masks.emplace_back(s.dims, s.spacing, std::move(labels), 2);
  }
  for (int t = 0; t < T; ++t) {
    seq.forward.push_back(analytic_field(s, t, (t + 1) % T));
    seq.backward.push_back(analytic_field(s, (t + 1) % T, t));
  }
  return seq;
}

double min_jacobian_determinant(const DeformationField& f) {
  const Dims d = f.dims();
  const std::size_t n = d.count();
  const int ext[3] = {d.nx, d.ny, d.nz};
  double worst = std::numeric_limits<double>::infinity();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const int pos[3] = {x, y, z};
        double J[3][3];
        for (int axis = 0; axis < 3; ++axis) {
          int lo[3] = {x, y, z}, hi[3] = {x, y, z};
          lo[axis] = std::max(0, pos[axis] - 1);
          hi[axis] = std::min(ext[axis] - 1, pos[axis] + 1);
          const double h = hi[axis] - lo[axis];
          const std::size_t il = d.index(lo[0], lo[1], lo[2]);
          const std::size_t ih = d.index(hi[0], hi[1], hi[2]);
          for (int c = 0; c < 3; ++c) {
            const double du = h > 0 ? (f.data()[c * n + ih] - f.data()[c * n + il]) / h : 0.0;
            J[c][axis] = (c == axis ? 1.0 : 0.0) + du;
          }
        }
        const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                           J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                           J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        worst = std::min(worst, det);
      }
    }
  }
  return worst;
}

StudyManifest export_study(const PhantomSequence& seq, const fs::path& dir,
                           const std::string& study_id) {
  fs::create_directories(dir);
  StudyManifest m;
  m.study_id = study_id;
  m.spacing = seq.spec.spacing;
  const int T = static_cast<int>(seq.frames.size());
  for (int t = 0; t < T; ++t) {
    m.volumes.push_back(frame_name(t, "vol"));
    m.masks.push_back(frame_name(t, "mask"));
    save_volume(seq.frames[t], dir / m.volumes.back());
    save_mask(seq.masks[t], dir / m.masks.back());
  }
  for (int t = 0; t < T; ++t) {
    m.fields.push_back(field_name(t, (t + 1) % T));
    save_field(seq.forward[t], dir / m.fields.back());
  }
  for (int t = 0; t < T; ++t) {
    m.fields.push_back(field_name((t + 1) % T, t));
    save_field(seq.backward[t], dir / m.fields.back());
  }
  save_manifest(m, dir / "manifest.json");
  m.directory = dir;
  return m;
}

PhantomStudy load_phantom_study(const fs::path& dir) {
  PhantomStudy out;
  out.study = load_study(dir);
  const auto& m = out.study.manifest;
  const int T = static_cast<int>(m.time_points());
  if (m.fields.size() != static_cast<std::size_t>(2 * T)) {
    throw ValidationError(dir.string() + ": expected " + std::to_string(2 * T) +
                          " fields in manifest");
  }
  for (int t = 0; t < T; ++t) {
    out.forward.push_back(load_field(m.directory / m.fields[t]));
    out.backward.push_back(load_field(m.directory / m.fields[T + t]));
  }
  return out;
}

PhantomSpec cohort_spec(const PhantomSpec& base, int index) {
  PhantomSpec s = base;
  std::mt19937_64 rng(mix(base.seed, 0x5eed0000ull + static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double axial = 1.0 + 0.08 * u(rng);
  const double lateral = 1.0 + 0.08 * u(rng);
  s.semi_axes[0] = base.semi_axes[0] * lateral * (1.0 + 0.04 * u(rng));
  s.semi_axes[1] = base.semi_axes[1] * lateral * (1.0 + 0.04 * u(rng));
  s.semi_axes[2] = base.semi_axes[2] * axial;
  for (int i = 0; i < 3; ++i) s.center[i] = base.center[i] + 1.0 * u(rng);
  s.thickness = base.thickness + 0.4 * u(rng);
  s.papillary_azimuth_deg = base.papillary_azimuth_deg + 180.0 * u(rng);
  s.seed = mix(base.seed, static_cast<std::uint64_t>(index) + 1);
  validate(s);
  return s;
}

nlohmann::json to_json(const PhantomSpec& s) {
  return {{"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
          {"time_points", s.time_points},
          {"center", s.center},
          {"semi_axes", s.semi_axes},
          {"thickness", s.thickness},
          {"ejection_fraction", s.ejection_fraction},
          {"max_twist_deg", s.max_twist_deg},
          {"papillary_count", s.papillary_count},
          {"papillary_radius", s.papillary_radius},
          {"papillary_azimuth_deg", s.papillary_azimuth_deg},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"spacing", s.spacing},
          {"core_fraction", s.core_fraction},
          {"es_gap_slope", s.es_gap_slope},
          {"taper_width", s.taper_width}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("phantom spec must be a JSON object");
  const nlohmann::json defaults = to_json(PhantomSpec{});
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("unknown phantom key '" + key + "'");
  }
  PhantomSpec s;
  try {
    const auto dims = j.value("dims", std::array<int, 3>{s.dims.nx, s.dims.ny, s.dims.nz});
    s.dims = {dims[0], dims[1], dims[2]};
    s.time_points = j.value("time_points", s.time_points);
    s.center = j.value("center", s.center);
    s.semi_axes = j.value("semi_axes", s.semi_axes);
    s.thickness = j.value("thickness", s.thickness);
    s.ejection_fraction = j.value("ejection_fraction", s.ejection_fraction);
    s.max_twist_deg = j.value("max_twist_deg", s.max_twist_deg);
    s.papillary_count = j.value("papillary_count", s.papillary_count);
    s.papillary_radius = j.value("papillary_radius", s.papillary_radius);
    s.papillary_azimuth_deg = j.value("papillary_azimuth_deg", s.papillary_azimuth_deg);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.spacing = j.value("spacing", s.spacing);
    s.core_fraction = j.value("core_fraction", s.core_fraction);
    s.es_gap_slope = j.value("es_gap_slope", s.es_gap_slope);
    s.taper_width = j.value("taper_width", s.taper_width);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed phantom spec: ") + e.what());
  }
  validate(s);
  return s;
}

}  // namespace cardioseq
