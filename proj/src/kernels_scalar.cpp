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

#include <algorithm>

#include "cardioseq/error.hpp"
#include "cardioseq/kernels.hpp"

namespace cardioseq::kernels {

ConvGeometry conv_geometry(int cin, int cout, Dims in, int stride, int pad) {
  if (cin <= 0 || cout <= 0) throw ValidationError("conv3d: channel counts must be positive");
  if (stride != 1 && stride != 2) throw ValidationError("conv3d: stride must be 1 or 2");
  if (pad < 0) throw ValidationError("conv3d: negative padding");
  auto extent = [&](int n) {
    const int span = n + 2 * pad - 3;
    if (span < 0) throw ValidationError("conv3d: input extent smaller than kernel");
    return span / stride + 1;
  };
  ConvGeometry g;
  g.cin = cin;
  g.cout = cout;
  g.in = in;
  g.out = {extent(in.nx), extent(in.ny), extent(in.nz)};
  g.stride = stride;
  g.pad = pad;
  return g;
}

namespace scalar {
namespace {

// Output index range [lo, hi) whose input coordinate o*stride + k - pad lies
// inside [0, n).
struct Range {
  int lo;
  int hi;
};

Range valid_range(int n_in, int n_out, int k, int stride, int pad) {
  // need 0 <= o*stride + k - pad < n_in
  int lo = 0;
  while (lo < n_out && lo * stride + k - pad < 0) ++lo;
  int hi = n_out;
  while (hi > lo && (hi - 1) * stride + k - pad >= n_in) --hi;
  return {lo, hi};
}

struct TapRanges {
  Range r[3][3];  // [axis][k]
};

TapRanges tap_ranges(const ConvGeometry& g) {
  TapRanges t{};
  const int nin[3] = {g.in.nx, g.in.ny, g.in.nz};
  const int nout[3] = {g.out.nx, g.out.ny, g.out.nz};
  for (int a = 0; a < 3; ++a) {
    for (int k = 0; k < 3; ++k) {
      t.r[a][k] = valid_range(nin[a], nout[a], k, g.stride, g.pad);
    }
  }
  return t;
}

}  // namespace

template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b,
                    T* out) {
  const std::size_t nin = g.in.count();
  const std::size_t nout = g.out.count();
  const TapRanges tr = tap_ranges(g);
  const int s = g.stride;
  for (int co = 0; co < g.cout; ++co) {
    T* o = out + co * nout;
    std::fill(o, o + nout, b ? b[co] : T(0));
    for (int ci = 0; ci < g.cin; ++ci) {
      const T* src = in + ci * nin;
      const T* wk = w + (static_cast<std::size_t>(co) * g.cin + ci) * ConvGeometry::kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        const Range rz = tr.r[2][kz];
        for (int ky = 0; ky < 3; ++ky) {
          const Range ry = tr.r[1][ky];
          for (int kx = 0; kx < 3; ++kx) {
            const Range rx = tr.r[0][kx];
            const T wv = wk[(kz * 3 + ky) * 3 + kx];
            for (int oz = rz.lo; oz < rz.hi; ++oz) {
              const int iz = oz * s + kz - g.pad;
              for (int oy = ry.lo; oy < ry.hi; ++oy) {
                const int iy = oy * s + ky - g.pad;
                T* orow = o + g.out.index(0, oy, oz);
                const T* irow = src + g.in.index(0, iy, iz) + kx - g.pad;
                for (int ox = rx.lo; ox < rx.hi; ++ox) {
                  orow[ox] += wv * irow[ox * s];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* gout,
                           T* gin) {
  const std::size_t nin = g.in.count();
  const std::size_t nout = g.out.count();
  const TapRanges tr = tap_ranges(g);
  const int s = g.stride;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* dst = gin + ci * nin;
    for (int co = 0; co < g.cout; ++co) {
      const T* go = gout + co * nout;
      const T* wk = w + (static_cast<std::size_t>(co) * g.cin + ci) * ConvGeometry::kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        const Range rz = tr.r[2][kz];
        for (int ky = 0; ky < 3; ++ky) {
          const Range ry = tr.r[1][ky];
          for (int kx = 0; kx < 3; ++kx) {
            const Range rx = tr.r[0][kx];
            const T wv = wk[(kz * 3 + ky) * 3 + kx];
            for (int oz = rz.lo; oz < rz.hi; ++oz) {
              const int iz = oz * s + kz - g.pad;
              for (int oy = ry.lo; oy < ry.hi; ++oy) {
                const int iy = oy * s + ky - g.pad;
                const T* grow = go + g.out.index(0, oy, oz);
                T* irow = dst + g.in.index(0, iy, iz) + kx - g.pad;
                for (int ox = rx.lo; ox < rx.hi; ++ox) {
                  irow[ox * s] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* in, const T* gout,
                            T* gw, T* gb) {
  const std::size_t nin = g.in.count();
  const std::size_t nout = g.out.count();
  const TapRanges tr = tap_ranges(g);
  const int s = g.stride;
  for (int co = 0; co < g.cout; ++co) {
    const T* go = gout + co * nout;
    if (gb) {
      T acc = 0;
      for (std::size_t i = 0; i < nout; ++i) acc += go[i];
      gb[co] += acc;
    }
    for (int ci = 0; ci < g.cin; ++ci) {
      const T* src = in + ci * nin;
      T* wk = gw + (static_cast<std::size_t>(co) * g.cin + ci) * ConvGeometry::kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        const Range rz = tr.r[2][kz];
        for (int ky = 0; ky < 3; ++ky) {
          const Range ry = tr.r[1][ky];
          for (int kx = 0; kx < 3; ++kx) {
            const Range rx = tr.r[0][kx];
            T acc = 0;
            for (int oz = rz.lo; oz < rz.hi; ++oz) {
              const int iz = oz * s + kz - g.pad;
              for (int oy = ry.lo; oy < ry.hi; ++oy) {
                const int iy = oy * s + ky - g.pad;
                const T* grow = go + g.out.index(0, oy, oz);
                const T* irow = src + g.in.index(0, iy, iz) + kx - g.pad;
                for (int ox = rx.lo; ox < rx.hi; ++ox) {
                  acc += grow[ox] * irow[ox * s];
                }
              }
            }
            wk[(kz * 3 + ky) * 3 + kx] += acc;
          }
        }
      }
    }
  }
}

template void conv3d_forward<float>(const ConvGeometry&, const float*, const float*,
                                    const float*, float*);
template void conv3d_forward<double>(const ConvGeometry&, const double*, const double*,
                                     const double*, double*);
template void conv3d_backward_input<float>(const ConvGeometry&, const float*,
                                           const float*, float*);
template void conv3d_backward_input<double>(const ConvGeometry&, const double*,
                                            const double*, double*);
template void conv3d_backward_weight<float>(const ConvGeometry&, const float*,
                                            const float*, float*, float*);
template void conv3d_backward_weight<double>(const ConvGeometry&, const double*,
                                             const double*, double*, double*);

}  // namespace scalar
}  // namespace cardioseq::kernels
