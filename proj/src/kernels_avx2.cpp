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

#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cardioseq/error.hpp"
#include "cardioseq/kernels.hpp"

#define CARDIOSEQ_AVX2 __attribute__((target("avx2,fma")))

namespace cardioseq::kernels::avx2 {
namespace {

alignas(32) constexpr std::int32_t kMaskTable[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                     0,  0,  0,  0,  0,  0,  0,  0};

CARDIOSEQ_AVX2 inline __m256i lane_mask(int lanes) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kMaskTable + 8 - lanes));
}

// Copy with a one-voxel zero border on every face.
struct Padded {
  std::vector<float> data;
  int px = 0;
  int py = 0;
  int pz = 0;

  Padded(const float* src, int channels, const Dims& d)
      : px(d.nx + 2), py(d.ny + 2), pz(d.nz + 2) {
    data.assign(static_cast<std::size_t>(channels) * px * py * pz, 0.0f);
    for (int c = 0; c < channels; ++c) {
      for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
          const float* s = src + c * d.count() + d.index(0, y, z);
          std::copy(s, s + d.nx, row(c, y + 1, z + 1) + 1);
        }
      }
    }
  }
  float* row(int c, int y, int z) {
    return data.data() + ((static_cast<std::size_t>(c) * pz + z) * py + y) * px;
  }
  const float* row(int c, int y, int z) const {
    return data.data() + ((static_cast<std::size_t>(c) * pz + z) * py + y) * px;
  }
};

constexpr int kCoBlock = 4;

// acc[j][v] covers output channel co0 + j, lanes x0 + 8v ... x0 + 8v + 7.
template <int NV>
CARDIOSEQ_AVX2 void forward_block(const Padded& in, int cin, const float* packed,
                                  const float* bias, int co_n, int oy, int oz, int x0,
                                  const int* lanes, float* const* out_rows) {
  __m256 acc[kCoBlock][NV];
  __m256i mask[NV];
  for (int v = 0; v < NV; ++v) mask[v] = lane_mask(lanes[v]);
  for (int j = 0; j < kCoBlock; ++j) {
    const __m256 bj = _mm256_set1_ps(j < co_n ? bias[j] : 0.0f);
    for (int v = 0; v < NV; ++v) acc[j][v] = bj;
  }
  for (int ci = 0; ci < cin; ++ci) {
    for (int kz = 0; kz < 3; ++kz) {
      for (int ky = 0; ky < 3; ++ky) {
        const float* row = in.row(ci, oy + ky, oz + kz) + x0;
        const float* wk = packed + ((ci * 27) + (kz * 3 + ky) * 3) * kCoBlock;
        for (int kx = 0; kx < 3; ++kx) {
          __m256 xv[NV];
          for (int v = 0; v < NV; ++v) {
            xv[v] = lanes[v] == 8 ? _mm256_loadu_ps(row + kx + 8 * v)
                                  : _mm256_maskload_ps(row + kx + 8 * v, mask[v]);
          }
          for (int j = 0; j < kCoBlock; ++j) {
            const __m256 w = _mm256_broadcast_ss(wk + kx * kCoBlock + j);
            for (int v = 0; v < NV; ++v) acc[j][v] = _mm256_fmadd_ps(w, xv[v], acc[j][v]);
          }
        }
      }
    }
  }
  for (int j = 0; j < co_n; ++j) {
    for (int v = 0; v < NV; ++v) {
      float* dst = out_rows[j] + x0 + 8 * v;
      if (lanes[v] == 8) {
        _mm256_storeu_ps(dst, acc[j][v]);
      } else {
        _mm256_maskstore_ps(dst, mask[v], acc[j][v]);
      }
    }
  }
}

void check_geometry(const ConvGeometry& g) {
  if (g.stride != 1 || g.pad != 1 || !(g.in == g.out)) {
    throw ValidationError("avx2 conv3d kernel requires stride 1, pad 1");
  }
}

CARDIOSEQ_AVX2 void forward_padded(const ConvGeometry& g, const Padded& pin,
                                   const float* w, const float* b, float* out) {
  const Dims& d = g.out;
  const std::size_t n = d.count();
  std::vector<float> packed(static_cast<std::size_t>(g.cin) * 27 * kCoBlock);
  std::vector<float> bias(kCoBlock);
  for (int co0 = 0; co0 < g.cout; co0 += kCoBlock) {
    const int co_n = std::min(kCoBlock, g.cout - co0);
    std::fill(packed.begin(), packed.end(), 0.0f);
    for (int j = 0; j < co_n; ++j) {
      bias[j] = b ? b[co0 + j] : 0.0f;
      for (int ci = 0; ci < g.cin; ++ci) {
        for (int k = 0; k < 27; ++k) {
          packed[(ci * 27 + k) * kCoBlock + j] =
              w[(static_cast<std::size_t>(co0 + j) * g.cin + ci) * 27 + k];
        }
      }
    }
    for (int oz = 0; oz < d.nz; ++oz) {
      for (int oy = 0; oy < d.ny; ++oy) {
        float* rows[kCoBlock];
        for (int j = 0; j < kCoBlock; ++j) {
          rows[j] = out + static_cast<std::size_t>(co0 + std::min(j, co_n - 1)) * n +
                    d.index(0, oy, oz);
        }
        for (int x0 = 0; x0 < d.nx; x0 += 16) {
          const int lanes[2] = {std::min(8, d.nx - x0), std::clamp(d.nx - x0 - 8, 0, 8)};
          if (lanes[1] > 0) {
            forward_block<2>(pin, g.cin, packed.data(), bias.data(), co_n, oy, oz, x0,
                             lanes, rows);
          } else {
            forward_block<1>(pin, g.cin, packed.data(), bias.data(), co_n, oy, oz, x0,
                             lanes, rows);
          }
        }
      }
    }
  }
}

CARDIOSEQ_AVX2 float hsum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_hadd_ps(s, s);
  s = _mm_hadd_ps(s, s);
  return _mm_cvtss_f32(s);
}

}  // namespace

void conv3d_forward(const ConvGeometry& g, const float* in, const float* w,
                    const float* b, float* out) {
  check_geometry(g);
  const Padded pin(in, g.cin, g.in);
  forward_padded(g, pin, w, b, out);
}

void conv3d_backward_input(const ConvGeometry& g, const float* w, const float* gout,
                           float* gin) {
  check_geometry(g);
  // Transposed convolution at stride 1 is a convolution with the kernel
  // flipped in space and the channel roles swapped.
  ConvGeometry t = g;
  std::swap(t.cin, t.cout);
  std::vector<float> flipped(g.weight_count());
  for (int co = 0; co < g.cout; ++co) {
    for (int ci = 0; ci < g.cin; ++ci) {
      for (int k = 0; k < 27; ++k) {
        flipped[(static_cast<std::size_t>(ci) * g.cout + co) * 27 + k] =
            w[(static_cast<std::size_t>(co) * g.cin + ci) * 27 + (26 - k)];
      }
    }
  }
  std::vector<float> tmp(static_cast<std::size_t>(g.cin) * g.in.count());
  const Padded pg(gout, g.cout, g.out);
  forward_padded(t, pg, flipped.data(), nullptr, tmp.data());
  for (std::size_t i = 0; i < tmp.size(); ++i) gin[i] += tmp[i];
}

namespace {

// Accumulates d/dw for output channels co0 .. co0 + CO - 1, one (ci, kz, ky)
// kernel row at a time: CO x 3 accumulators share each input load.
template <int CO>
CARDIOSEQ_AVX2 void weight_rows(const ConvGeometry& g, const Padded& pin, const float* gout,
                                int co0, float* gw) {
  const Dims& d = g.out;
  const std::size_t n = d.count();
  const int nchunks = (d.nx + 7) / 8;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int kz = 0; kz < 3; ++kz) {
      for (int ky = 0; ky < 3; ++ky) {
        __m256 acc[CO][3];
        for (auto& row : acc) {
          for (auto& a : row) a = _mm256_setzero_ps();
        }
        for (int oz = 0; oz < d.nz; ++oz) {
          for (int oy = 0; oy < d.ny; ++oy) {
            const float* irow = pin.row(ci, oy + ky, oz + kz);
            const std::size_t base = d.index(0, oy, oz);
            for (int c = 0; c < nchunks; ++c) {
              const int x0 = 8 * c;
              const int lanes = std::min(8, d.nx - x0);
              const __m256i mask = lane_mask(lanes);
              __m256 gv[CO];
              for (int j = 0; j < CO; ++j) {
                const float* src = gout + (co0 + j) * n + base + x0;
                gv[j] = lanes == 8 ? _mm256_loadu_ps(src) : _mm256_maskload_ps(src, mask);
              }
              for (int kx = 0; kx < 3; ++kx) {
                const __m256 xv = lanes == 8 ? _mm256_loadu_ps(irow + x0 + kx)
                                             : _mm256_maskload_ps(irow + x0 + kx, mask);
                for (int j = 0; j < CO; ++j) acc[j][kx] = _mm256_fmadd_ps(gv[j], xv, acc[j][kx]);
              }
            }
          }
        }
        for (int j = 0; j < CO; ++j) {
          float* wk = gw + (static_cast<std::size_t>(co0 + j) * g.cin + ci) * 27 + kz * 9 + ky * 3;
          for (int kx = 0; kx < 3; ++kx) wk[kx] += hsum(acc[j][kx]);
        }
      }
    }
  }
}

}  // namespace

CARDIOSEQ_AVX2 void conv3d_backward_weight(const ConvGeometry& g, const float* in,
                                           const float* gout, float* gw, float* gb) {
  check_geometry(g);
  const std::size_t n = g.out.count();
  const Padded pin(in, g.cin, g.in);
  if (gb) {
    for (int co = 0; co < g.cout; ++co) {
      const float* go = gout + co * n;
      __m256 s = _mm256_setzero_ps();
      std::size_t i = 0;
      for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(go + i));
      float acc = hsum(s);
      for (; i < n; ++i) acc += go[i];
      gb[co] += acc;
    }
  }
  int co = 0;
  for (; co + 4 <= g.cout; co += 4) weight_rows<4>(g, pin, gout, co, gw);
  for (; co + 2 <= g.cout; co += 2) weight_rows<2>(g, pin, gout, co, gw);
  for (; co < g.cout; ++co) weight_rows<1>(g, pin, gout, co, gw);
}

}  // namespace cardioseq::kernels::avx2
