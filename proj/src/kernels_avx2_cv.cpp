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

// Channel-vectorized AVX2 kernels: activations are transposed to
// channels-last so that each FMA covers 8 channels of one voxel. Any stride;
// efficient for small spatial extents where the x-vectorized kernels starve.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "cardioseq/error.hpp"
#include "cardioseq/kernels.hpp"

#define CARDIOSEQ_AVX2 __attribute__((target("avx2,fma")))

namespace cardioseq::kernels::avx2 {
namespace {

int round8(int c) { return (c + 7) & ~7; }

// Channels-last copy with a `pad`-voxel zero border; `cstride` >= channels.
struct ChannelsLast {
  std::vector<float> data;
  int px, py, pz, cstride;

  ChannelsLast(const float* src, int channels, int cs, const Dims& d, int pad)
      : px(d.nx + 2 * pad), py(d.ny + 2 * pad), pz(d.nz + 2 * pad), cstride(cs) {
    data.assign(static_cast<std::size_t>(px) * py * pz * cs, 0.0f);
    if (!src) return;
    for (int c = 0; c < channels; ++c) {
      const float* s = src + c * d.count();
      for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
          float* dst = at(pad, y + pad, z + pad) + c;
          const float* row = s + d.index(0, y, z);
          for (int x = 0; x < d.nx; ++x) dst[static_cast<std::size_t>(x) * cs] = row[x];
        }
      }
    }
  }

  float* at(int x, int y, int z) {
    return data.data() + ((static_cast<std::size_t>(z) * py + y) * px + x) * cstride;
  }
};

template <int NV>
CARDIOSEQ_AVX2 void forward_block(const ConvGeometry& g, ChannelsLast& in, const float* wp,
                                  int coutp, int cb, const float* bias_p, float* out_cl) {
  const int s = g.stride;
  std::size_t o = 0;
  for (int oz = 0; oz < g.out.nz; ++oz) {
    for (int oy = 0; oy < g.out.ny; ++oy) {
      for (int ox = 0; ox < g.out.nx; ++ox, ++o) {
        __m256 acc[NV];
        for (int j = 0; j < NV; ++j) acc[j] = _mm256_loadu_ps(bias_p + cb + 8 * j);
        int tap = 0;
        for (int kz = 0; kz < 3; ++kz) {
          for (int ky = 0; ky < 3; ++ky) {
            const float* ip = in.at(s * ox, s * oy + ky, s * oz + kz);
            for (int kx = 0; kx < 3; ++kx, ++tap) {
              const float* row = ip + kx * in.cstride;
              const float* wt = wp + static_cast<std::size_t>(tap) * g.cin * coutp + cb;
              for (int ci = 0; ci < g.cin; ++ci) {
                const __m256 b = _mm256_broadcast_ss(row + ci);
                const float* wr = wt + static_cast<std::size_t>(ci) * coutp;
                for (int j = 0; j < NV; ++j) {
                  acc[j] = _mm256_fmadd_ps(b, _mm256_loadu_ps(wr + 8 * j), acc[j]);
                }
              }
            }
          }
        }
        float* dst = out_cl + o * coutp + cb;
        for (int j = 0; j < NV; ++j) _mm256_storeu_ps(dst + 8 * j, acc[j]);
      }
    }
  }
}

template <int NV>
CARDIOSEQ_AVX2 void backward_input_block(const ConvGeometry& g, ChannelsLast& gin,
                                         const float* wq, int cinp, int cb,
                                         const float* gout_cl) {
  const int s = g.stride;
  std::size_t o = 0;
  for (int oz = 0; oz < g.out.nz; ++oz) {
    for (int oy = 0; oy < g.out.ny; ++oy) {
      for (int ox = 0; ox < g.out.nx; ++ox, ++o) {
        const float* go = gout_cl + o * g.cout;
        int tap = 0;
        for (int kz = 0; kz < 3; ++kz) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx, ++tap) {
              float* gp = gin.at(s * ox + kx, s * oy + ky, s * oz + kz) + cb;
              __m256 acc[NV];
              for (int j = 0; j < NV; ++j) acc[j] = _mm256_loadu_ps(gp + 8 * j);
              const float* wt = wq + static_cast<std::size_t>(tap) * g.cout * cinp + cb;
              for (int co = 0; co < g.cout; ++co) {
                const __m256 b = _mm256_broadcast_ss(go + co);
                const float* wr = wt + static_cast<std::size_t>(co) * cinp;
                for (int j = 0; j < NV; ++j) {
                  acc[j] = _mm256_fmadd_ps(b, _mm256_loadu_ps(wr + 8 * j), acc[j]);
                }
              }
              for (int j = 0; j < NV; ++j) _mm256_storeu_ps(gp + 8 * j, acc[j]);
            }
          }
        }
      }
    }
  }
}

template <int NV>
CARDIOSEQ_AVX2 void backward_weight_block(const ConvGeometry& g, ChannelsLast& in,
                                          const float* gout_cl, int coutp, int cb,
                                          float* gwp) {
  const int s = g.stride;
  int tap = 0;
  for (int kz = 0; kz < 3; ++kz) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx, ++tap) {
        for (int ci = 0; ci < g.cin; ++ci) {
          __m256 acc[NV];
          for (int j = 0; j < NV; ++j) acc[j] = _mm256_setzero_ps();
          const float* go = gout_cl + cb;
          for (int oz = 0; oz < g.out.nz; ++oz) {
            for (int oy = 0; oy < g.out.ny; ++oy) {
              const float* ip = in.at(kx, s * oy + ky, s * oz + kz) + ci;
              const std::size_t step = static_cast<std::size_t>(s) * in.cstride;
              for (int ox = 0; ox < g.out.nx; ++ox, go += coutp) {
                const __m256 b = _mm256_broadcast_ss(ip + ox * step);
                for (int j = 0; j < NV; ++j) {
                  acc[j] = _mm256_fmadd_ps(b, _mm256_loadu_ps(go + 8 * j), acc[j]);
                }
              }
            }
          }
          float* dst = gwp + (static_cast<std::size_t>(tap) * g.cin + ci) * coutp + cb;
          for (int j = 0; j < NV; ++j) _mm256_storeu_ps(dst + 8 * j, acc[j]);
        }
      }
    }
  }
}

// Calls fn.template operator()<NV>(cb) over channel blocks of up to 32.
template <typename Fn>
void for_each_block(int channels_padded, Fn&& fn) {
  for (int cb = 0; cb < channels_padded; cb += 32) {
    switch (std::min(4, (channels_padded - cb) / 8)) {
      case 1: fn.template operator()<1>(cb); break;
      case 2: fn.template operator()<2>(cb); break;
      case 3: fn.template operator()<3>(cb); break;
      default: fn.template operator()<4>(cb); break;
    }
  }
}

void check(const ConvGeometry& g) {
  if (g.pad < 0 || g.pad > 1 || g.stride < 1) {
    throw ValidationError("channel-vectorized conv: unsupported geometry");
  }
}

// Channels-last (cstride) -> channel-major, first `channels` only.
std::vector<float> to_channels_last(const float* src, int channels, int cs, const Dims& d) {
  std::vector<float> out(d.count() * cs, 0.0f);
  const std::size_t n = d.count();
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) out[i * cs + c] = src[c * n + i];
  }
  return out;
}

}  // namespace

void conv3d_forward_cv(const ConvGeometry& g, const float* in, const float* w, const float* b,
                       float* out) {
  check(g);
  const int coutp = round8(g.cout);
  ChannelsLast x(in, g.cin, g.cin, g.in, g.pad);
  std::vector<float> wp(static_cast<std::size_t>(27) * g.cin * coutp, 0.0f);
  for (int co = 0; co < g.cout; ++co) {
    for (int ci = 0; ci < g.cin; ++ci) {
      for (int t = 0; t < 27; ++t) {
        wp[(static_cast<std::size_t>(t) * g.cin + ci) * coutp + co] = w[(co * g.cin + ci) * 27 + t];
      }
    }
  }
  std::vector<float> bias(coutp, 0.0f);
  std::copy(b, b + g.cout, bias.begin());
  const std::size_t n = g.out.count();
  std::vector<float> out_cl(n * coutp);
  for_each_block(coutp, [&]<int NV>(int cb) {
    forward_block<NV>(g, x, wp.data(), coutp, cb, bias.data(), out_cl.data());
  });
  for (int co = 0; co < g.cout; ++co) {
    for (std::size_t i = 0; i < n; ++i) out[co * n + i] = out_cl[i * coutp + co];
  }
}

void conv3d_backward_input_cv(const ConvGeometry& g, const float* w, const float* gout,
                              float* gin) {
  check(g);
  const int cinp = round8(g.cin);
  std::vector<float> wq(static_cast<std::size_t>(27) * g.cout * cinp, 0.0f);
  for (int co = 0; co < g.cout; ++co) {
    for (int ci = 0; ci < g.cin; ++ci) {
      for (int t = 0; t < 27; ++t) {
        wq[(static_cast<std::size_t>(t) * g.cout + co) * cinp + ci] = w[(co * g.cin + ci) * 27 + t];
      }
    }
  }
  const std::vector<float> gout_cl = to_channels_last(gout, g.cout, g.cout, g.out);
  ChannelsLast acc(nullptr, g.cin, cinp, g.in, g.pad);
  for_each_block(cinp, [&]<int NV>(int cb) {
    backward_input_block<NV>(g, acc, wq.data(), cinp, cb, gout_cl.data());
  });
  const std::size_t n = g.in.count();
  for (int z = 0; z < g.in.nz; ++z) {
    for (int y = 0; y < g.in.ny; ++y) {
      for (int x = 0; x < g.in.nx; ++x) {
        const float* src = acc.at(x + g.pad, y + g.pad, z + g.pad);
        const std::size_t i = g.in.index(x, y, z);
        for (int ci = 0; ci < g.cin; ++ci) gin[ci * n + i] += src[ci];
      }
    }
  }
}

void conv3d_backward_weight_cv(const ConvGeometry& g, const float* in, const float* gout,
                               float* gw, float* gb) {
  check(g);
  const int coutp = round8(g.cout);
  ChannelsLast x(in, g.cin, g.cin, g.in, g.pad);
  const std::vector<float> gout_cl = to_channels_last(gout, g.cout, coutp, g.out);
  std::vector<float> gwp(static_cast<std::size_t>(27) * g.cin * coutp, 0.0f);
  for_each_block(coutp, [&]<int NV>(int cb) {
    backward_weight_block<NV>(g, x, gout_cl.data(), coutp, cb, gwp.data());
  });
  for (int co = 0; co < g.cout; ++co) {
    for (int ci = 0; ci < g.cin; ++ci) {
      for (int t = 0; t < 27; ++t) {
        gw[(co * g.cin + ci) * 27 + t] += gwp[(static_cast<std::size_t>(t) * g.cin + ci) * coutp + co];
      }
    }
  }
  const std::size_t n = g.out.count();
  for (int co = 0; co < g.cout; ++co) {
    float s = 0.0f;
    for (std::size_t i = 0; i < n; ++i) s += gout[co * n + i];
    gb[co] += s;
  }
}

}  // namespace cardioseq::kernels::avx2
