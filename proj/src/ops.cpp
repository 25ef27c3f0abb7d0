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

#include "cardioseq/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cardioseq/error.hpp"
#include "cardioseq/interp.hpp"
#include "cardioseq/kernels.hpp"

namespace cardioseq::ad {
namespace {

template <typename T>
void require_volume(const Tensor<T>& t, const char* op) {
  if (t.shape().size() != 4) {
    throw ValidationError(std::string(op) + ": expected (C,X,Y,Z), got " +
                          shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
}

template <typename T>
bool wants_grad(const std::shared_ptr<Node<T>>& n) {
  return n->requires_grad;
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  require_volume(input, "conv3d");
  const Shape& ws = weight.shape();
  if (ws.size() != 5 || ws[2] != 3 || ws[3] != 3 || ws[4] != 3) {
    throw ValidationError("conv3d: weight must be (C_out, C_in, 3, 3, 3), got " +
                          shape_string(ws));
  }
  if (ws[1] != input.channels()) {
    throw ValidationError("conv3d: weight expects " + std::to_string(ws[1]) +
                          " input channels, input has " + std::to_string(input.channels()));
  }
  if (bias.shape() != Shape{ws[0]}) {
    throw ValidationError("conv3d: bias must be (C_out)");
  }
  const kernels::ConvGeometry g =
      kernels::conv_geometry(ws[1], ws[0], input.spatial(), stride, padding);
  std::vector<T> out(static_cast<std::size_t>(g.cout) * g.out.count());
  kernels::conv3d_forward(g, input.value().data(), weight.value().data(),
                          bias.value().data(), out.data());
  return make_node<T>(
      "conv3d", {g.cout, g.out.nx, g.out.ny, g.out.nz}, std::move(out),
      {input, weight, bias}, [g](Node<T>& self) {
        auto& in = self.inputs[0];
        auto& w = self.inputs[1];
        auto& b = self.inputs[2];
        if (wants_grad(in)) {
          kernels::conv3d_backward_input(g, w->value.data(), self.grad.data(),
                                         in->grad_buffer());
        }
        if (wants_grad(w) || wants_grad(b)) {
          std::vector<T> gw_tmp;
          std::vector<T> gb_tmp;
          T* gw = nullptr;
          T* gb = nullptr;
          if (wants_grad(w)) {
            gw = w->grad_buffer();
          } else {
            gw_tmp.assign(w->value.size(), T(0));
            gw = gw_tmp.data();
          }
          if (wants_grad(b)) {
            gb = b->grad_buffer();
          } else {
            gb_tmp.assign(b->value.size(), T(0));
            gb = gb_tmp.data();
          }
          kernels::conv3d_backward_weight(g, in->value.data(), self.grad.data(), gw, gb);
        }
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> out(x.value());
  for (T& v : out) v = v > T(0) ? v : slope * v;
  return make_node<T>("leaky_relu", x.shape(), std::move(out), {x}, [slope](Node<T>& self) {
    auto& in = self.inputs[0];
    T* gi = in->grad_buffer();
    const auto& xv = in->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      gi[i] += self.grad[i] * (xv[i] > T(0) ? T(1) : slope);
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_volume(x, "upsample_nearest2x");
  const int c = x.channels();
  const Dims s = x.spatial();
  const Dims d{2 * s.nx, 2 * s.ny, 2 * s.nz};
  std::vector<T> out(static_cast<std::size_t>(c) * d.count());
  for (int ch = 0; ch < c; ++ch) {
    const T* src = x.value().data() + ch * s.count();
    T* dst = out.data() + ch * d.count();
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int xx = 0; xx < d.nx; ++xx)
          dst[d.index(xx, y, z)] = src[s.index(xx / 2, y / 2, z / 2)];
  }
  return make_node<T>("upsample_nearest2x", {c, d.nx, d.ny, d.nz}, std::move(out), {x},
                      [c, s, d](Node<T>& self) {
                        T* gi = self.inputs[0]->grad_buffer();
                        for (int ch = 0; ch < c; ++ch) {
                          const T* go = self.grad.data() + ch * d.count();
                          T* dst = gi + ch * s.count();
                          for (int z = 0; z < d.nz; ++z)
                            for (int y = 0; y < d.ny; ++y)
                              for (int xx = 0; xx < d.nx; ++xx)
                                dst[s.index(xx / 2, y / 2, z / 2)] += go[d.index(xx, y, z)];
                        }
                      });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_volume(a, "concat_channels");
  require_volume(b, "concat_channels");
  if (!(a.spatial() == b.spatial())) {
    throw ValidationError("concat_channels: spatial extents differ " +
                          shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const Dims d = a.spatial();
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.value().begin(), a.value().end());
  out.insert(out.end(), b.value().begin(), b.value().end());
  const std::size_t na = a.size();
  return make_node<T>("concat_channels", {a.channels() + b.channels(), d.nx, d.ny, d.nz},
                      std::move(out), {a, b}, [na](Node<T>& self) {
                        auto& ia = self.inputs[0];
                        auto& ib = self.inputs[1];
                        if (wants_grad(ia)) {
                          T* g = ia->grad_buffer();
                          for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
                        }
                        if (wants_grad(ib)) {
                          T* g = ib->grad_buffer();
                          const std::size_t nb = ib->value.size();
                          for (std::size_t i = 0; i < nb; ++i) g[i] += self.grad[na + i];
                        }
                      });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  require_volume(x, "softmax_channels");
  const int c = x.channels();
  const std::size_t n = x.spatial().count();
  std::vector<T> out(x.size());
  const T* in = x.value().data();
  for (std::size_t v = 0; v < n; ++v) {
    T mx = in[v];
    for (int k = 1; k < c; ++k) mx = std::max(mx, in[k * n + v]);
    T denom = 0;
    for (int k = 0; k < c; ++k) {
      const T e = std::exp(in[k * n + v] - mx);
      out[k * n + v] = e;
      denom += e;
    }
    for (int k = 0; k < c; ++k) out[k * n + v] /= denom;
  }
  return make_node<T>("softmax_channels", x.shape(), std::move(out), {x},
                      [c, n](Node<T>& self) {
                        T* gi = self.inputs[0]->grad_buffer();
                        const T* p = self.value.data();
                        const T* g = self.grad.data();
                        for (std::size_t v = 0; v < n; ++v) {
                          T dot = 0;
                          for (int k = 0; k < c; ++k) dot += p[k * n + v] * g[k * n + v];
                          for (int k = 0; k < c; ++k) {
                            gi[k * n + v] += p[k * n + v] * (g[k * n + v] - dot);
                          }
                        }
                      });
}

template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_mean");
  const std::size_t n = a.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return make_node<T>("l1_mean", {1}, {acc / static_cast<T>(n)}, {a, b}, [n](Node<T>& self) {
    auto& ia = self.inputs[0];
    auto& ib = self.inputs[1];
    const T g = self.grad[0] / static_cast<T>(n);
    T* ga = wants_grad(ia) ? ia->grad_buffer() : nullptr;
    T* gb = wants_grad(ib) ? ib->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = ia->value[i] - ib->value[i];
      const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (ga) ga[i] += s;
      if (gb) gb[i] -= s;
    }
  });
}

template <typename T>
Tensor<T> abs_mean(const Tensor<T>& a) {
  const std::size_t n = a.size();
  T acc = 0;
  for (T v : a.value()) acc += std::abs(v);
  return make_node<T>("abs_mean", {1}, {acc / static_cast<T>(n)}, {a}, [n](Node<T>& self) {
    auto& ia = self.inputs[0];
    const T g = self.grad[0] / static_cast<T>(n);
    T* ga = ia->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const T v = ia->value[i];
      ga[i] += v > T(0) ? g : (v < T(0) ? -g : T(0));
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!wants_grad(in)) continue;
      T* g = in->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_node<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& ia = self.inputs[0];
    auto& ib = self.inputs[1];
    if (wants_grad(ia)) {
      T* g = ia->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(ib)) {
      T* g = ib->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& ia = self.inputs[0];
    auto& ib = self.inputs[1];
    if (wants_grad(ia)) {
      T* g = ia->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ib->value[i];
    }
    if (wants_grad(ib)) {
      T* g = ib->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ia->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.value());
  for (T& v : out) v *= s;
  return make_node<T>("scale", a.shape(), std::move(out), {a}, [s](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.value()) acc += v;
  return make_node<T>("sum", {1}, {acc}, {a}, [](Node<T>& self) {
    auto& in = self.inputs[0];
    T* g = in->grad_buffer();
    for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> spatial_diff(const Tensor<T>& x, int axis) {
  require_volume(x, "spatial_diff");
  if (axis < 0 || axis > 2) throw ValidationError("spatial_diff: axis must be 0, 1 or 2");
  const Dims d = x.spatial();
  const int c = x.channels();
  const int n_axis = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
  const std::size_t stride =
      axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(d.nx)
                                 : static_cast<std::size_t>(d.nx) * d.ny);
  const std::size_t n = d.count();
  // For voxel i, the difference is v[hi] - v[lo].
  auto pair_of = [=](int coord, std::size_t i) -> std::pair<std::size_t, std::size_t> {
    if (coord < n_axis - 1) return {i + stride, i};
    return {i, i - stride};
  };
  std::vector<T> out(x.size(), T(0));
  if (n_axis > 1) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.value().data() + ch * n;
      T* dst = out.data() + ch * n;
      for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
          for (int xx = 0; xx < d.nx; ++xx) {
            const std::size_t i = d.index(xx, y, z);
            const int coord = axis == 0 ? xx : (axis == 1 ? y : z);
            const auto [hi, lo] = pair_of(coord, i);
            dst[i] = src[hi] - src[lo];
          }
    }
  }
  return make_node<T>("spatial_diff", x.shape(), std::move(out), {x},
                      [=](Node<T>& self) {
                        if (n_axis <= 1) return;
                        T* gi = self.inputs[0]->grad_buffer();
                        for (int ch = 0; ch < c; ++ch) {
                          const T* go = self.grad.data() + ch * n;
                          T* dst = gi + ch * n;
                          for (int z = 0; z < d.nz; ++z)
                            for (int y = 0; y < d.ny; ++y)
                              for (int xx = 0; xx < d.nx; ++xx) {
                                const std::size_t i = d.index(xx, y, z);
                                const int coord = axis == 0 ? xx : (axis == 1 ? y : z);
                                const auto [hi, lo] = pair_of(coord, i);
                                dst[hi] += go[i];
                                dst[lo] -= go[i];
                              }
                        }
                      });
}

template <typename T>
Tensor<T> warp(const Tensor<T>& image, const Tensor<T>& field) {
  require_volume(image, "warp");
  require_volume(field, "warp");
  if (field.channels() != 3) throw ValidationError("warp: field must have 3 channels");
  if (!(image.spatial() == field.spatial())) {
    throw ValidationError("warp: image " + shape_string(image.shape()) + " and field " +
                          shape_string(field.shape()) + " extents differ");
  }
  const Dims d = image.spatial();
  const int c = image.channels();
  const std::size_t n = d.count();
  std::vector<T> out(image.size());
  const T* u = field.value().data();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const TrilinearCell<T> cell(d, x + u[i], y + u[n + i], z + u[2 * n + i]);
        for (int ch = 0; ch < c; ++ch) {
          out[ch * n + i] = cell.sample(image.value().data() + ch * n, d);
        }
      }
  return make_node<T>(
      "warp", image.shape(), std::move(out), {image, field}, [d, c, n](Node<T>& self) {
        auto& img = self.inputs[0];
        auto& fld = self.inputs[1];
        const T* uu = fld->value.data();
        T* gimg = wants_grad(img) ? img->grad_buffer() : nullptr;
        T* gfld = wants_grad(fld) ? fld->grad_buffer() : nullptr;
        for (int z = 0; z < d.nz; ++z)
          for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
              const std::size_t i = d.index(x, y, z);
              const TrilinearCell<T> cell(d, x + uu[i], y + uu[n + i], z + uu[2 * n + i]);
              for (int ch = 0; ch < c; ++ch) {
                const T g = self.grad[ch * n + i];
                if (g == T(0)) continue;
                if (gimg) cell.scatter(gimg + ch * n, d, g);
                if (gfld) {
                  T dc[3];
                  cell.coordinate_gradient(img->value.data() + ch * n, d, dc);
                  gfld[i] += g * dc[0];
                  gfld[n + i] += g * dc[1];
                  gfld[2 * n + i] += g * dc[2];
                }
              }
            }
      });
}

#define CARDIOSEQ_INSTANTIATE(T)                                                          \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                               int);                                                      \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                  \
  template Tensor<T> upsample_nearest2x<T>(const Tensor<T>&);                             \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);                               \
  template Tensor<T> l1_mean<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> abs_mean<T>(const Tensor<T>&);                                       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                            \
  template Tensor<T> spatial_diff<T>(const Tensor<T>&, int);                              \
  template Tensor<T> warp<T>(const Tensor<T>&, const Tensor<T>&);

CARDIOSEQ_INSTANTIATE(float)
CARDIOSEQ_INSTANTIATE(double)
#undef CARDIOSEQ_INSTANTIATE

}  // namespace cardioseq::ad
