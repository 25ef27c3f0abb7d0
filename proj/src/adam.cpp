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

#include "cardioseq/adam.hpp"

#include <cmath>

namespace cardioseq::ad {

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    std::vector<T>& value = p.mutable_value();
    const bool has_grad = p.has_grad();
    const std::vector<T>& grad = p.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] = static_cast<T>(value[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
    p.zero_grad();
  }
}

template void adam_step<float>(ParameterSet<float>&, AdamState&);
template void adam_step<double>(ParameterSet<double>&, AdamState&);

}  // namespace cardioseq::ad
