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

#include "cardioseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cardioseq/error.hpp"
#include "cardioseq/ops.hpp"

namespace cardioseq::ad {

GradcheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, const GradcheckOptions& options) {
  for (auto& in : inputs) {
    if (!in.is_leaf()) throw ValidationError("gradcheck inputs must be leaves");
    in.zero_grad();
  }
  const Tensor<double> loss = fn(inputs);
  if (loss.size() != 1) throw ValidationError("gradcheck: function must return a scalar");
  backward(loss);

  GradcheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& in = inputs[k];
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic =
        in.has_grad() ? in.grad() : std::vector<double>(in.size(), 0.0);
    std::vector<double>& values = in.mutable_value();
    std::size_t limit = values.size();
    if (options.max_elements_per_input > 0) {
      limit = std::min(limit, options.max_elements_per_input);
    }
    for (std::size_t i = 0; i < limit; ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = fn(inputs).item();
      values[i] = saved - options.step;
      const double down = fn(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
      const double rel = abs_err / denom;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_index = i;
      }
      ++report.checked;
    }
  }
  for (auto& in : inputs) in.zero_grad();
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

Tensor<double> random_projection(const Tensor<double>& x, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(x.size());
  for (double& v : w) v = dist(rng);
  return sum(mul(x, Tensor<double>::leaf(x.shape(), std::move(w))));
}

}  // namespace cardioseq::ad
