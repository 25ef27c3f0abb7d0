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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cardioseq/tensor.hpp"

namespace cardioseq::ad {

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Only inputs with requires_grad are perturbed. Limit per input, 0 = all.
  std::size_t max_elements_per_input = 0;
};

// Compares analytic gradients of a scalar function against central finite
// differences in double precision. `fn` must build a fresh graph from the
// given leaves each call.
GradcheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, const GradcheckOptions& options = {});

// sum(weights * x) with fixed weights: reduces a tensor-valued op to a scalar
// so its full Jacobian is exercised.
Tensor<double> random_projection(const Tensor<double>& x, unsigned seed);

}  // namespace cardioseq::ad
