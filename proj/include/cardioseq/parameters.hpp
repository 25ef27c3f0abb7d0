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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cardioseq/tensor.hpp"

namespace cardioseq::ad {

// Named learnable leaves, kept in insertion order so that iteration (and
// therefore initialization and serialization) is deterministic.
template <typename T>
class ParameterSet {
 public:
  // Throws ValidationError on a duplicate name.
  Tensor<T>& add(std::string name, Tensor<T> tensor);
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  // Deep copy into another precision; copies carry requires_grad = true.
  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : entries_) {
      out.add(name, Tensor<U>::leaf(t.shape(),
                                    std::vector<U>(t.value().begin(), t.value().end()), true));
    }
    return out;
  }
  // Frozen deep copy (requires_grad = false).
  ParameterSet frozen() const;

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

// FNV-1a over names, shapes and raw value bytes; used to prove a parameter set
// was not modified.
template <typename T>
std::uint64_t fingerprint(const ParameterSet<T>& params);

}  // namespace cardioseq::ad
