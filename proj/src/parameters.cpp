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

#include "cardioseq/parameters.hpp"

#include <algorithm>
#include <cstring>

#include "cardioseq/error.hpp"

namespace cardioseq::ad {

template <typename T>
Tensor<T>& ParameterSet<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw ValidationError("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValidationError("unknown parameter: " + name);
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValidationError("unknown parameter: " + name);
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
ParameterSet<T> ParameterSet<T>::frozen() const {
  ParameterSet<T> out;
  for (const auto& [name, t] : entries_) {
    out.add(name, Tensor<T>::leaf(t.shape(), t.value(), false));
  }
  return out;
}

template <typename T>
std::uint64_t fingerprint(const ParameterSet<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t.shape().data(), t.shape().size() * sizeof(int));
    mix(t.value().data(), t.value().size() * sizeof(T));
  }
  return h;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template std::uint64_t fingerprint<float>(const ParameterSet<float>&);
template std::uint64_t fingerprint<double>(const ParameterSet<double>&);

}  // namespace cardioseq::ad
