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

#include "cardioseq/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "cardioseq/error.hpp"

namespace cardioseq::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ValidationError("tensor extents must be positive: " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw ValidationError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return leaf(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

template <typename T>
std::vector<T>& Tensor<T>::mutable_value() {
  if (!is_leaf()) throw ValidationError("only leaf tensors may be mutated");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) {
    throw ValidationError("item() on non-scalar tensor " + shape_string(node_->shape));
  }
  return node_->value[0];
}

template <typename T>
Dims Tensor<T>::spatial() const {
  const Shape& s = node_->shape;
  if (s.size() != 4) throw ValidationError("expected (C,X,Y,Z) tensor, got " + shape_string(s));
  return {s[1], s[2], s[3]};
}

template <typename T>
Tensor<T> make_node(std::string op, Shape shape, std::vector<T> value,
                    std::vector<Tensor<T>> inputs,
                    std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->op = std::move(op);
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (node->value.size() != numel(node->shape)) {
    throw ValidationError(node->op + ": value count does not match shape");
  }
  for (const auto& in : inputs) {
    node->requires_grad = node->requires_grad || in.requires_grad();
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Graph<T>::Graph(const Tensor<T>& root) {
  if (!root.defined() || !root.requires_grad()) return;
  // Iterative post-order DFS; emits each node after all of its inputs.
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ValidationError("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) return;
  Graph<T> graph(loss);
  loss.node()->grad_buffer()[0] += T(1);
  const auto& order = graph.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename T>
Tensor<T> from_volume(const VolumeGrid& v, bool requires_grad) {
  const Dims& d = v.dims();
  return Tensor<T>::leaf({1, d.nx, d.ny, d.nz},
                         std::vector<T>(v.data().begin(), v.data().end()), requires_grad);
}

template <typename T>
Tensor<T> from_field(const DeformationField& f, bool requires_grad) {
  const Dims& d = f.dims();
  return Tensor<T>::leaf({3, d.nx, d.ny, d.nz},
                         std::vector<T>(f.data().begin(), f.data().end()), requires_grad);
}

template <typename T>
VolumeGrid to_volume(const Tensor<T>& t, Spacing spacing) {
  if (t.channels() != 1) throw ValidationError("to_volume expects one channel");
  return VolumeGrid(t.spatial(), spacing, std::vector<float>(t.value().begin(), t.value().end()));
}

template <typename T>
DeformationField to_field(const Tensor<T>& t, Spacing spacing) {
  if (t.channels() != 3) throw ValidationError("to_field expects three channels");
  return DeformationField(t.spatial(), spacing,
                          std::vector<float>(t.value().begin(), t.value().end()));
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad) {
  return Tensor<To>::leaf(t.shape(), std::vector<To>(t.value().begin(), t.value().end()),
                          requires_grad);
}

#define CARDIOSEQ_INSTANTIATE(T)                                                    \
  template class Tensor<T>;                                                         \
  template class Graph<T>;                                                          \
  template Tensor<T> make_node<T>(std::string, Shape, std::vector<T>,               \
                                  std::vector<Tensor<T>>, std::function<void(Node<T>&)>); \
  template void backward<T>(const Tensor<T>&);                                      \
  template Tensor<T> from_volume<T>(const VolumeGrid&, bool);                       \
  template Tensor<T> from_field<T>(const DeformationField&, bool);                  \
  template VolumeGrid to_volume<T>(const Tensor<T>&, Spacing);                      \
  template DeformationField to_field<T>(const Tensor<T>&, Spacing);

CARDIOSEQ_INSTANTIATE(float)
CARDIOSEQ_INSTANTIATE(double)
#undef CARDIOSEQ_INSTANTIATE

template Tensor<double> cast<double, float>(const Tensor<float>&, bool);
template Tensor<float> cast<float, double>(const Tensor<double>&, bool);
template Tensor<float> cast<float, float>(const Tensor<float>&, bool);
template Tensor<double> cast<double, double>(const Tensor<double>&, bool);

}  // namespace cardioseq::ad
