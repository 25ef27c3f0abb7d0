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

// Reverse-mode differentiation over a small, closed operator set.
//
// A Tensor is a handle to a graph node. Nodes produced by operations keep
// their inputs alive and carry a closure that pushes the node's gradient into
// those inputs. Gradients are allocated lazily and accumulate (+=), so a node
// consumed k times receives the sum of k contributions.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cardioseq/volume.hpp"

namespace cardioseq::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor leaf(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<T>& value() const { return node_->value; }
  // Leaves only: optimizers and test harnesses mutate parameter buffers.
  std::vector<T>& mutable_value();
  const std::vector<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  const std::string& op() const { return node_->op; }
  T item() const;

  // Volume view helpers for (C, X, Y, Z) tensors.
  int channels() const { return node_->shape.at(0); }
  Dims spatial() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Creates an interior node. `requires_grad` is inherited from the inputs; the
// backward closure is dropped when no input needs a gradient.
template <typename T>
Tensor<T> make_node(std::string op, Shape shape, std::vector<T> value,
                    std::vector<Tensor<T>> inputs,
                    std::function<void(Node<T>&)> backward);

// Topologically ordered view of the gradient-carrying part of a graph.
template <typename T>
class Graph {
 public:
  explicit Graph(const Tensor<T>& root);
  const std::vector<Node<T>*>& nodes() const { return order_; }

 private:
  std::vector<Node<T>*> order_;
};

// Seeds d(loss)/d(loss) = 1 and runs every adjoint in reverse topological
// order. Throws ValidationError when `loss` is not a single scalar.
template <typename T>
void backward(const Tensor<T>& loss);

// Volume <-> tensor conversions (1 x X x Y x Z and 3 x X x Y x Z).
template <typename T>
Tensor<T> from_volume(const VolumeGrid& v, bool requires_grad = false);
template <typename T>
Tensor<T> from_field(const DeformationField& f, bool requires_grad = false);
template <typename T>
VolumeGrid to_volume(const Tensor<T>& t, Spacing spacing = {1.0, 1.0, 1.0});
template <typename T>
DeformationField to_field(const Tensor<T>& t, Spacing spacing = {1.0, 1.0, 1.0});

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad);

}  // namespace cardioseq::ad
