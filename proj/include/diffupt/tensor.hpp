// Copyright 2026 The DiffuPT Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffupt::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Operand shapes are incompatible for the requested op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value became NaN/Inf, or an autodiff precondition was violated.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::function<void(Node&)> backward_fn;

  void accumulate(std::span<const double> g);
  std::vector<double>& grad_buffer();
};

/// Dense row-major array of 64-bit reals with an optional gradient.
///
/// A Tensor is a handle: copies share storage. Use clone() for a deep copy.
/// Ops on tensors that require gradients are recorded on the calling thread's
/// tape; backward() replays that tape in reverse and clears it.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  bool empty() const { return node_->data.empty(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Deep copy of values; the copy is a fresh leaf.
  Tensor clone() const;
  /// Same values, detached from the graph (shares nothing).
  Tensor detach() const { return clone().set_requires_grad(false); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();
std::size_t tape_size();
/// Drops every recorded op without computing gradients.
void clear_tape();

/// Reverse-mode sweep from a scalar loss. Populates grad on every
/// requires_grad leaf that the loss depends on, then clears the tape.
void backward(const Tensor& loss);

// ---- forward ops -----------------------------------------------------------
//
// Elementwise binaries accept equal shapes, or a right operand whose shape
// equals the left operand's shape without its leading (batch) dimension.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// (N, C, H, W) -> (N, C), averaging over the spatial axes.
Tensor mean_spatial(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates along `axis`; all other dimensions must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Selects rows `indices` of a 2-D table: (V, D) -> (len(indices), D).
Tensor embedding(const Tensor& table, std::span<const std::size_t> indices);
/// Selects the given entries along the leading axis.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

/// (m, k) x (k, n) -> (m, n)
Tensor matmul(const Tensor& a, const Tensor& b);
/// x (N, in) * weight(out, in)^T + bias(out) -> (N, out). Bias may be empty.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};
/// x (N, C, H, W), weight (O, C, kh, kw), bias (O) or empty -> (N, O, Ho, Wo)
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opts = {});
/// Non-overlapping average pooling with a square window.
Tensor avg_pool2d(const Tensor& x, std::size_t window);
/// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest2d(const Tensor& x, std::size_t factor);
/// x (N, C, H, W) + v (N, C) broadcast over H, W.
Tensor add_channel(const Tensor& x, const Tensor& v);

/// Mean over the batch of w_i * BCE(sigmoid(logit_i), y_i), computed from
/// logits with the log-sum-exp form. `weights` may be empty (all ones).
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels,
                       std::span<const double> weights);

}  // namespace diffupt::num
