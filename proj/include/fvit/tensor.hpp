/*
 * Copyright 2026 The fractal-vit-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fvit {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  /// Leading dimension for rank-2 tensors, 1 for vectors.
  std::size_t rows() const { return rank() >= 2 ? shape_[0] : 1; }
  /// Last dimension.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  void ensure_grad();
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Wengert list for reverse-mode differentiation. Parameters are registered
/// by reference and must outlive the tape; backward() accumulates into their
/// grad buffers. One tape per thread.
class Tape {
 public:
  /// Receives the node's own value and adjoint; adds into its inputs' adjoints.
  using Pullback = std::function<void(Tape&, const Tensor& out, std::span<const double> out_adj)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor& param);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records an op result. `inputs` decide whether the pullback is kept.
  Var record(Tensor value, std::initializer_list<Var> inputs, Pullback pullback);
  Var record(Tensor value, std::span<const Var> inputs, Pullback pullback);

  /// Adjoint buffer of `v`, allocated on first use during backward.
  std::span<double> adjoint(Var v);

  /// Seeds d loss / d loss = 1 and replays every recorded op in reverse.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Pullback pullback;
    Tensor* param = nullptr;
    bool needs_grad = false;
    std::vector<double> adj;
  };
  std::vector<Node> nodes_;
};

// Differentiable primitives. All tensors are rank 1 or 2; "matrix" ops
// require rank 2.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// x[n x m] + b[m] broadcast over rows.
Var add_rowwise(Var x, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x · Wᵀ + b, with W [out x in] and b [out].
Var linear(Var x, Var weight, Var bias);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Stacks `count` copies of a single-row tensor.
Var repeat_rows(Var row, std::size_t count);
/// [total x d] tensor whose row targets[i] is rows[i]; all other rows zero.
Var embed_rows(Var rows, std::span<const std::size_t> targets, std::size_t total);
Var sum(Var x);
Var gelu(Var x);
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-6);

/// Row-wise softmax over the entries `allowed` marks nonzero, after adding
/// `bias` when given. Excluded entries come out as exactly 0.
/// `allowed` and `bias` are row-major with the logits' shape.
Var masked_softmax(Var logits, std::span<const std::uint8_t> allowed,
                   std::span<const double> bias = {});

/// Softmax cross-entropy of one logits row against a class index.
Var softmax_cross_entropy(Var logits, std::size_t label);

double gelu_value(double x);

}  // namespace fvit
