/*
 * Copyright 2026 The JMLA Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// Every op that consumes a tensor with requires_grad() set records a node on
// its output. backward() walks those nodes in reverse topological order. Leaf
// gradients accumulate across calls; intermediate gradients are reset at the
// start of each backward pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jmla {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

struct Node {
  const char* op = "";
  std::vector<ImplPtr> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  // 2-D accessors; throw DimensionError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access, only for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double operator()(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  // Empty span when no gradient has been allocated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Leaf copy of the values, detached from any graph.
  Tensor detach() const;
  Tensor clone() const;

  const void* id() const noexcept { return impl_.get(); }
  const detail::ImplPtr& impl() const noexcept { return impl_; }
  static Tensor from_impl(detail::ImplPtr impl);

 private:
  detail::ImplPtr impl_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// Ordered op applications reachable from a root, inputs before outputs.
class ComputationRecord {
 public:
  struct Entry {
    const char* op;
    std::vector<const void*> inputs;
    const void* output;
  };

  static ComputationRecord trace(const Tensor& root);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

void backward(const Tensor& loss);

// ---- primitive ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[m×n] + bias[n] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
// s must hold a single value.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Mean over non-ignored rows of -log softmax(logits)[t, target_t].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     int ignore_id);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
// Multi-head scaled dot-product attention over pre-projected q[Tq×D],
// k[Tk×D], v[Tk×D]. Heads split the column dimension evenly.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, bool causal);

// FNV-1a over the raw bytes of the values.
std::uint64_t checksum(const Tensor& t);

}  // namespace jmla
