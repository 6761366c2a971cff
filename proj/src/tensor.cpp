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

#include "jmla/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace jmla {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

thread_local bool g_grad_enabled = true;

using detail::ImplPtr;
using detail::Node;
using detail::TensorImpl;

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds an op output and, when recording, attaches its backward node.
template <typename Fn>
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, Fn&& backward_fn) {
  check_finite(values, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (g_grad_enabled && any_requires_grad(inputs)) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = op;
    for (const Tensor* t : inputs) node->inputs.push_back(t->impl());
    node->backward = std::forward<Fn>(backward_fn);
    impl->node = std::move(node);
  }
  return Tensor::from_impl(std::move(impl));
}

// Gradient sink for an input; null when it does not need one.
double* grad_sink(const ImplPtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined tensor");
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor creation");
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::from_impl(detail::ImplPtr impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw DimensionError("undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->values.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range for " + shape_str(shape()));
  return impl_->shape[axis];
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return impl_->shape[1];
}

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return impl_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) return {};
  if (impl_->node) throw std::logic_error("mutable_values on a non-leaf tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return impl_->values[r * cols() + c];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (impl_->node && !flag) throw std::logic_error("cannot clear requires_grad on a non-leaf");
  impl_->requires_grad = flag;
  if (flag) impl_->ensure_grad();
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values, false); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->values, false);
  if (impl_->requires_grad) t.set_requires_grad(true);
  return t;
}

// ---- graph ----------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

namespace {

// Non-leaf tensors reachable from root, each after all of its inputs.
std::vector<TensorImpl*> topological_order(const ImplPtr& root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> visited;
  struct Frame {
    TensorImpl* impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  if (root->node) {
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
  }
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& inputs = top.impl->node->inputs;
    if (top.next_input < inputs.size()) {
      TensorImpl* child = inputs[top.next_input++].get();
      if (child->node && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(top.impl);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

ComputationRecord ComputationRecord::trace(const Tensor& root) {
  ComputationRecord rec;
  for (TensorImpl* impl : topological_order(root.impl())) {
    Entry e;
    e.op = impl->node->op;
    e.output = impl;
    for (const auto& in : impl->node->inputs) e.inputs.push_back(in.get());
    rec.entries_.push_back(std::move(e));
  }
  return rec;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward requires a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not depend on any tensor requiring grad");
  }
  const auto& root = loss.impl();
  if (!root->node) {
    root->ensure_grad();
    root->grad[0] += 1.0;
    return;
  }
  auto order = topological_order(root);
  for (TensorImpl* impl : order) impl->grad.assign(impl->values.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->node->backward(**it);
  }
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : t.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  auto pa = a.impl(), pb = b.impl();
  return make_result("matmul", {m, n}, std::move(out), {&a, &b},
                     [pa, pb, m, k, n](const TensorImpl& o) {
                       ConstMap g(o.grad.data(), m, n);
                       if (double* ga = grad_sink(pa)) {
                         MutMap(ga, m, k).noalias() +=
                             g * ConstMap(pb->values.data(), k, n).transpose();
                       }
                       if (double* gb = grad_sink(pb)) {
                         MutMap(gb, k, n).noalias() +=
                             ConstMap(pa->values.data(), m, k).transpose() * g;
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto pa = a.impl(), pb = b.impl();
  return make_result("add", a.shape(), std::move(out), {&a, &b},
                     [pa, pb](const TensorImpl& o) {
                       for (const auto& p : {pa, pb}) {
                         if (double* g = grad_sink(p)) {
                           for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                         }
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto pa = a.impl(), pb = b.impl();
  return make_result("sub", a.shape(), std::move(out), {&a, &b},
                     [pa, pb](const TensorImpl& o) {
                       if (double* g = grad_sink(pa)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                       }
                       if (double* g = grad_sink(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto pa = a.impl(), pb = b.impl();
  return make_result("mul", a.shape(), std::move(out), {&a, &b},
                     [pa, pb](const TensorImpl& o) {
                       if (double* g = grad_sink(pa)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           g[i] += o.grad[i] * pb->values[i];
                       }
                       if (double* g = grad_sink(pb)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           g[i] += o.grad[i] * pa->values[i];
                       }
                     });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  auto px = x.impl(), pb = bias.impl();
  return make_result("add_rowwise", x.shape(), std::move(out), {&x, &bias},
                     [px, pb, m, n](const TensorImpl& o) {
                       if (double* g = grad_sink(px)) {
                         for (std::size_t i = 0; i < m * n; ++i) g[i] += o.grad[i];
                       }
                       if (double* g = grad_sink(pb)) {
                         for (std::size_t r = 0; r < m; ++r)
                           for (std::size_t c = 0; c < n; ++c) g[c] += o.grad[r * n + c];
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  auto px = x.impl();
  return make_result("scale", x.shape(), std::move(out), {&x},
                     [px, factor](const TensorImpl& o) {
                       if (double* g = grad_sink(px)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += factor * o.grad[i];
                       }
                     });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: scale must hold one value");
  const double sv = s.item();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= sv;
  auto px = x.impl(), ps = s.impl();
  return make_result("mul_scalar", x.shape(), std::move(out), {&x, &s},
                     [px, ps](const TensorImpl& o) {
                       const double sv = ps->values[0];
                       if (double* g = grad_sink(px)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += sv * o.grad[i];
                       }
                       if (double* g = grad_sink(ps)) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           acc += o.grad[i] * px->values[i];
                         g[0] += acc;
                       }
                     });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  auto px = x.impl();
  return make_result("tanh", x.shape(), std::move(out), {&x}, [px](const TensorImpl& o) {
    if (double* g = grad_sink(px)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g[i] += o.grad[i] * (1.0 - o.values[i] * o.values[i]);
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  auto px = x.impl();
  return make_result("gelu", x.shape(), std::move(out), {&x}, [px](const TensorImpl& o) {
    if (double* g = grad_sink(px)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double v = px->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        g[i] += o.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor abs(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(xv[i]);
  auto px = x.impl();
  return make_result("abs", x.shape(), std::move(out), {&x}, [px](const TensorImpl& o) {
    if (double* g = grad_sink(px)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double v = px->values[i];
        g[i] += o.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
      }
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  auto px = x.impl();
  return make_result("softmax", s, std::move(out), {&x},
                     [px, outer, inner, n](const TensorImpl& o) {
                       double* g = grad_sink(px);
                       if (!g) return;
                       for (std::size_t a = 0; a < outer; ++a) {
                         for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t base = a * n * inner + in;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                             dot += o.grad[base + j * inner] * o.values[base + j * inner];
                           for (std::size_t j = 0; j < n; ++j) {
                             const std::size_t idx = base + j * inner;
                             g[idx] += o.values[idx] * (o.grad[idx] - dot);
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: rank-0 input");
  const std::size_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias of size " + std::to_string(gain.size()) +
                         "/" + std::to_string(bias.size()) + " vs last dim " +
                         std::to_string(n));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t m = x.size() / n;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mu) * is;
      (*xhat)[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  auto px = x.impl(), pg = gain.impl(), pb = bias.impl();
  return make_result(
      "layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
      [px, pg, pb, xhat, inv_std, m, n](const TensorImpl& o) {
        double* gx = grad_sink(px);
        double* gg = grad_sink(pg);
        double* gb = grad_sink(pb);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < m; ++r) {
          const double* go = o.grad.data() + r * n;
          const double* h = xhat->data() + r * n;
          if (gg)
            for (std::size_t c = 0; c < n; ++c) gg[c] += go[c] * h[c];
          if (gb)
            for (std::size_t c = 0; c < n; ++c) gb[c] += go[c];
          if (!gx) continue;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = go[c] * pg->values[c];
            s1 += dxhat[c];
            s2 += dxhat[c] * h[c];
          }
          const double k = (*inv_std)[r] / static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            gx[r * n + c] += k * (static_cast<double>(n) * dxhat[c] - s1 - h[c] * s2);
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = lv.data() + t * v;
    double mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[t * v + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < v; ++j) (*probs)[t * v + j] /= z;
    if (tgt[t] == ignore_id) continue;
    if (tgt[t] < 0 || static_cast<std::size_t>(tgt[t]) >= v) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(tgt[t]) +
                              " outside vocabulary of " + std::to_string(v));
    }
    total += -(row[tgt[t]] - mx - std::log(z));
    ++count;
  }
  if (count == 0) throw std::domain_error("cross_entropy: every position is ignored");
  const double inv = 1.0 / static_cast<double>(count);
  auto pl = logits.impl();
  return make_result("cross_entropy", {1}, {total * inv}, {&logits},
                     [pl, probs, tgt = std::move(tgt), ignore_id, t_len, v,
                      inv](const TensorImpl& o) {
                       double* g = grad_sink(pl);
                       if (!g) return;
                       const double go = o.grad[0] * inv;
                       for (std::size_t t = 0; t < t_len; ++t) {
                         if (tgt[t] == ignore_id) continue;
                         for (std::size_t j = 0; j < v; ++j) g[t * v + j] += go * (*probs)[t * v + j];
                         g[t * v + static_cast<std::size_t>(tgt[t])] -= go;
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  auto px = x.impl();
  return make_result("sum", {1}, {total}, {&x}, [px](const TensorImpl& o) {
    if (double* g = grad_sink(px)) {
      for (std::size_t i = 0; i < px->values.size(); ++i) g[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(idx[i]) +
                              " outside table of " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  auto pt = table.impl();
  const std::size_t n = idx.size();
  return make_result("embedding", {n, d}, std::move(out), {&table},
                     [pt, idx = std::move(idx), d](const TensorImpl& o) {
                       double* g = grad_sink(pt);
                       if (!g) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = g + static_cast<std::size_t>(idx[i]) * d;
                         for (std::size_t c = 0; c < d; ++c) dst[c] += o.grad[i * d + c];
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_rank(x, 2, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * n);
  auto xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) {
      throw std::out_of_range("gather_rows: row " + std::to_string(idx[i]) + " of " +
                              std::to_string(m));
    }
    std::copy_n(xv.data() + idx[i] * n, n, out.data() + i * n);
  }
  auto px = x.impl();
  const std::size_t k = idx.size();
  return make_result("gather_rows", {k, n}, std::move(out), {&x},
                     [px, idx = std::move(idx), n](const TensorImpl& o) {
                       double* g = grad_sink(px);
                       if (!g) return;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t c = 0; c < n; ++c) g[idx[i] * n + c] += o.grad[i * n + c];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (begin + count > x.rows()) {
    throw std::out_of_range("slice_rows: rows [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") of " + shape_str(x.shape()));
  }
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(x, idx);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

  check_finite(out, "concat_rows");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = {m, n};
  impl->values = std::move(out);
  bool needs = false;
  for (const Tensor& p : parts) needs = needs || p.requires_grad();
  if (g_grad_enabled && needs) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = "concat_rows";
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    node->inputs = ins;
    node->backward = [ins](const TensorImpl& o) {
      std::size_t offset = 0;
      for (const auto& p : ins) {
        const std::size_t len = p->values.size();
        if (double* g = grad_sink(p)) {
          for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
        }
        offset += len;
      }
    };
    impl->node = std::move(node);
  }
  return Tensor::from_impl(std::move(impl));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 bool causal) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t tq = q.rows(), tk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != tk) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (causal && tq != tk) throw DimensionError("attention: causal mask needs square scores");
  const std::size_t dh = d / heads;
  const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<double>>(heads * tq * tk);
  std::vector<double> out(tq * d);
  RowMat scores(tq, tk);
  for (std::size_t h = 0; h < heads; ++h) {
    ConstStrided qh(q.values().data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
    ConstStrided kh(k.values().data() + h * dh, tk, dh, Eigen::OuterStride<>(d));
    ConstStrided vh(v.values().data() + h * dh, tk, dh, Eigen::OuterStride<>(d));
    scores.noalias() = qh * kh.transpose();
    MutMap p(probs->data() + h * tq * tk, tq, tk);
    for (std::size_t i = 0; i < tq; ++i) {
      const std::size_t visible = causal ? i + 1 : tk;
      double mx = scores(i, 0) * scale_f;
      for (std::size_t j = 1; j < visible; ++j) mx = std::max(mx, scores(i, j) * scale_f);
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        const double e = std::exp(scores(i, j) * scale_f - mx);
        p(i, j) = e;
        z += e;
      }
      for (std::size_t j = 0; j < visible; ++j) p(i, j) /= z;
      for (std::size_t j = visible; j < tk; ++j) p(i, j) = 0.0;
    }
    MutStrided oh(out.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
    oh.noalias() = p * vh;
  }

  auto pq = q.impl(), pk = k.impl(), pv = v.impl();
  return make_result(
      "attention", {tq, d}, std::move(out), {&q, &k, &v},
      [pq, pk, pv, probs, heads, tq, tk, d, dh, scale_f](const TensorImpl& o) {
        double* gq = grad_sink(pq);
        double* gk = grad_sink(pk);
        double* gv = grad_sink(pv);
        if (!gq && !gk && !gv) return;
        RowMat dp(tq, tk), ds(tq, tk);
        for (std::size_t h = 0; h < heads; ++h) {
          ConstStrided go(o.grad.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
          ConstStrided qh(pq->values.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
          ConstStrided kh(pk->values.data() + h * dh, tk, dh, Eigen::OuterStride<>(d));
          ConstStrided vh(pv->values.data() + h * dh, tk, dh, Eigen::OuterStride<>(d));
          ConstMap p(probs->data() + h * tq * tk, tq, tk);
          if (gv) {
            MutStrided(gv + h * dh, tk, dh, Eigen::OuterStride<>(d)).noalias() +=
                p.transpose() * go;
          }
          if (!gq && !gk) continue;
          dp.noalias() = go * vh.transpose();
          for (std::size_t i = 0; i < tq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < tk; ++j) dot += dp(i, j) * p(i, j);
            for (std::size_t j = 0; j < tk; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale_f;
          }
          if (gq) {
            MutStrided(gq + h * dh, tq, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
          }
          if (gk) {
            MutStrided(gk + h * dh, tk, dh, Eigen::OuterStride<>(d)).noalias() +=
                ds.transpose() * qh;
          }
        }
      });
}

}  // namespace jmla
