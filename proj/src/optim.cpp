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

#include "jmla/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace jmla {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto g = p.grad();
    if (g.empty()) continue;
    auto w = p.mutable_values();
    const double decay = p.rank() >= 2 ? config_.weight_decay : 0.0;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + decay * w[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

std::vector<double> AdamW::export_state() const {
  std::vector<double> out;
  out.push_back(static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.insert(out.end(), m_[i].begin(), m_[i].end());
    out.insert(out.end(), v_[i].begin(), v_[i].end());
  }
  return out;
}

void AdamW::import_state(const std::vector<double>& state) {
  std::size_t expected = 1;
  for (const auto& m : m_) expected += 2 * m.size();
  if (state.size() != expected) throw std::invalid_argument("optimizer state size mismatch");
  t_ = static_cast<std::size_t>(state[0]);
  std::size_t pos = 1;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double& x : m_[i]) x = state[pos++];
    for (double& x : v_[i]) x = state[pos++];
  }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor p : params)
      for (double& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

}  // namespace jmla
