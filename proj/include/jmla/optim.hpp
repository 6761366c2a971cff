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

// Decoupled-weight-decay Adam and global-norm gradient clipping.

#pragma once

#include <cstddef>
#include <vector>

#include "jmla/tensor.hpp"

namespace jmla {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  // Applies one update from the current gradients. Rank-1 tensors (biases,
  // norm gains, gates) are not decayed.
  void step();
  void zero_grad();

  const AdamWConfig& config() const noexcept { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps_taken() const noexcept { return t_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

  // Moment buffers, flattened in parameter order, for checkpointing.
  std::vector<double> export_state() const;
  void import_state(const std::vector<double>& state);

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace jmla
