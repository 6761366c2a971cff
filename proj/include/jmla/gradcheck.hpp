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

// Central-difference verification of autodiff gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jmla/tensor.hpp"

namespace jmla {

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every entry; otherwise at most this many sampled entries per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// f must rebuild the loss from the current parameter values. Parameters are
// perturbed in place and restored afterwards. Relative error per entry is
// |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, NamedTensors params,
                                  const GradCheckOptions& options = {});

GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace jmla
