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

#include "jmla/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jmla/rng.hpp"

namespace jmla {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, NamedTensors params,
                                  const GradCheckOptions& options) {
  std::vector<bool> previous;
  for (auto& [name, p] : params) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tensor loss = f();
    backward(loss);
  }
  GradCheckResult result;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (auto& [name, p] : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::vector<std::size_t> entries(p.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_tensor && entries.size() > options.max_entries_per_tensor) {
      rng.shuffle(entries);
      entries.resize(options.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    auto values = p.mutable_values();
    for (std::size_t i : entries) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double up = f().item();
      values[i] = saved - options.eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_name = name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].second.zero_grad();
    params[i].second.set_requires_grad(previous[i]);
  }
  return result;
}

GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<Tensor>& params, double eps) {
  NamedTensors named;
  for (std::size_t i = 0; i < params.size(); ++i) {
    named.emplace_back("param" + std::to_string(i), params[i]);
  }
  GradCheckOptions options;
  options.eps = eps;
  return finite_diff_check(f, std::move(named), options);
}

}  // namespace jmla
