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

// Parameterised building blocks shared by the audio encoder, the resampler and
// the language decoder. Weights are stored input-major: y = x * W + b.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jmla/rng.hpp"
#include "jmla/tensor.hpp"

namespace jmla {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

// Normal(0, 1/sqrt(in)) weights, zero bias.
Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

LayerNorm make_layer_norm(std::size_t width);

struct FeedForward {
  Linear up;
  Linear down;

  Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

FeedForward make_feed_forward(std::size_t width, std::size_t hidden, Rng& rng);

// Projections around the fused attention kernel. The key projection has no
// bias since softmax ignores a shift shared by all keys. Keys and values may come
// from a different sequence (and width) than the queries.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;

  Tensor operator()(const Tensor& x_query, const Tensor& x_context, bool causal) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

MultiHeadAttention make_attention(std::size_t width, std::size_t context_width,
                                  std::size_t heads, Rng& rng);

// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNorm attn_norm;
  MultiHeadAttention attn;
  LayerNorm mlp_norm;
  FeedForward mlp;
  bool causal = false;

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

TransformerBlock make_transformer_block(std::size_t width, std::size_t heads,
                                        std::size_t mlp_ratio, bool causal, Rng& rng);

// Fixed 2-D sine/cosine table over a (time, freq) grid. Half the channels
// encode the time index, half the frequency index. Returns [rows*cols × width].
Tensor sincos_2d(std::size_t grid_rows, std::size_t grid_cols, std::size_t width);
// Rows of the table above for the given row-major grid cells.
Tensor sincos_2d_at(std::span<const std::pair<std::size_t, std::size_t>> cells,
                    std::size_t width);

// Mean of single-value tensors.
Tensor average(std::span<const Tensor> scalars);

void set_requires_grad(const NamedParams& params, bool flag);
void zero_grad(const NamedParams& params);
std::size_t parameter_count(const NamedParams& params);
std::uint64_t checksum(const NamedParams& params);
std::vector<Tensor> tensors_of(const NamedParams& params);

}  // namespace jmla
