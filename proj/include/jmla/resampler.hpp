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

// Perceiver-style resampler: a learned latent array cross-attends into a
// variable-length audio embedding and comes out with a fixed L x D shape.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jmla/frontend.hpp"
#include "jmla/nn.hpp"
#include "jmla/rng.hpp"

namespace jmla {

struct ResamplerConfig {
  std::size_t latents = 8;
  std::size_t width = 64;        // latent / output width D
  std::size_t input_width = 64;  // audio embedding width D_enc
  std::size_t heads = 4;
  std::size_t depth = 2;
  std::size_t mlp_ratio = 4;
  // Add fixed 2-D positions to the audio embedding before projection.
  bool positional = true;

  void validate() const;
};

struct ResamplerBlock {
  LayerNorm latent_norm;
  LayerNorm media_norm;
  MultiHeadAttention cross;
  LayerNorm ff_norm;
  FeedForward ff;
};

struct Resampler {
  ResamplerConfig config;
  Tensor latents;  // [L x D], trainable
  std::vector<ResamplerBlock> blocks;

  void collect(const std::string& prefix, NamedParams& out) const;
};

Resampler make_resampler(const ResamplerConfig& config, Rng& rng);

// h = resample(e): [P x D_enc] -> [L x D]. cells must match the rows of e when
// positions are enabled and are ignored otherwise.
Tensor resample(const Tensor& audio, std::span<const GridCell> cells, const Resampler& params);

// Analytic multiply-accumulate counts for the cross-attention paths.
struct CrossCostQuery {
  std::size_t patches = 16;    // P
  std::size_t latents = 8;     // L
  std::size_t width = 64;      // D
  std::size_t input_width = 64;
  std::size_t depth = 2;       // resampler blocks
  std::size_t text_len = 16;   // decoder tokens attending to audio
  std::size_t sites = 1;       // gated cross-attention blocks in the decoder
  std::size_t decoder_layers = 4;
};

struct CrossCost {
  std::uint64_t resampler_kv = 0;         // K/V projections of the audio
  std::uint64_t resampler_attention = 0;  // latent-to-audio scores and mixing
  std::uint64_t resampler_total = 0;      // plus latent Q and output projections
  std::uint64_t decoder_cross = 0;        // text-to-latent cross-attention, all sites
  // Baseline that prepends all P audio tokens to the decoder input: score and
  // mixing cost of causal self-attention over P + T tokens, every layer.
  std::uint64_t naive_prefix_attention = 0;
  // Same baseline including the per-token projections and feed-forward.
  std::uint64_t naive_prefix_total = 0;
};

CrossCost count_cross_flops(const CrossCostQuery& query);

}  // namespace jmla
