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

// Causal language decoder with optional gated cross-attention sites.
//
// Layer l (1-based) runs, in order: every gated cross block whose site targets
// l, then causal self-attention, then the feed-forward, all pre-norm residual.
// A cross block adds tanh(gate) * CrossAttn(LN(x), h_site); gates start at 0.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jmla/nn.hpp"
#include "jmla/rng.hpp"

namespace jmla {

struct DecoderConfig {
  std::size_t layers = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t vocab = 260;
  std::size_t max_len = 320;

  void validate() const;
};

enum class TopologyVariant { Baseline, DenseDec, DenseEncDec };

std::string to_string(TopologyVariant v);
TopologyVariant parse_topology_variant(const std::string& name);

// Layers are 1-based on both sides; encoder layer 0 is the patch embedding.
struct InjectionSite {
  std::size_t encoder_layer = 0;
  std::size_t resampler = 0;
  std::size_t decoder_layer = 0;
  bool operator==(const InjectionSite&) const = default;
};

struct InjectionTopology {
  TopologyVariant variant = TopologyVariant::Baseline;
  std::vector<InjectionSite> sites;

  std::size_t resampler_count() const { return sites.size(); }
  std::string describe() const;
  static InjectionTopology parse(const std::string& text);
};

// Baseline: one site (N_e -> r0 -> 1). DenseDec: one site per decoder layer,
// all tapping N_e. DenseEncDec: one site per decoder layer, tapping encoder
// layers ceil(i * N_e / N_d), distinct and increasing (needs N_e >= N_d).
InjectionTopology build_topology(TopologyVariant variant, std::size_t encoder_layers,
                                 std::size_t decoder_layers);

struct CrossBlock {
  LayerNorm norm;
  MultiHeadAttention attn;
  Tensor gate;  // single value

  void collect(const std::string& prefix, NamedParams& out) const;
};

struct FusionDecoder {
  DecoderConfig config;
  Tensor token_embedding;     // [V x D]
  Tensor position_embedding;  // [max_len x D]
  std::vector<TransformerBlock> layers;
  LayerNorm final_norm;
  Linear head;
  InjectionTopology topology;
  std::vector<CrossBlock> cross;  // aligned with topology.sites

  // Text-only path that never touches the cross blocks.
  Tensor forward_text(std::span<const int> ids) const;
  // summaries[r] is the latent summary produced by resampler r.
  Tensor forward(std::span<const int> ids, std::span<const Tensor> summaries) const;

  void collect_core(NamedParams& out) const;
  void collect_cross(NamedParams& out) const;
};

FusionDecoder make_decoder(const DecoderConfig& config, Rng& rng);

// Adds one zero-gated cross block per site. Existing core weights are shared.
FusionDecoder attach_cross_attention(const FusionDecoder& core, const InjectionTopology& topology,
                                     Rng& rng);

}  // namespace jmla
