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

// The assembled audio-language model: frozen MAE encoder, one resampler per
// injection site, and the fusion decoder. Prefix tuning trains only the
// resamplers and the gated cross blocks.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jmla/decoder.hpp"
#include "jmla/mae.hpp"
#include "jmla/resampler.hpp"

namespace jmla {

struct JmlaModel {
  MaeEncoder encoder;
  std::vector<Resampler> resamplers;
  FusionDecoder decoder;

  const InjectionTopology& topology() const { return decoder.topology; }

  // One latent summary per resampler, each from its site's encoder tap.
  std::vector<Tensor> summarize(const EncoderStack& stack, std::span<const GridCell> cells) const;
  Tensor logits(const PatchSequence& patches, std::span<const int> ids) const;

  // Every parameter, frozen and trainable, in a stable order.
  NamedParams parameters() const;
};

// Resampler widths are taken from the encoder and decoder; config supplies
// latents, depth, heads, mlp ratio and the positional switch.
JmlaModel assemble_model(const MaeEncoder& encoder, const FusionDecoder& text_decoder,
                         TopologyVariant variant, const ResamplerConfig& config, Rng& rng);

struct ParamPartition {
  NamedParams frozen;
  NamedParams trainable;
  std::size_t frozen_values = 0;
  std::size_t trainable_values = 0;
  std::size_t resamplers = 0;
  std::size_t cross_blocks = 0;
  std::size_t gates = 0;
};

// Frozen: decoder core (embeddings, self-attention, feed-forward, norms, head)
// and the MAE encoder. Trainable: resamplers, cross blocks, gates. Sets
// requires_grad accordingly.
ParamPartition partition_params(const JmlaModel& model);

}  // namespace jmla
