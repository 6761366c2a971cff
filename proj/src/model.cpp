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

#include "jmla/model.hpp"

#include <stdexcept>
#include <string>

namespace jmla {

std::vector<Tensor> JmlaModel::summarize(const EncoderStack& stack,
                                         std::span<const GridCell> cells) const {
  std::vector<Tensor> out(resamplers.size());
  for (const InjectionSite& s : topology().sites) {
    if (s.encoder_layer >= stack.layers.size()) {
      throw std::invalid_argument("summarize: encoder tap " + std::to_string(s.encoder_layer) +
                                  " beyond stack depth " + std::to_string(stack.depth()));
    }
    out.at(s.resampler) = resample(stack.layers[s.encoder_layer], cells, resamplers[s.resampler]);
  }
  return out;
}

Tensor JmlaModel::logits(const PatchSequence& patches, std::span<const int> ids) const {
  const EncoderStack stack = encoder.encode_full(patches);
  const std::vector<Tensor> summaries = summarize(stack, patches.cells);
  return decoder.forward(ids, summaries);
}

NamedParams JmlaModel::parameters() const {
  NamedParams out;
  encoder.collect("mae.encoder", out);
  decoder.collect_core(out);
  decoder.collect_cross(out);
  for (std::size_t i = 0; i < resamplers.size(); ++i) {
    resamplers[i].collect("resampler" + std::to_string(i), out);
  }
  return out;
}

JmlaModel assemble_model(const MaeEncoder& encoder, const FusionDecoder& text_decoder,
                         TopologyVariant variant, const ResamplerConfig& config, Rng& rng) {
  JmlaModel m;
  m.encoder = encoder;
  const InjectionTopology topology =
      build_topology(variant, encoder.config.encoder_layers, text_decoder.config.layers);
  Rng cross_rng = rng.split("cross");
  m.decoder = attach_cross_attention(text_decoder, topology, cross_rng);
  ResamplerConfig rc = config;
  rc.width = text_decoder.config.width;
  rc.input_width = encoder.config.width;
  for (std::size_t i = 0; i < topology.resampler_count(); ++i) {
    Rng r = rng.split("resampler", i);
    m.resamplers.push_back(make_resampler(rc, r));
  }
  return m;
}

ParamPartition partition_params(const JmlaModel& model) {
  ParamPartition p;
  model.encoder.collect("mae.encoder", p.frozen);
  model.decoder.collect_core(p.frozen);
  model.decoder.collect_cross(p.trainable);
  for (std::size_t i = 0; i < model.resamplers.size(); ++i) {
    model.resamplers[i].collect("resampler" + std::to_string(i), p.trainable);
  }
  set_requires_grad(p.frozen, false);
  set_requires_grad(p.trainable, true);
  p.frozen_values = parameter_count(p.frozen);
  p.trainable_values = parameter_count(p.trainable);
  p.resamplers = model.resamplers.size();
  p.cross_blocks = model.decoder.cross.size();
  p.gates = model.decoder.cross.size();
  return p;
}

}  // namespace jmla
