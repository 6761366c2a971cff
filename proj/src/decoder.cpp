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

#include "jmla/decoder.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace jmla {

void DecoderConfig::validate() const {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("decoder: width must be divisible by heads");
  }
  if (vocab < 2) throw std::invalid_argument("decoder: vocab must be at least 2");
  if (max_len == 0) throw std::invalid_argument("decoder: max_len must be positive");
}

std::string to_string(TopologyVariant v) {
  switch (v) {
    case TopologyVariant::Baseline: return "Baseline";
    case TopologyVariant::DenseDec: return "DenseDec";
    case TopologyVariant::DenseEncDec: return "DenseEncDec";
  }
  return "?";
}

TopologyVariant parse_topology_variant(const std::string& name) {
  if (name == "Baseline") return TopologyVariant::Baseline;
  if (name == "DenseDec") return TopologyVariant::DenseDec;
  if (name == "DenseEncDec") return TopologyVariant::DenseEncDec;
  throw std::invalid_argument("unknown topology variant '" + name + "'");
}

std::string InjectionTopology::describe() const {
  std::ostringstream os;
  os << to_string(variant);
  for (const InjectionSite& s : sites) {
    os << ' ' << s.encoder_layer << ':' << s.resampler << ':' << s.decoder_layer;
  }
  return os.str();
}

InjectionTopology InjectionTopology::parse(const std::string& text) {
  std::istringstream is(text);
  std::string name;
  is >> name;
  InjectionTopology t;
  t.variant = parse_topology_variant(name);
  std::string triple;
  while (is >> triple) {
    InjectionSite s;
    char c1 = 0, c2 = 0;
    std::istringstream ts(triple);
    if (!(ts >> s.encoder_layer >> c1 >> s.resampler >> c2 >> s.decoder_layer) || c1 != ':' ||
        c2 != ':') {
      throw std::invalid_argument("malformed topology site '" + triple + "'");
    }
    t.sites.push_back(s);
  }
  return t;
}

InjectionTopology build_topology(TopologyVariant variant, std::size_t encoder_layers,
                                 std::size_t decoder_layers) {
  if (encoder_layers == 0 || decoder_layers == 0) {
    throw std::invalid_argument("build_topology: encoder and decoder need at least one layer");
  }
  InjectionTopology t;
  t.variant = variant;
  switch (variant) {
    case TopologyVariant::Baseline:
      t.sites.push_back({encoder_layers, 0, 1});
      break;
    case TopologyVariant::DenseDec:
      for (std::size_t i = 1; i <= decoder_layers; ++i) t.sites.push_back({encoder_layers, i - 1, i});
      break;
    case TopologyVariant::DenseEncDec:
      if (encoder_layers < decoder_layers) {
        throw std::invalid_argument("build_topology: DenseEncDec needs at least as many encoder "
                                    "layers (" + std::to_string(encoder_layers) +
                                    ") as decoder layers (" + std::to_string(decoder_layers) + ")");
      }
      for (std::size_t i = 1; i <= decoder_layers; ++i) {
        const std::size_t tap = (i * encoder_layers + decoder_layers - 1) / decoder_layers;
        t.sites.push_back({tap, i - 1, i});
      }
      break;
  }
  return t;
}

void CrossBlock::collect(const std::string& prefix, NamedParams& out) const {
  norm.collect(prefix + ".norm", out);
  attn.collect(prefix + ".attn", out);
  out.emplace_back(prefix + ".gate", gate);
}

FusionDecoder make_decoder(const DecoderConfig& config, Rng& rng) {
  config.validate();
  FusionDecoder d;
  d.config = config;
  std::vector<double> tok(config.vocab * config.width), pos(config.max_len * config.width);
  for (double& v : tok) v = rng.normal(0.0, 1.0);
  for (double& v : pos) v = rng.normal(0.0, 0.1);
  d.token_embedding = Tensor::matrix(config.vocab, config.width, std::move(tok));
  d.position_embedding = Tensor::matrix(config.max_len, config.width, std::move(pos));
  for (std::size_t i = 0; i < config.layers; ++i) {
    d.layers.push_back(
        make_transformer_block(config.width, config.heads, config.mlp_ratio, true, rng));
  }
  d.final_norm = make_layer_norm(config.width);
  d.head = make_linear(config.width, config.vocab, rng, false);
  return d;
}

FusionDecoder attach_cross_attention(const FusionDecoder& core, const InjectionTopology& topology,
                                     Rng& rng) {
  FusionDecoder d = core;
  d.topology = topology;
  d.cross.clear();
  for (const InjectionSite& s : topology.sites) {
    if (s.decoder_layer == 0 || s.decoder_layer > core.config.layers) {
      throw std::invalid_argument("attach_cross_attention: site targets decoder layer " +
                                  std::to_string(s.decoder_layer) + " of " +
                                  std::to_string(core.config.layers));
    }
    CrossBlock b;
    b.norm = make_layer_norm(core.config.width);
    b.attn = make_attention(core.config.width, core.config.width, core.config.heads, rng);
    b.gate = Tensor::scalar(0.0);
    d.cross.push_back(std::move(b));
  }
  return d;
}

namespace {

Tensor embed(const FusionDecoder& d, std::span<const int> ids) {
  if (ids.empty()) throw DimensionError("decoder: empty token sequence");
  if (ids.size() > d.config.max_len) {
    throw DimensionError("decoder: sequence of " + std::to_string(ids.size()) +
                         " tokens exceeds max_len " + std::to_string(d.config.max_len));
  }
  return add(embedding(d.token_embedding, ids), slice_rows(d.position_embedding, 0, ids.size()));
}

}  // namespace

Tensor FusionDecoder::forward_text(std::span<const int> ids) const {
  Tensor x = embed(*this, ids);
  for (const TransformerBlock& layer : layers) x = layer(x);
  return head(final_norm(x));
}

Tensor FusionDecoder::forward(std::span<const int> ids, std::span<const Tensor> summaries) const {
  for (const InjectionSite& s : topology.sites) {
    if (s.resampler >= summaries.size() || !summaries[s.resampler].defined()) {
      throw std::invalid_argument("decoder: no latent summary for resampler " +
                                  std::to_string(s.resampler));
    }
  }
  Tensor x = embed(*this, ids);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < topology.sites.size(); ++i) {
      const InjectionSite& s = topology.sites[i];
      if (s.decoder_layer != l + 1) continue;
      const CrossBlock& b = cross[i];
      Tensor injected = b.attn(b.norm(x), summaries[s.resampler], false);
      x = add(x, mul_scalar(injected, jmla::tanh(b.gate)));
    }
    x = layers[l](x);
  }
  return head(final_norm(x));
}

void FusionDecoder::collect_core(NamedParams& out) const {
  out.emplace_back("decoder.token_embedding", token_embedding);
  out.emplace_back("decoder.position_embedding", position_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect("decoder.layer" + std::to_string(i), out);
  }
  final_norm.collect("decoder.final_norm", out);
  head.collect("decoder.head", out);
}

void FusionDecoder::collect_cross(NamedParams& out) const {
  for (std::size_t i = 0; i < cross.size(); ++i) {
    cross[i].collect("decoder.cross" + std::to_string(i), out);
  }
}

}  // namespace jmla
