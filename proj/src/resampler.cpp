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

#include "jmla/resampler.hpp"

#include <stdexcept>

namespace jmla {

void ResamplerConfig::validate() const {
  if (latents == 0) throw std::invalid_argument("resampler: latents must be positive");
  if (depth == 0) throw std::invalid_argument("resampler: depth must be positive");
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("resampler: width must be divisible by heads");
  }
  if (positional && input_width % 4 != 0) {
    throw std::invalid_argument("resampler: positional embedding needs input_width % 4 == 0");
  }
}

void Resampler::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".latents", latents);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    blocks[i].latent_norm.collect(p + ".latent_norm", out);
    blocks[i].media_norm.collect(p + ".media_norm", out);
    blocks[i].cross.collect(p + ".cross", out);
    blocks[i].ff_norm.collect(p + ".ff_norm", out);
    blocks[i].ff.collect(p + ".ff", out);
  }
}

Resampler make_resampler(const ResamplerConfig& config, Rng& rng) {
  config.validate();
  Resampler r;
  r.config = config;
  std::vector<double> lat(config.latents * config.width);
  for (double& v : lat) v = rng.normal(0.0, 1.0);
  r.latents = Tensor::matrix(config.latents, config.width, std::move(lat));
  for (std::size_t i = 0; i < config.depth; ++i) {
    ResamplerBlock b;
    b.latent_norm = make_layer_norm(config.width);
    b.media_norm = make_layer_norm(config.input_width);
    b.cross = make_attention(config.width, config.input_width, config.heads, rng);
    b.ff_norm = make_layer_norm(config.width);
    b.ff = make_feed_forward(config.width, config.width * config.mlp_ratio, rng);
    r.blocks.push_back(std::move(b));
  }
  return r;
}

Tensor resample(const Tensor& audio, std::span<const GridCell> cells, const Resampler& params) {
  const ResamplerConfig& cfg = params.config;
  if (audio.rank() != 2 || audio.rows() == 0 || audio.cols() != cfg.input_width) {
    throw DimensionError("resample: audio embedding " + shape_str(audio.shape()) +
                         " does not match input width " + std::to_string(cfg.input_width));
  }
  Tensor media = audio;
  if (cfg.positional) {
    if (cells.size() != audio.rows()) {
      throw DimensionError("resample: " + std::to_string(cells.size()) + " grid cells for " +
                           std::to_string(audio.rows()) + " audio rows");
    }
    std::vector<std::pair<std::size_t, std::size_t>> pos;
    for (const GridCell& c : cells) pos.emplace_back(c.time, c.freq);
    media = add(media, sincos_2d_at(pos, cfg.input_width));
  }
  Tensor x = params.latents;
  for (const ResamplerBlock& b : params.blocks) {
    x = add(x, b.cross(b.latent_norm(x), b.media_norm(media), false));
    x = add(x, b.ff(b.ff_norm(x)));
  }
  return x;
}

CrossCost count_cross_flops(const CrossCostQuery& q) {
  if (q.patches == 0 || q.latents == 0 || q.width == 0 || q.input_width == 0 || q.depth == 0) {
    throw std::invalid_argument("count_cross_flops: dimensions must be positive");
  }
  using U = std::uint64_t;
  const U p = q.patches, l = q.latents, d = q.width, de = q.input_width, t = q.text_len;
  CrossCost c;
  c.resampler_kv = q.depth * 2 * p * de * d;
  c.resampler_attention = q.depth * 2 * l * p * d;
  c.resampler_total = c.resampler_kv + c.resampler_attention + q.depth * 2 * l * d * d;
  c.decoder_cross = q.sites * (2 * t * d * d + 2 * l * d * d + 2 * t * l * d);
  const U n = p + t;
  c.naive_prefix_attention = q.decoder_layers * 2 * n * n * d;
  c.naive_prefix_total = c.naive_prefix_attention + q.decoder_layers * n * (4 * d * d + 8 * d * d);
  return c;
}

}  // namespace jmla
