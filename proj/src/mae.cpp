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

#include "jmla/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace jmla {

void MaeConfig::validate() const {
  if (encoder_layers == 0) throw std::invalid_argument("mae: encoder_layers must be positive");
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("mae: width must be divisible by heads");
  }
  if (decoder_heads == 0 || decoder_width % decoder_heads != 0) {
    throw std::invalid_argument("mae: decoder_width must be divisible by decoder_heads");
  }
  if (width % 4 != 0 || decoder_width % 4 != 0) {
    throw std::invalid_argument("mae: widths must be multiples of 4 for 2-D positions");
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw std::invalid_argument("mae: mask_ratio must lie in (0, 1)");
  }
}

MaskSplit random_mask(std::size_t patch_count, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("random_mask: ratio must lie in (0, 1)");
  const auto n_masked = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(patch_count)));
  if (patch_count < 2 || n_masked == 0 || n_masked >= patch_count) {
    throw std::invalid_argument("random_mask: " + std::to_string(patch_count) +
                                " patches cannot be split at ratio " + std::to_string(ratio));
  }
  std::vector<std::size_t> order(patch_count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  MaskSplit split;
  split.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_masked));
  split.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(n_masked), order.end());
  std::sort(split.masked.begin(), split.masked.end());
  std::sort(split.kept.begin(), split.kept.end());
  return split;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> to_pairs(std::span<const GridCell> cells) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(cells.size());
  for (const GridCell& c : cells) out.emplace_back(c.time, c.freq);
  return out;
}

}  // namespace

Tensor MaeEncoder::embed(const Tensor& patch_values, std::span<const GridCell> cells) const {
  const double inv = 1.0 / input_std;
  Tensor x = add(scale(patch_values, inv), Tensor::full(patch_values.shape(), -input_mean * inv));
  return add(patch_embed(x), sincos_2d_at(to_pairs(cells), config.width));
}

Tensor MaeEncoder::encode(const Tensor& patch_values, std::span<const GridCell> cells) const {
  Tensor h = embed(patch_values, cells);
  for (const TransformerBlock& b : blocks) h = b(h);
  return norm(h);
}

EncoderStack MaeEncoder::encode_full(const PatchSequence& patches) const {
  EncoderStack stack;
  Tensor h = embed(patches.values, patches.cells);
  stack.layers.push_back(norm(h));
  for (const TransformerBlock& b : blocks) {
    h = b(h);
    stack.layers.push_back(norm(h));
  }
  return stack;
}

void MaeEncoder::collect(const std::string& prefix, NamedParams& out) const {
  patch_embed.collect(prefix + ".patch_embed", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(prefix + ".block" + std::to_string(i), out);
  }
  norm.collect(prefix + ".norm", out);
}

void MaeModel::collect(NamedParams& out) const {
  encoder.collect("mae.encoder", out);
  decoder_embed.collect("mae.decoder.embed", out);
  out.emplace_back("mae.decoder.mask_token", mask_token);
  for (std::size_t i = 0; i < decoder_blocks.size(); ++i) {
    decoder_blocks[i].collect("mae.decoder.block" + std::to_string(i), out);
  }
  decoder_norm.collect("mae.decoder.norm", out);
  decoder_pred.collect("mae.decoder.pred", out);
}

MaeModel make_mae(const MaeConfig& config, Rng& rng) {
  config.validate();
  Rng enc_rng = rng.split("mae.encoder");
  Rng dec_rng = rng.split("mae.decoder");
  MaeModel m;
  m.encoder.config = config;
  m.encoder.patch_embed = make_linear(kPatchValues, config.width, enc_rng);
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    m.encoder.blocks.push_back(
        make_transformer_block(config.width, config.heads, config.mlp_ratio, false, enc_rng));
  }
  m.encoder.norm = make_layer_norm(config.width);
  m.decoder_embed = make_linear(config.width, config.decoder_width, dec_rng);
  std::vector<double> token(config.decoder_width);
  for (double& v : token) v = dec_rng.normal(0.0, 0.02);
  m.mask_token = Tensor::matrix(1, config.decoder_width, std::move(token));
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    m.decoder_blocks.push_back(make_transformer_block(config.decoder_width, config.decoder_heads,
                                                      config.mlp_ratio, false, dec_rng));
  }
  m.decoder_norm = make_layer_norm(config.decoder_width);
  m.decoder_pred = make_linear(config.decoder_width, kPatchValues, dec_rng);
  return m;
}

Tensor mae_forward(const PatchSequence& patches, const MaskSplit& mask, const MaeModel& model) {
  const std::size_t p_count = patches.count();
  if (mask.kept.size() + mask.masked.size() != p_count || mask.kept.empty()) {
    throw DimensionError("mae_forward: mask does not partition " + std::to_string(p_count) +
                         " patches");
  }
  std::vector<GridCell> kept_cells;
  for (std::size_t i : mask.kept) kept_cells.push_back(patches.cells.at(i));
  Tensor encoded = model.encoder.encode(gather_rows(patches.values, mask.kept), kept_cells);
  Tensor kept_dec = model.decoder_embed(encoded);

  // Row r of the decoder input is the kept patch or mask token placed there.
  std::vector<std::size_t> source(p_count);
  for (std::size_t i = 0; i < mask.kept.size(); ++i) source[mask.kept[i]] = i;
  for (std::size_t i = 0; i < mask.masked.size(); ++i) {
    source[mask.masked[i]] = mask.kept.size() + i;
  }
  Tensor tokens = kept_dec;
  if (!mask.masked.empty()) {
    std::vector<std::size_t> repeat(mask.masked.size(), 0);
    const Tensor parts[] = {kept_dec, gather_rows(model.mask_token, repeat)};
    tokens = concat_rows(parts);
  }
  Tensor h = gather_rows(tokens, source);
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (const GridCell& c : patches.cells) cells.emplace_back(c.time, c.freq);
  h = add(h, sincos_2d_at(cells, model.encoder.config.decoder_width));
  for (const TransformerBlock& b : model.decoder_blocks) h = b(h);
  return model.decoder_pred(model.decoder_norm(h));
}

Tensor mae_loss(const Tensor& predicted, const PatchSequence& target,
                std::span<const std::size_t> masked, bool normalize_targets) {
  if (masked.empty()) throw std::invalid_argument("mae_loss: no masked patches");
  if (predicted.shape() != target.values.shape()) {
    throw DimensionError("mae_loss: predicted " + shape_str(predicted.shape()) + " vs target " +
                         shape_str(target.values.shape()));
  }
  auto tv = target.values.values();
  std::vector<double> goal(masked.size() * kPatchValues);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    const double* src = tv.data() + masked[i] * kPatchValues;
    double* dst = goal.data() + i * kPatchValues;
    std::copy_n(src, kPatchValues, dst);
    if (!normalize_targets) continue;
    double mu = 0.0;
    for (std::size_t j = 0; j < kPatchValues; ++j) mu += src[j];
    mu /= static_cast<double>(kPatchValues);
    double var = 0.0;
    for (std::size_t j = 0; j < kPatchValues; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= static_cast<double>(kPatchValues);
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    for (std::size_t j = 0; j < kPatchValues; ++j) dst[j] = (src[j] - mu) * inv;
  }
  Tensor goal_t = Tensor::matrix(masked.size(), kPatchValues, std::move(goal));
  return mean(abs(sub(gather_rows(predicted, masked), goal_t)));
}

MaeTrainResult pretrain_mae(const std::vector<PatchSequence>& dataset, const MaeConfig& config,
                            const MaeTrainConfig& train, const MaeLogFn& log) {
  if (dataset.empty()) throw std::invalid_argument("pretrain_mae: empty dataset");
  Rng root(train.seed);
  Rng init_rng = root.split("init");
  Rng data_rng = root.split("batches");
  Rng mask_rng = root.split("masks");
  MaeModel model = make_mae(config, init_rng);
  double sum = 0.0, sq = 0.0, count = 0.0;
  for (const PatchSequence& clip : dataset) {
    for (double v : clip.values.values()) {
      sum += v;
      sq += v * v;
      count += 1.0;
    }
  }
  model.encoder.input_mean = sum / count;
  model.encoder.input_std = std::sqrt(std::max(sq / count - model.encoder.input_mean * model.encoder.input_mean, 1e-12));
  NamedParams params;
  model.collect(params);
  set_requires_grad(params, true);
  AdamW opt(tensors_of(params), train.optimizer);

  MaeTrainResult result;
  result.initial_eval_loss = evaluate_mae(model, dataset, train.seed ^ 0x5eedull);
  const std::size_t batch = std::min(train.batch_size, dataset.size());
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < train.steps; ++step) {
    opt.zero_grad();
    std::vector<Tensor> losses;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        data_rng.shuffle(order);
        cursor = 0;
      }
      const PatchSequence& clip = dataset[order[cursor++]];
      MaskSplit mask = random_mask(clip.count(), config.mask_ratio, mask_rng);
      losses.push_back(mae_loss(mae_forward(clip, mask, model), clip, mask.masked));
    }
    Tensor total = average(losses);
    const double value = total.item();
    if (!std::isfinite(value)) {
      throw NumericError("pretrain_mae: loss diverged at step " + std::to_string(step));
    }
    backward(total);
    clip_grad_norm(opt.params(), train.clip_norm);
    opt.step();
    result.losses.push_back(value);
    if (log) log(step, value);
  }
  set_requires_grad(params, false);
  result.final_eval_loss = evaluate_mae(model, dataset, train.seed ^ 0x5eedull);
  result.encoder = model.encoder;
  return result;
}

double evaluate_mae(const MaeModel& model, const std::vector<PatchSequence>& dataset,
                    std::uint64_t seed) {
  NoGradGuard no_grad;
  Rng rng(seed);
  double total = 0.0;
  for (const PatchSequence& clip : dataset) {
    MaskSplit mask = random_mask(clip.count(), model.encoder.config.mask_ratio, rng);
    total += mae_loss(mae_forward(clip, mask, model), clip, mask.masked).item();
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace jmla
