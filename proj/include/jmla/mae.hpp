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

// Masked spectrogram autoencoder. The encoder sees only the kept patches
// during pretraining; the decoder fills masked positions with a shared learned
// token and reconstructs every patch. After pretraining only the encoder is
// kept, and it runs over all patches with every layer's output retained.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "jmla/frontend.hpp"
#include "jmla/nn.hpp"
#include "jmla/optim.hpp"
#include "jmla/rng.hpp"

namespace jmla {

struct MaeConfig {
  std::size_t encoder_layers = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t decoder_layers = 2;
  std::size_t decoder_width = 32;
  std::size_t decoder_heads = 4;
  double mask_ratio = 0.75;

  void validate() const;
};

struct MaskSplit {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> masked;
};

// round(ratio * P) indices masked, uniformly without replacement.
MaskSplit random_mask(std::size_t patch_count, double ratio, Rng& rng);

// Per-layer encoder outputs over the full patch sequence. layers[0] is the
// normalised patch embedding, layers[l] the normalised output of block l.
struct EncoderStack {
  std::vector<Tensor> layers;

  std::size_t depth() const { return layers.empty() ? 0 : layers.size() - 1; }
  const Tensor& top() const { return layers.back(); }
};

struct MaeEncoder {
  MaeConfig config;
  // Fixed standardisation of the log-mel input, measured on the pretraining set.
  double input_mean = 0.0;
  double input_std = 1.0;
  Linear patch_embed;
  std::vector<TransformerBlock> blocks;
  LayerNorm norm;

  // Encodes the given rows of patch values at the given grid cells.
  Tensor encode(const Tensor& patch_values, std::span<const GridCell> cells) const;
  EncoderStack encode_full(const PatchSequence& patches) const;
  void collect(const std::string& prefix, NamedParams& out) const;

 private:
  Tensor embed(const Tensor& patch_values, std::span<const GridCell> cells) const;
};

struct MaeModel {
  MaeEncoder encoder;
  Linear decoder_embed;
  Tensor mask_token;
  std::vector<TransformerBlock> decoder_blocks;
  LayerNorm decoder_norm;
  Linear decoder_pred;

  void collect(NamedParams& out) const;
};

MaeModel make_mae(const MaeConfig& config, Rng& rng);

// Reconstruction of all P patches, [P x 256].
Tensor mae_forward(const PatchSequence& patches, const MaskSplit& mask, const MaeModel& model);

// Mean absolute error over masked patches only. With normalize_targets each
// target patch is standardised by its own mean and variance first.
Tensor mae_loss(const Tensor& predicted, const PatchSequence& target,
                std::span<const std::size_t> masked, bool normalize_targets = true);

struct MaeTrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  AdamWConfig optimizer{3e-3, 0.9, 0.999, 1e-8, 0.01};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct MaeTrainResult {
  MaeEncoder encoder;
  std::vector<double> losses;
  // Masked loss over the whole dataset under fixed masks, before and after.
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
};

using MaeLogFn = std::function<void(std::size_t step, double loss)>;

// Trains encoder and decoder, then drops the decoder.
MaeTrainResult pretrain_mae(const std::vector<PatchSequence>& dataset, const MaeConfig& config,
                            const MaeTrainConfig& train, const MaeLogFn& log = {});

// Mean masked loss over the dataset with masks derived from seed alone.
double evaluate_mae(const MaeModel& model, const std::vector<PatchSequence>& dataset,
                    std::uint64_t seed);

}  // namespace jmla
