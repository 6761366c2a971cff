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

// Training loops: the stand-in language model pretraining on text, and JMLA
// prefix tuning over the four data schedules.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jmla/data.hpp"
#include "jmla/decoder.hpp"
#include "jmla/mae.hpp"
#include "jmla/model.hpp"
#include "jmla/optim.hpp"

namespace jmla {

// ---- text pretraining -----------------------------------------------------

struct TextPretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t corpus_size = 16000;
  AdamWConfig optimizer{3e-3, 0.9, 0.999, 1e-8, 0.01};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TextPretrainResult {
  FusionDecoder decoder;
  std::vector<double> losses;
};

using StepLogFn = std::function<void(std::size_t step, double loss)>;

// Trains every decoder core parameter from a fresh initialisation, then
// freezes them.
TextPretrainResult pretrain_text(const DecoderConfig& config, const TextPretrainConfig& train,
                                 const TagVocabulary& vocab, const StepLogFn& log = {});

// Token-mean next-token loss of the text-only path over a batch.
Tensor text_batch_loss(const FusionDecoder& decoder, std::span<const TokenSequence> batch);

// ---- audio bank -----------------------------------------------------------

// Frozen-encoder outputs per clip, computed once.
struct AudioBank {
  std::map<std::size_t, std::size_t> index;  // clip id -> slot
  std::vector<PatchSequence> patches;
  std::vector<EncoderStack> stacks;

  const EncoderStack& stack(std::size_t clip_id) const;
  const PatchSequence& patch(std::size_t clip_id) const;
};

AudioBank build_audio_bank(std::span<const SynthClip> clips, const MaeEncoder& encoder,
                           const FrontendConfig& frontend = {});

// ---- JMLA training --------------------------------------------------------

struct TrainConfig {
  std::size_t steps = 2000;          // phase 1 in finetune mode
  std::size_t finetune_steps = 0;    // phase 2, finetune mode only
  std::size_t batch_size = 8;
  AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  TopologyVariant variant = TopologyVariant::DenseDec;
  DataMode mode = DataMode::GptQa;

  void validate() const;
};

struct TrainLogEntry {
  std::size_t step = 0;
  std::string phase;
  double loss = 0.0;
  double grad_norm = 0.0;
  double trainable_norm = 0.0;
  std::vector<double> gates;
  std::vector<std::size_t> examples;  // indices into the phase's example list
  std::vector<std::size_t> clips;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  // Every example touched, as (clip id, raw caption flag).
  std::vector<std::pair<std::size_t, bool>> audit;

  std::string to_jsonl() const;
};

struct BatchItem {
  const QaExample* example = nullptr;
  const EncoderStack* stack = nullptr;
  const std::vector<GridCell>* cells = nullptr;
};

// Teacher-forced token-mean cross entropy over answer positions.
Tensor jmla_batch_loss(const JmlaModel& model, std::span<const BatchItem> batch);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Forward, backward, clip and update on the trainable set only.
StepResult train_step(const JmlaModel& model, std::span<const BatchItem> batch, AdamW& optimizer,
                      double clip_norm);

double trainable_norm(const ParamPartition& partition);
std::vector<double> gate_values(const JmlaModel& model);

// Runs the configured data schedule on model in place. Finetune trains phase
// 1 on Both, then phase 2 on GptQa with the same optimizer state.
TrainLog run_schedule(const TrainConfig& config, JmlaModel& model, std::span<const SynthClip> clips,
                      const AudioBank& bank, const StepLogFn& log = {});

}  // namespace jmla
