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

#include "jmla/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace jmla {

namespace {

// Epoch-shuffled draws without replacement.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, Rng rng) : order_(population), rng_(std::move(rng)) {
    std::iota(order_.begin(), order_.end(), 0);
    cursor_ = order_.size();
  }

  std::vector<std::size_t> draw(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (cursor_ == order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_;
};

std::vector<int> unpadded_ids(const TokenSequence& seq) {
  return {seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.unpadded_size())};
}

std::vector<int> unpadded_targets(const TokenSequence& seq) {
  std::vector<int> t = seq.targets();
  t.resize(seq.unpadded_size());
  return t;
}

void check_finite(double loss, const char* where, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string(where) + ": loss diverged at step " + std::to_string(step));
  }
}

}  // namespace

// ---- text pretraining -----------------------------------------------------

void TextPretrainConfig::validate() const {
  if (steps == 0 && corpus_size == 0) return;
  if (batch_size == 0) throw std::invalid_argument("text pretraining: batch_size must be positive");
  if (corpus_size == 0) throw std::invalid_argument("text pretraining: corpus_size must be positive");
  if (clip_norm <= 0.0) throw std::invalid_argument("text pretraining: clip_norm must be positive");
}

Tensor text_batch_loss(const FusionDecoder& decoder, std::span<const TokenSequence> batch) {
  std::vector<Tensor> logits;
  std::vector<int> targets;
  for (const TokenSequence& seq : batch) {
    const std::vector<int> ids = unpadded_ids(seq);
    logits.push_back(decoder.forward_text(ids));
    const std::vector<int> t = unpadded_targets(seq);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  return cross_entropy(concat_rows(logits), targets, kIgnore);
}

TextPretrainResult pretrain_text(const DecoderConfig& config, const TextPretrainConfig& train,
                                 const TagVocabulary& vocab, const StepLogFn& log) {
  train.validate();
  const Rng root(train.seed);
  Rng init_rng = root.split("init");
  TextPretrainResult result{make_decoder(config, init_rng), {}};
  NamedParams params;
  result.decoder.collect_core(params);
  set_requires_grad(params, true);
  AdamW opt(tensors_of(params), train.optimizer);
  const std::vector<TokenSequence> corpus = text_corpus(root.split("corpus").next_u64(), train.corpus_size, vocab);
  BatchSampler sampler(corpus.size(), root.split("batches"));
  for (std::size_t step = 0; step < train.steps; ++step) {
    std::vector<TokenSequence> batch;
    for (std::size_t i : sampler.draw(train.batch_size)) batch.push_back(corpus[i]);
    opt.zero_grad();
    Tensor loss = text_batch_loss(result.decoder, batch);
    const double value = loss.item();
    check_finite(value, "pretrain_text", step);
    backward(loss);
    clip_grad_norm(opt.params(), train.clip_norm);
    opt.step();
    result.losses.push_back(value);
    if (log) log(step, value);
  }
  set_requires_grad(params, false);
  zero_grad(params);
  return result;
}

// ---- audio bank -----------------------------------------------------------

const EncoderStack& AudioBank::stack(std::size_t clip_id) const {
  const auto it = index.find(clip_id);
  if (it == index.end()) throw std::out_of_range("audio bank: unknown clip " + std::to_string(clip_id));
  return stacks[it->second];
}

const PatchSequence& AudioBank::patch(std::size_t clip_id) const {
  const auto it = index.find(clip_id);
  if (it == index.end()) throw std::out_of_range("audio bank: unknown clip " + std::to_string(clip_id));
  return patches[it->second];
}

AudioBank build_audio_bank(std::span<const SynthClip> clips, const MaeEncoder& encoder,
                           const FrontendConfig& frontend) {
  NoGradGuard no_grad;
  AudioBank bank;
  for (const SynthClip& clip : clips) {
    if (bank.index.count(clip.id) != 0) continue;
    bank.index[clip.id] = bank.patches.size();
    bank.patches.push_back(patchify(log_mel(synthesize(clip, frontend), frontend)));
    bank.stacks.push_back(encoder.encode_full(bank.patches.back()));
  }
  return bank;
}

// ---- JMLA training --------------------------------------------------------

void TrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("train: steps must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (clip_norm <= 0.0) throw std::invalid_argument("train: clip_norm must be positive");
  if (optimizer.lr < 0.0) throw std::invalid_argument("train: learning rate must be nonnegative");
  if (mode == DataMode::Finetune && finetune_steps == 0) {
    throw std::invalid_argument("train: finetune mode needs finetune_steps > 0");
  }
  if (mode != DataMode::Finetune && finetune_steps != 0) {
    throw std::invalid_argument("train: finetune_steps is only valid in finetune mode");
  }
}

Tensor jmla_batch_loss(const JmlaModel& model, std::span<const BatchItem> batch) {
  std::vector<Tensor> logits;
  std::vector<int> targets;
  for (const BatchItem& item : batch) {
    const std::vector<Tensor> summaries = model.summarize(*item.stack, *item.cells);
    const std::vector<int> ids = unpadded_ids(item.example->tokens);
    logits.push_back(model.decoder.forward(ids, summaries));
    const std::vector<int> t = unpadded_targets(item.example->tokens);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  return cross_entropy(concat_rows(logits), targets, kIgnore);
}

StepResult train_step(const JmlaModel& model, std::span<const BatchItem> batch, AdamW& optimizer,
                      double clip_norm) {
  optimizer.zero_grad();
  Tensor loss = jmla_batch_loss(model, batch);
  StepResult r;
  r.loss = loss.item();
  check_finite(r.loss, "train_step", optimizer.steps_taken());
  backward(loss);
  r.grad_norm = clip_grad_norm(optimizer.params(), clip_norm);
  optimizer.step();
  return r;
}

double trainable_norm(const ParamPartition& partition) {
  double sq = 0.0;
  for (const auto& [name, t] : partition.trainable) {
    for (double v : t.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

std::vector<double> gate_values(const JmlaModel& model) {
  std::vector<double> out;
  for (const CrossBlock& c : model.decoder.cross) out.push_back(c.gate.item());
  return out;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const TrainLogEntry& e : entries) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["phase"] = e.phase;
    j["loss"] = e.loss;
    j["grad_norm"] = e.grad_norm;
    j["trainable_norm"] = e.trainable_norm;
    j["gates"] = e.gates;
    j["clips"] = e.clips;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
    out += '\n';
  }
  return out;
}

TrainLog run_schedule(const TrainConfig& config, JmlaModel& model, std::span<const SynthClip> clips,
                      const AudioBank& bank, const StepLogFn& log) {
  config.validate();
  if (clips.empty()) throw std::invalid_argument("run_schedule: empty corpus");
  const ParamPartition partition = partition_params(model);
  AdamW optimizer(tensors_of(partition.trainable), config.optimizer);
  const Rng root(config.seed);

  struct Phase {
    DataMode data;
    std::size_t steps;
  };
  std::vector<Phase> phases;
  if (config.mode == DataMode::Finetune) {
    phases = {{DataMode::Both, config.steps}, {DataMode::GptQa, config.finetune_steps}};
  } else {
    phases = {{config.mode, config.steps}};
  }

  TrainLog tlog;
  std::size_t global_step = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    std::vector<QaExample> examples;
    for (const SynthClip& clip : clips) {
      for (QaExample& ex : format_qa(clip, phases[p].data)) examples.push_back(std::move(ex));
    }
    std::vector<const std::vector<GridCell>*> cells;
    std::vector<const EncoderStack*> stacks;
    for (const QaExample& ex : examples) {
      stacks.push_back(&bank.stack(ex.clip_id));
      cells.push_back(&bank.patch(ex.clip_id).cells);
    }
    BatchSampler sampler(examples.size(), root.split("batches", p));
    const std::string phase_name = to_string(phases[p].data);
    for (std::size_t s = 0; s < phases[p].steps; ++s, ++global_step) {
      const std::vector<std::size_t> picks = sampler.draw(config.batch_size);
      std::vector<BatchItem> batch;
      TrainLogEntry entry;
      for (std::size_t i : picks) {
        batch.push_back({&examples[i], stacks[i], cells[i]});
        entry.examples.push_back(i);
        entry.clips.push_back(examples[i].clip_id);
        tlog.audit.emplace_back(examples[i].clip_id, examples[i].raw_caption);
      }
      const StepResult r = train_step(model, batch, optimizer, config.clip_norm);
      entry.step = global_step;
      entry.phase = phase_name;
      entry.loss = r.loss;
      entry.grad_norm = r.grad_norm;
      entry.trainable_norm = trainable_norm(partition);
      entry.gates = gate_values(model);
      tlog.entries.push_back(std::move(entry));
      if (log) log(global_step, r.loss);
    }
  }
  set_requires_grad(partition.trainable, false);
  zero_grad(partition.trainable);
  return tlog;
}

}  // namespace jmla
