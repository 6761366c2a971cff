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

// Run configuration: the full settings tree for every command, read from and
// written to plain "section.key = value" text.
//
//   # comment
//   seed = 0
//   mae.width = 64
//   train.data_mode = GptQa
//
// Unknown keys, duplicate keys and malformed values are rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jmla/data.hpp"
#include "jmla/decoder.hpp"
#include "jmla/eval.hpp"
#include "jmla/frontend.hpp"
#include "jmla/mae.hpp"
#include "jmla/resampler.hpp"
#include "jmla/trainer.hpp"

namespace jmla {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CorpusSettings {
  std::size_t clips = 240;
  std::size_t eval_clips = 60;
  std::size_t genres = 6;
  std::size_t instruments = 5;
};

struct MaeSettings {
  MaeConfig model{};
  MaeTrainConfig train{};
  std::size_t clips = 64;
};

// Tiny assembled model for the gradient oracle.
struct GradcheckSettings {
  std::size_t encoder_layers = 2;
  std::size_t encoder_width = 8;
  std::size_t decoder_layers = 2;
  std::size_t decoder_width = 8;
  std::size_t heads = 2;
  std::size_t latents = 2;
  std::size_t resampler_depth = 1;
  std::size_t answer_length = 3;
  double gate = 0.5;
  TopologyVariant topology = TopologyVariant::DenseEncDec;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

struct BenchSettings {
  std::vector<std::size_t> patches{16, 32, 64, 128};
  std::size_t text_len = 16;
};

struct RunConfig {
  std::uint64_t seed = 0;
  FrontendConfig frontend{};
  CorpusSettings corpus{};
  MaeSettings mae{};
  DecoderConfig decoder{};
  TextPretrainConfig text{};
  ResamplerConfig resampler{};
  TrainConfig train{};
  EvalConfig eval{};
  GradcheckSettings gradcheck{};
  BenchSettings bench{};

  // Resampler widths follow the encoder and decoder.
  ResamplerConfig resolved_resampler() const;
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Every key in a fixed order; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);
std::vector<std::string> config_keys();

std::string to_string(TagKind kind);
TagKind parse_tag_kind(const std::string& name);

}  // namespace jmla
