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

// The command surface behind the jmla executable. Each command reads its
// configuration, derives every random stream from the run seed, and writes
// its artifacts into an output directory.

#pragma once

#include <ostream>
#include <string>

#include "jmla/config.hpp"
#include "jmla/gradcheck.hpp"
#include "jmla/model.hpp"

namespace jmla {

struct CommandContext {
  RunConfig config;
  std::string out_dir = ".";
  // Where upstream checkpoints are read from; defaults to out_dir.
  std::string from_dir;
  std::ostream* console = nullptr;

  std::string input_path(const std::string& file) const;
  std::string output_path(const std::string& file) const;
};

// Artifact file names.
inline constexpr const char* kTextCheckpoint = "text.ckpt";
inline constexpr const char* kMaeCheckpoint = "mae.ckpt";
inline constexpr const char* kJmlaCheckpoint = "jmla.ckpt";

// Stage seeds derived from the run seed.
std::uint64_t stage_seed(std::uint64_t run_seed, const std::string& purpose);

// Training and held-out clips for a run.
std::vector<SynthClip> training_clips(const RunConfig& config);
std::vector<SynthClip> evaluation_clips(const RunConfig& config);

int cmd_pretrain_text(const CommandContext& ctx);
int cmd_pretrain_mae(const CommandContext& ctx);
int cmd_train_jmla(const CommandContext& ctx);
int cmd_eval(const CommandContext& ctx);
int cmd_bench(const CommandContext& ctx);
int cmd_gradcheck(const CommandContext& ctx);

// The tiny fully assembled model and loss used by cmd_gradcheck.
struct GradcheckProblem {
  JmlaModel model;
  PatchSequence patches;
  TokenSequence tokens;
};

GradcheckProblem make_gradcheck_problem(const GradcheckSettings& settings, std::uint64_t seed);
Tensor gradcheck_loss(const GradcheckProblem& problem);
GradCheckResult run_gradcheck(const GradcheckSettings& settings, std::uint64_t seed);

int run_command(const std::string& name, const CommandContext& ctx);

}  // namespace jmla
