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

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "jmla/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"jmla: joint music-language attention models on synthetic audio"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string from_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;

  const char* commands[][2] = {
      {"pretrain-text", "pretrain the byte-level text decoder"},
      {"pretrain-mae", "pretrain the masked spectrogram autoencoder"},
      {"train", "train resamplers and gated cross-attention on frozen backbones"},
      {"eval", "zero-shot evaluation on held-out clips"},
      {"bench", "analytic cross-attention cost table"},
      {"gradcheck", "finite-difference check of every gradient"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "run seed, overrides the configuration")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--from", from_dir, "directory holding upstream checkpoints");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    jmla::CommandContext ctx;
    if (!config_path.empty()) ctx.config = jmla::load_config(config_path);
    if (seed_given) ctx.config.seed = seed;
    ctx.out_dir = out_dir;
    ctx.from_dir = from_dir;
    ctx.console = &std::cout;
    return jmla::run_command(app.get_subcommands().front()->get_name(), ctx);
  } catch (const std::exception& e) {
    std::cerr << "jmla: " << e.what() << "\n";
    return 2;
  }
}
