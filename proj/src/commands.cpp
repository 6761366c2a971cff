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

#include "jmla/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "jmla/checkpoint.hpp"
#include "jmla/eval.hpp"
#include "jmla/frontend.hpp"
#include "jmla/mae.hpp"
#include "jmla/trainer.hpp"

namespace jmla {

namespace fs = std::filesystem;

std::string CommandContext::input_path(const std::string& file) const {
  return (fs::path(from_dir.empty() ? out_dir : from_dir) / file).string();
}

std::string CommandContext::output_path(const std::string& file) const {
  return (fs::path(out_dir) / file).string();
}

std::uint64_t stage_seed(std::uint64_t run_seed, const std::string& purpose) {
  return Rng(run_seed).split(purpose).next_u64();
}

std::vector<SynthClip> training_clips(const RunConfig& config) {
  return gen_corpus({stage_seed(config.seed, "corpus.train"), config.corpus.clips, config.corpus.genres,
                     config.corpus.instruments, CorpusSplit::Train, 0});
}

std::vector<SynthClip> evaluation_clips(const RunConfig& config) {
  return gen_corpus({stage_seed(config.seed, "corpus.eval"), config.corpus.eval_clips, config.corpus.genres,
                     config.corpus.instruments, CorpusSplit::Eval, 1000000});
}

namespace {

std::ostream& out_of(const CommandContext& ctx) {
  static std::ostringstream sink;
  return ctx.console != nullptr ? *ctx.console : sink;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void prepare_output(const CommandContext& ctx) {
  fs::create_directories(ctx.out_dir);
  write_file(ctx.output_path("config.txt"), to_text(ctx.config));
}

std::string loss_log(const std::vector<double>& losses) {
  std::string out;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    nlohmann::ordered_json j;
    j["step"] = i;
    j["loss"] = losses[i];
    out += j.dump() + "\n";
  }
  return out;
}

Checkpoint base_checkpoint(const CommandContext& ctx, const std::string& command, const Rng& rng) {
  Checkpoint c;
  c.config = to_text(ctx.config);
  c.rng_state = rng.state();
  c.provenance["command"] = command;
  c.provenance["seed"] = std::to_string(ctx.config.seed);
  return c;
}

std::vector<PatchSequence> patches_of(std::span<const SynthClip> clips, const FrontendConfig& frontend) {
  std::vector<PatchSequence> out;
  for (const SynthClip& c : clips) out.push_back(patchify(log_mel(synthesize(c, frontend), frontend)));
  return out;
}

}  // namespace

int cmd_pretrain_text(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  prepare_output(ctx);
  TextPretrainConfig train = cfg.text;
  train.seed = stage_seed(cfg.seed, "text");
  const TagVocabulary vocab = TagVocabulary::standard(cfg.corpus.genres, cfg.corpus.instruments);
  const TextPretrainResult result = pretrain_text(cfg.decoder, train, vocab);
  Checkpoint c = base_checkpoint(ctx, "pretrain-text", Rng(train.seed));
  c.provenance["steps"] = std::to_string(train.steps);
  c.params = decoder_state(result.decoder);
  save_checkpoint(ctx.output_path(kTextCheckpoint), c);
  write_file(ctx.output_path("text_log.jsonl"), loss_log(result.losses));
  out_of(ctx) << "pretrain-text: " << train.steps << " steps, final loss "
              << (result.losses.empty() ? 0.0 : result.losses.back()) << "\n";
  return 0;
}

int cmd_pretrain_mae(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  prepare_output(ctx);
  CorpusSettings corpus = cfg.corpus;
  const std::vector<SynthClip> clips =
      gen_corpus({stage_seed(cfg.seed, "corpus.mae"), cfg.mae.clips, corpus.genres, corpus.instruments,
                  CorpusSplit::Train, 0});
  MaeTrainConfig train = cfg.mae.train;
  train.seed = stage_seed(cfg.seed, "mae");
  const MaeTrainResult result = pretrain_mae(patches_of(clips, cfg.frontend), cfg.mae.model, train);
  Checkpoint c = base_checkpoint(ctx, "pretrain-mae", Rng(train.seed));
  c.provenance["steps"] = std::to_string(train.steps);
  c.params = encoder_state(result.encoder);
  save_checkpoint(ctx.output_path(kMaeCheckpoint), c);
  std::string log = loss_log(result.losses);
  nlohmann::ordered_json summary;
  summary["initial_eval_loss"] = result.initial_eval_loss;
  summary["final_eval_loss"] = result.final_eval_loss;
  log += summary.dump() + "\n";
  write_file(ctx.output_path("mae_log.jsonl"), log);
  out_of(ctx) << "pretrain-mae: masked loss " << result.initial_eval_loss << " -> " << result.final_eval_loss
              << "\n";
  return 0;
}

int cmd_train_jmla(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const Checkpoint text_ckpt = load_checkpoint(ctx.input_path(kTextCheckpoint));
  const Checkpoint mae_ckpt = load_checkpoint(ctx.input_path(kMaeCheckpoint));
  const FusionDecoder text_decoder = decoder_from(text_ckpt);
  const MaeEncoder encoder = encoder_from(mae_ckpt);
  if (text_decoder.config.width != cfg.decoder.width || encoder.config.width != cfg.mae.model.width) {
    throw std::invalid_argument("train: upstream checkpoints disagree with the configured widths");
  }
  prepare_output(ctx);
  const std::vector<SynthClip> clips = training_clips(cfg);
  write_file(ctx.output_path("corpus.jsonl"), corpus_to_jsonl(clips));
  const AudioBank bank = build_audio_bank(clips, encoder, cfg.frontend);
  Rng rng(stage_seed(cfg.seed, "jmla.init"));
  JmlaModel model = assemble_model(encoder, text_decoder, cfg.train.variant, cfg.resolved_resampler(), rng);
  TrainConfig train = cfg.train;
  train.seed = stage_seed(cfg.seed, "jmla.train");
  const TrainLog log = run_schedule(train, model, clips, bank);
  Checkpoint c = base_checkpoint(ctx, "train", rng);
  c.topology = model.topology().describe();
  c.provenance["schedule"] = to_string(train.mode);
  c.provenance["steps"] = std::to_string(log.entries.size());
  c.provenance["text_checkpoint_steps"] = text_ckpt.provenance.count("steps") ? text_ckpt.provenance.at("steps") : "";
  c.provenance["mae_checkpoint_steps"] = mae_ckpt.provenance.count("steps") ? mae_ckpt.provenance.at("steps") : "";
  c.params = model_state(model);
  save_checkpoint(ctx.output_path(kJmlaCheckpoint), c);
  write_file(ctx.output_path("train_log.jsonl"), log.to_jsonl());
  out_of(ctx) << "train: " << c.topology << ", " << log.entries.size() << " steps, final loss "
              << log.entries.back().loss << "\n";
  return 0;
}

int cmd_eval(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const Checkpoint ckpt = load_checkpoint(ctx.input_path(kJmlaCheckpoint));
  const JmlaModel model = model_from(ckpt);
  prepare_output(ctx);
  const std::vector<SynthClip> clips = evaluation_clips(cfg);
  const AudioBank bank = build_audio_bank(clips, model.encoder, cfg.frontend);
  const TagVocabulary vocab = TagVocabulary::standard(cfg.corpus.genres, cfg.corpus.instruments);
  const EvalReport report = evaluate(model, clips, bank, vocab, cfg.eval);
  write_file(ctx.output_path("eval_report.jsonl"), report.to_jsonl());
  out_of(ctx) << report.summary_table();
  return 0;
}

int cmd_bench(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  prepare_output(ctx);
  const ResamplerConfig rc = cfg.resolved_resampler();
  const std::size_t sites = build_topology(cfg.train.variant, cfg.mae.model.encoder_layers, cfg.decoder.layers).sites.size();
  std::ostream& os = out_of(ctx);
  os << std::setw(8) << "P" << std::setw(16) << "resampler_kv" << std::setw(18) << "resampler_total"
     << std::setw(16) << "decoder_cross" << std::setw(20) << "naive_prefix_attn" << std::setw(20)
     << "naive_prefix_total" << "\n";
  std::string jsonl;
  for (std::size_t p : cfg.bench.patches) {
    CrossCostQuery q;
    q.patches = p;
    q.latents = rc.latents;
    q.width = rc.width;
    q.input_width = rc.input_width;
    q.depth = rc.depth;
    q.text_len = cfg.bench.text_len;
    q.sites = sites;
    q.decoder_layers = cfg.decoder.layers;
    const CrossCost c = count_cross_flops(q);
    os << std::setw(8) << p << std::setw(16) << c.resampler_kv << std::setw(18) << c.resampler_total << std::setw(16)
       << c.decoder_cross << std::setw(20) << c.naive_prefix_attention << std::setw(20) << c.naive_prefix_total
       << "\n";
    nlohmann::ordered_json j;
    j["patches"] = p;
    j["resampler_kv"] = c.resampler_kv;
    j["resampler_attention"] = c.resampler_attention;
    j["resampler_total"] = c.resampler_total;
    j["decoder_cross"] = c.decoder_cross;
    j["naive_prefix_attention"] = c.naive_prefix_attention;
    j["naive_prefix_total"] = c.naive_prefix_total;
    jsonl += j.dump() + "\n";
  }
  write_file(ctx.output_path("bench.jsonl"), jsonl);
  return 0;
}

GradcheckProblem make_gradcheck_problem(const GradcheckSettings& s, std::uint64_t seed) {
  const Rng root(seed);
  MaeConfig mc;
  mc.encoder_layers = s.encoder_layers;
  mc.width = s.encoder_width;
  mc.heads = s.heads;
  mc.mlp_ratio = 2;
  mc.decoder_layers = 1;
  mc.decoder_width = s.encoder_width;
  mc.decoder_heads = s.heads;
  Rng enc_rng = root.split("encoder");
  MaeEncoder encoder = make_mae(mc, enc_rng).encoder;

  DecoderConfig dc;
  dc.layers = s.decoder_layers;
  dc.width = s.decoder_width;
  dc.heads = s.heads;
  dc.mlp_ratio = 2;
  dc.max_len = 16;
  Rng dec_rng = root.split("decoder");
  FusionDecoder decoder = make_decoder(dc, dec_rng);

  ResamplerConfig rc;
  rc.latents = s.latents;
  rc.heads = s.heads;
  rc.depth = s.resampler_depth;
  rc.mlp_ratio = 2;
  Rng asm_rng = root.split("assemble");
  GradcheckProblem problem{assemble_model(encoder, decoder, s.topology, rc, asm_rng), {}, {}};
  for (CrossBlock& c : problem.model.decoder.cross) c.gate.mutable_values()[0] = s.gate;

  // A 32 x 32 log-mel-like grid: four patches.
  Rng data_rng = root.split("data");
  Spectrogram spec;
  spec.frames = 32;
  spec.bins = 32;
  spec.valid_frames = 32;
  spec.values.resize(spec.frames * spec.bins);
  for (double& v : spec.values) v = data_rng.normal(-4.0, 2.0);
  problem.patches = patchify(spec);
  double sum = 0.0, sq = 0.0;
  for (double v : spec.values) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(spec.values.size());
  problem.model.encoder.input_mean = sum / n;
  problem.model.encoder.input_std = std::sqrt(sq / n - problem.model.encoder.input_mean * problem.model.encoder.input_mean);
  std::string answer;
  for (std::size_t i = 0; i < s.answer_length; ++i) answer.push_back(static_cast<char>('a' + data_rng.below(26)));
  problem.tokens = make_qa_sequence("Q?", answer);
  return problem;
}

Tensor gradcheck_loss(const GradcheckProblem& problem) {
  const std::vector<int> targets = problem.tokens.targets();
  return cross_entropy(problem.model.logits(problem.patches, problem.tokens.ids), targets, kIgnore);
}

GradCheckResult run_gradcheck(const GradcheckSettings& settings, std::uint64_t seed) {
  const GradcheckProblem problem = make_gradcheck_problem(settings, seed);
  GradCheckOptions options;
  options.eps = settings.eps;
  options.seed = seed;
  const NamedParams params = problem.model.parameters();
  set_requires_grad(params, true);
  return finite_diff_check([&] { return gradcheck_loss(problem); }, params, options);
}

int cmd_gradcheck(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  prepare_output(ctx);
  const GradCheckResult r = run_gradcheck(cfg.gradcheck, stage_seed(cfg.seed, "gradcheck"));
  const bool pass = r.max_rel_error < cfg.gradcheck.tolerance;
  nlohmann::ordered_json j;
  j["max_rel_error"] = r.max_rel_error;
  j["entries_checked"] = r.entries_checked;
  j["worst_param"] = r.worst_name;
  j["worst_index"] = r.worst_index;
  j["tolerance"] = cfg.gradcheck.tolerance;
  j["pass"] = pass;
  write_file(ctx.output_path("gradcheck.jsonl"), j.dump() + "\n");
  out_of(ctx) << "gradcheck: " << r.entries_checked << " entries, max relative error " << r.max_rel_error
              << " (worst " << r.worst_name << "[" << r.worst_index << "]), tolerance " << cfg.gradcheck.tolerance
              << (pass ? ": pass" : ": FAIL") << "\n";
  return pass ? 0 : 1;
}

int run_command(const std::string& name, const CommandContext& ctx) {
  if (name == "pretrain-text") return cmd_pretrain_text(ctx);
  if (name == "pretrain-mae") return cmd_pretrain_mae(ctx);
  if (name == "train") return cmd_train_jmla(ctx);
  if (name == "eval") return cmd_eval(ctx);
  if (name == "bench") return cmd_bench(ctx);
  if (name == "gradcheck") return cmd_gradcheck(ctx);
  throw std::invalid_argument("unknown command '" + name + "'");
}

}  // namespace jmla
