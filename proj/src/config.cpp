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

#include "jmla/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace jmla {

std::string to_string(TagKind kind) {
  switch (kind) {
    case TagKind::Genre: return "genre";
    case TagKind::Instrument: return "instrument";
    case TagKind::Tempo: return "tempo";
  }
  throw std::invalid_argument("unknown tag kind");
}

TagKind parse_tag_kind(const std::string& name) {
  for (TagKind k : {TagKind::Genre, TagKind::Instrument, TagKind::Tempo}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown tag kind '" + name + "'");
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename Member>
Field size_field(std::string key, Member member) {
  return {std::move(key), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = static_cast<std::size_t>(parse_u64(v)); }};
}

template <typename Member>
Field double_field(std::string key, Member member) {
  return {std::move(key), [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); }};
}

template <typename Member>
Field bool_field(std::string key, Member member) {
  return {std::move(key),
          [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); }};
}

#define JMLA_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }});

    f.push_back(double_field("frontend.sample_rate", JMLA_REF(frontend.sample_rate)));
    f.push_back(size_field("frontend.window", JMLA_REF(frontend.window)));
    f.push_back(size_field("frontend.hop", JMLA_REF(frontend.hop)));
    f.push_back(size_field("frontend.n_fft", JMLA_REF(frontend.n_fft)));
    f.push_back(size_field("frontend.mel_bins", JMLA_REF(frontend.mel_bins)));
    f.push_back(double_field("frontend.f_min", JMLA_REF(frontend.f_min)));
    f.push_back(double_field("frontend.f_max", JMLA_REF(frontend.f_max)));
    f.push_back(double_field("frontend.log_floor", JMLA_REF(frontend.log_floor)));

    f.push_back(size_field("corpus.clips", JMLA_REF(corpus.clips)));
    f.push_back(size_field("corpus.eval_clips", JMLA_REF(corpus.eval_clips)));
    f.push_back(size_field("corpus.genres", JMLA_REF(corpus.genres)));
    f.push_back(size_field("corpus.instruments", JMLA_REF(corpus.instruments)));

    f.push_back(size_field("mae.encoder_layers", JMLA_REF(mae.model.encoder_layers)));
    f.push_back(size_field("mae.width", JMLA_REF(mae.model.width)));
    f.push_back(size_field("mae.heads", JMLA_REF(mae.model.heads)));
    f.push_back(size_field("mae.mlp_ratio", JMLA_REF(mae.model.mlp_ratio)));
    f.push_back(size_field("mae.decoder_layers", JMLA_REF(mae.model.decoder_layers)));
    f.push_back(size_field("mae.decoder_width", JMLA_REF(mae.model.decoder_width)));
    f.push_back(size_field("mae.decoder_heads", JMLA_REF(mae.model.decoder_heads)));
    f.push_back(double_field("mae.mask_ratio", JMLA_REF(mae.model.mask_ratio)));
    f.push_back(size_field("mae.clips", JMLA_REF(mae.clips)));
    f.push_back(size_field("mae.steps", JMLA_REF(mae.train.steps)));
    f.push_back(size_field("mae.batch_size", JMLA_REF(mae.train.batch_size)));
    f.push_back(double_field("mae.lr", JMLA_REF(mae.train.optimizer.lr)));
    f.push_back(double_field("mae.weight_decay", JMLA_REF(mae.train.optimizer.weight_decay)));
    f.push_back(double_field("mae.clip_norm", JMLA_REF(mae.train.clip_norm)));

    f.push_back(size_field("decoder.layers", JMLA_REF(decoder.layers)));
    f.push_back(size_field("decoder.width", JMLA_REF(decoder.width)));
    f.push_back(size_field("decoder.heads", JMLA_REF(decoder.heads)));
    f.push_back(size_field("decoder.mlp_ratio", JMLA_REF(decoder.mlp_ratio)));
    f.push_back(size_field("decoder.max_len", JMLA_REF(decoder.max_len)));

    f.push_back(size_field("text.steps", JMLA_REF(text.steps)));
    f.push_back(size_field("text.batch_size", JMLA_REF(text.batch_size)));
    f.push_back(size_field("text.corpus_size", JMLA_REF(text.corpus_size)));
    f.push_back(double_field("text.lr", JMLA_REF(text.optimizer.lr)));
    f.push_back(double_field("text.weight_decay", JMLA_REF(text.optimizer.weight_decay)));
    f.push_back(double_field("text.clip_norm", JMLA_REF(text.clip_norm)));

    f.push_back(size_field("resampler.latents", JMLA_REF(resampler.latents)));
    f.push_back(size_field("resampler.heads", JMLA_REF(resampler.heads)));
    f.push_back(size_field("resampler.depth", JMLA_REF(resampler.depth)));
    f.push_back(size_field("resampler.mlp_ratio", JMLA_REF(resampler.mlp_ratio)));
    f.push_back(bool_field("resampler.positional", JMLA_REF(resampler.positional)));

    f.push_back(size_field("train.steps", JMLA_REF(train.steps)));
    f.push_back(size_field("train.finetune_steps", JMLA_REF(train.finetune_steps)));
    f.push_back(size_field("train.batch_size", JMLA_REF(train.batch_size)));
    f.push_back(double_field("train.lr", JMLA_REF(train.optimizer.lr)));
    f.push_back(double_field("train.beta1", JMLA_REF(train.optimizer.beta1)));
    f.push_back(double_field("train.beta2", JMLA_REF(train.optimizer.beta2)));
    f.push_back(double_field("train.eps", JMLA_REF(train.optimizer.eps)));
    f.push_back(double_field("train.weight_decay", JMLA_REF(train.optimizer.weight_decay)));
    f.push_back(double_field("train.clip_norm", JMLA_REF(train.clip_norm)));
    f.push_back({"train.topology", [](const RunConfig& c) { return to_string(c.train.variant); },
                 [](RunConfig& c, const std::string& v) { c.train.variant = parse_topology_variant(v); }});
    f.push_back({"train.data_mode", [](const RunConfig& c) { return to_string(c.train.mode); },
                 [](RunConfig& c, const std::string& v) { c.train.mode = parse_data_mode(v); }});

    f.push_back({"eval.kind", [](const RunConfig& c) { return to_string(c.eval.kind); },
                 [](RunConfig& c, const std::string& v) { c.eval.kind = parse_tag_kind(v); }});
    f.push_back(bool_field("eval.synonyms", JMLA_REF(eval.synonyms)));
    f.push_back({"eval.strategies",
                 [](const RunConfig& c) {
                   std::string out;
                   for (PromptStrategy s : c.eval.strategies) out += (out.empty() ? "" : ",") + to_string(s);
                   return out;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.eval.strategies.clear();
                   for (const std::string& s : split_list(v)) c.eval.strategies.push_back(parse_prompt_strategy(s));
                 }});
    f.push_back(bool_field("eval.multilabel", JMLA_REF(eval.multilabel)));
    f.push_back(bool_field("eval.length_normalize", JMLA_REF(eval.scoring.length_normalize)));

    f.push_back(size_field("gradcheck.encoder_layers", JMLA_REF(gradcheck.encoder_layers)));
    f.push_back(size_field("gradcheck.encoder_width", JMLA_REF(gradcheck.encoder_width)));
    f.push_back(size_field("gradcheck.decoder_layers", JMLA_REF(gradcheck.decoder_layers)));
    f.push_back(size_field("gradcheck.decoder_width", JMLA_REF(gradcheck.decoder_width)));
    f.push_back(size_field("gradcheck.heads", JMLA_REF(gradcheck.heads)));
    f.push_back(size_field("gradcheck.latents", JMLA_REF(gradcheck.latents)));
    f.push_back(size_field("gradcheck.resampler_depth", JMLA_REF(gradcheck.resampler_depth)));
    f.push_back(size_field("gradcheck.answer_length", JMLA_REF(gradcheck.answer_length)));
    f.push_back(double_field("gradcheck.gate", JMLA_REF(gradcheck.gate)));
    f.push_back({"gradcheck.topology", [](const RunConfig& c) { return to_string(c.gradcheck.topology); },
                 [](RunConfig& c, const std::string& v) { c.gradcheck.topology = parse_topology_variant(v); }});
    f.push_back(double_field("gradcheck.eps", JMLA_REF(gradcheck.eps)));
    f.push_back(double_field("gradcheck.tolerance", JMLA_REF(gradcheck.tolerance)));

    f.push_back({"bench.patches",
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t p : c.bench.patches) out += (out.empty() ? "" : ",") + std::to_string(p);
                   return out;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.bench.patches.clear();
                   for (const std::string& s : split_list(v)) c.bench.patches.push_back(parse_u64(s));
                 }});
    f.push_back(size_field("bench.text_len", JMLA_REF(bench.text_len)));
    return f;
  }();
  return table;
}

#undef JMLA_REF

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ResamplerConfig RunConfig::resolved_resampler() const {
  ResamplerConfig r = resampler;
  r.width = decoder.width;
  r.input_width = mae.model.width;
  return r;
}

void RunConfig::validate() const {
  try {
    frontend.validate();
    mae.model.validate();
    decoder.validate();
    resolved_resampler().validate();
    text.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (decoder.vocab != static_cast<std::size_t>(kVocabSize)) {
    throw ConfigError("decoder.vocab must equal the tokenizer vocabulary " + std::to_string(kVocabSize));
  }
  if (mae.clips == 0 || mae.train.batch_size == 0) throw ConfigError("mae.clips and mae.batch_size must be positive");
  if (corpus.clips == 0 || corpus.eval_clips == 0) throw ConfigError("corpus sizes must be positive");
  if (eval.strategies.empty()) throw ConfigError("eval.strategies must name at least one strategy");
  if (bench.patches.empty()) throw ConfigError("bench.patches must list at least one size");
  for (std::size_t p : bench.patches) {
    if (p == 0) throw ConfigError("bench.patches entries must be positive");
  }
  if (gradcheck.tolerance <= 0.0 || gradcheck.eps <= 0.0) throw ConfigError("gradcheck eps and tolerance must be positive");
  if (gradcheck.heads == 0 || gradcheck.encoder_width % gradcheck.heads != 0 ||
      gradcheck.decoder_width % gradcheck.heads != 0 || gradcheck.encoder_width % 4 != 0) {
    throw ConfigError("gradcheck widths must divide by heads and the encoder width by 4");
  }
  try {
    TagVocabulary::standard(corpus.genres, corpus.instruments);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace jmla
