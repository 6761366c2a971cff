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

#include "jmla/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace jmla {

// ---- tokenizer -------------------------------------------------------------

std::size_t TokenSequence::unpadded_size() const {
  std::size_t n = roles.size();
  while (n > 0 && roles[n - 1] == Role::Pad) --n;
  return n;
}

std::vector<int> TokenSequence::targets() const {
  std::vector<int> out(ids.size(), kIgnore);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    if (roles[t + 1] == Role::Answer) out[t] = ids[t + 1];
  }
  return out;
}

void TokenSequence::validate() const {
  if (ids.size() != roles.size()) throw std::invalid_argument("token sequence: ids/roles length mismatch");
  const std::size_t n = unpadded_size();
  for (std::size_t t = 0; t < n; ++t) {
    if (roles[t] == Role::Pad) throw std::invalid_argument("token sequence: pad before the end");
  }
  for (std::size_t t = n; t < ids.size(); ++t) {
    if (ids[t] != kPad) throw std::invalid_argument("token sequence: pad role on a non-pad id");
  }
  if (n == 0 || ids[n - 1] != kEos || roles[n - 1] != Role::Answer) {
    throw std::invalid_argument("token sequence: answer region must end with EOS");
  }
  for (int id : ids) {
    if (id < 0 || id >= kVocabSize) throw std::out_of_range("token sequence: id out of vocabulary");
  }
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kSos);
  for (unsigned char c : text) ids.push_back(c);
  ids.push_back(kEos);
  return ids;
}

std::string detokenize(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

namespace {

void append_bytes(TokenSequence& seq, std::string_view text, Role role) {
  for (unsigned char c : text) {
    seq.ids.push_back(c);
    seq.roles.push_back(role);
  }
}

void append_token(TokenSequence& seq, int id, Role role) {
  seq.ids.push_back(id);
  seq.roles.push_back(role);
}

}  // namespace

TokenSequence make_qa_sequence(std::string_view question, std::string_view answer) {
  TokenSequence seq;
  append_token(seq, kSos, Role::Question);
  append_bytes(seq, question, Role::Question);
  append_token(seq, kSep, Role::Question);
  append_bytes(seq, answer, Role::Answer);
  append_token(seq, kEos, Role::Answer);
  return seq;
}

TokenSequence make_text_sequence(std::string_view text) {
  TokenSequence seq;
  append_token(seq, kSos, Role::Question);
  append_bytes(seq, text, Role::Answer);
  append_token(seq, kEos, Role::Answer);
  return seq;
}

TokenSequence pad_to(TokenSequence seq, std::size_t length) {
  if (seq.ids.size() > length) {
    throw std::invalid_argument("pad_to: sequence of " + std::to_string(seq.ids.size()) +
                                " tokens is longer than " + std::to_string(length));
  }
  while (seq.ids.size() < length) append_token(seq, kPad, Role::Pad);
  return seq;
}

// ---- tag vocabulary --------------------------------------------------------

namespace {

const std::vector<std::string> kGenrePool = {"pop", "blues", "jazz", "ambient", "funk", "rock"};
const std::vector<std::string> kGenreSynonymPool = {"chart", "soul", "lounge", "drift", "groove", "metal"};
const std::vector<std::string> kInstrumentPool = {"guitar", "flute", "clarinet", "organ", "violin"};
const std::vector<std::string> kInstrumentSynonymPool = {"banjo", "piccolo", "reed", "harmonium", "strings"};
const std::vector<std::string> kTempoPool = {"slow", "fast"};

}  // namespace

TagVocabulary TagVocabulary::standard(std::size_t genre_count, std::size_t instrument_count) {
  if (genre_count < 2 || instrument_count < 2) {
    throw std::invalid_argument("tag vocabulary needs at least 2 genres and 2 instruments");
  }
  if (genre_count > kGenrePool.size() || instrument_count > kInstrumentPool.size()) {
    throw std::invalid_argument("tag vocabulary larger than the built-in recipe pool");
  }
  TagVocabulary v;
  v.genres.assign(kGenrePool.begin(), kGenrePool.begin() + genre_count);
  v.genre_synonyms.assign(kGenreSynonymPool.begin(), kGenreSynonymPool.begin() + genre_count);
  v.instruments.assign(kInstrumentPool.begin(), kInstrumentPool.begin() + instrument_count);
  v.instrument_synonyms.assign(kInstrumentSynonymPool.begin(),
                               kInstrumentSynonymPool.begin() + instrument_count);
  v.tempos = kTempoPool;
  return v;
}

const std::vector<std::string>& TagVocabulary::words(TagKind kind, bool synonyms) const {
  switch (kind) {
    case TagKind::Genre: return synonyms ? genre_synonyms : genres;
    case TagKind::Instrument: return synonyms ? instrument_synonyms : instruments;
    case TagKind::Tempo: return tempos;
  }
  throw std::invalid_argument("unknown tag kind");
}

std::string_view question_for(TagKind kind) {
  switch (kind) {
    case TagKind::Genre: return kGenreQuestion;
    case TagKind::Instrument: return kInstrumentQuestion;
    case TagKind::Tempo: return kTempoQuestion;
  }
  throw std::invalid_argument("unknown tag kind");
}

std::string_view list_label_for(TagKind kind) {
  switch (kind) {
    case TagKind::Genre: return "genres";
    case TagKind::Instrument: return "instruments";
    case TagKind::Tempo: return "tempos";
  }
  throw std::invalid_argument("unknown tag kind");
}

// ---- corpus ----------------------------------------------------------------

namespace {

const std::vector<std::string> kCaptionTemplates = {
    "A {tempo} {genre} piece featuring {instrument}.",
    "This {genre} track is {tempo} and built around the {instrument}.",
    "The {instrument} carries this {tempo} {genre} song.",
    "We hear a {genre} tune with {instrument}, played at a {tempo} pace.",
};

const std::vector<std::string> kDistractors = {
    "The style traces back to dance halls of the early twentieth century.",
    "Many listeners first heard this sound on late night radio.",
    "Recording technology changed how such pieces were produced.",
    "Critics once dismissed the form before it found wide acclaim.",
    "Record labels promoted similar releases across several decades.",
    "The composer reportedly wrote it during a long winter.",
    "Festivals in the seventies helped spread the tradition.",
    "Archive notes describe a small studio session.",
};

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string render_caption(Rng& rng, const std::string& genre, const std::string& instrument,
                           const std::string& tempo, std::size_t distractors) {
  std::string body = kCaptionTemplates[rng.below(kCaptionTemplates.size())];
  body = replace_all(body, "{genre}", genre);
  body = replace_all(body, "{instrument}", instrument);
  body = replace_all(body, "{tempo}", tempo);
  std::vector<std::size_t> order(kDistractors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::string> parts{body};
  for (std::size_t i = 0; i < distractors; ++i) parts.push_back(kDistractors[order[i]]);
  // The tag sentence lands at a random slot among the distractors.
  const std::size_t slot = rng.below(parts.size());
  std::swap(parts[0], parts[slot]);
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace

bool is_eval_combination(std::size_t genre, std::size_t instrument, std::size_t tempo) {
  return (genre + 2 * instrument + 3 * tempo) % 5 == 0;
}

std::vector<SynthClip> gen_corpus(const CorpusConfig& config) {
  if (config.clips < 1) throw std::invalid_argument("gen_corpus: need at least one clip");
  const TagVocabulary vocab = TagVocabulary::standard(config.genres, config.instruments);
  struct Combo {
    std::size_t genre, instrument, tempo;
  };
  std::vector<Combo> combos;
  for (std::size_t g = 0; g < config.genres; ++g) {
    for (std::size_t i = 0; i < config.instruments; ++i) {
      for (std::size_t t = 0; t < vocab.tempos.size(); ++t) {
        const bool held_out = is_eval_combination(g, i, t);
        if (config.split == CorpusSplit::All || (config.split == CorpusSplit::Eval) == held_out) {
          combos.push_back({g, i, t});
        }
      }
    }
  }
  if (combos.empty()) throw std::invalid_argument("gen_corpus: split has no tag combinations");

  const Rng root(config.seed);
  std::vector<SynthClip> clips;
  clips.reserve(config.clips);
  for (std::size_t k = 0; k < config.clips; ++k) {
    Rng rng = root.split("clip", config.first_id + k);
    const Combo c = combos[rng.below(combos.size())];
    SynthClip clip;
    clip.id = config.first_id + k;
    clip.recipe_seed = rng.next_u64();
    clip.genre = c.genre;
    clip.instrument = c.instrument;
    clip.tempo = c.tempo;
    clip.genre_tag = vocab.genres[c.genre];
    clip.instrument_tag = vocab.instruments[c.instrument];
    clip.tempo_tag = vocab.tempos[c.tempo];
    clip.caption = render_caption(rng, clip.genre_tag, clip.instrument_tag, clip.tempo_tag,
                                  1 + rng.below(3));
    clip.qa = {{std::string(kGenreQuestion), clip.genre_tag},
               {std::string(kInstrumentQuestion), clip.instrument_tag},
               {std::string(kTempoQuestion), clip.tempo_tag}};
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ---- synthesis -------------------------------------------------------------

namespace {

struct Voice {
  double base_hz;
  std::vector<double> harmonics;
  double attack;      // seconds
  double decay_tau;   // seconds; 0 means sustained
  double vibrato_hz;
  double vibrato_depth;
};

const std::vector<Voice> kVoices = {
    {196.0, {1.0, 0.5, 0.33, 0.25, 0.2, 0.17, 0.14, 0.12}, 0.005, 0.12, 0.0, 0.0},  // guitar
    {587.0, {1.0, 0.4, 0.15, 0.05}, 0.06, 0.0, 5.0, 0.005},                        // flute
    {233.0, {1.0, 0.0, 0.6, 0.0, 0.4, 0.0, 0.25, 0.0, 0.15}, 0.03, 0.0, 0.0, 0.0},  // clarinet
    {131.0, {1.0, 0.8, 0.6, 0.5, 0.4, 0.3}, 0.01, 0.0, 0.0, 0.0},                  // organ
    {392.0, {1.0, 0.5, 0.33, 0.25, 0.2, 0.17, 0.14, 0.12, 0.11, 0.1, 0.09, 0.08}, 0.08, 0.0, 6.0,
     0.01},  // violin
};

struct Note {
  double start;
  double duration;
  double ratio;  // pitch relative to the clip root
};

constexpr double kRoomTone = 0.03;
constexpr double kThird = 1.2599210498948732;  // 2^(4/12)
constexpr double kFifth = 1.4983070768766815;  // 2^(7/12)

std::vector<Note> genre_notes(std::size_t genre, double beat, double offset, double length,
                              std::vector<double>& bursts) {
  std::vector<Note> notes;
  switch (genre) {
    case 0:  // steady
      for (double t = offset - beat; t < length; t += beat) notes.push_back({t, 0.8 * beat, 1.0});
      break;
    case 1:  // swing
      for (double t = offset - beat; t < length; t += beat) {
        notes.push_back({t, 0.6 * beat, 1.0});
        notes.push_back({t + beat * 2.0 / 3.0, 0.3 * beat, kFifth});
      }
      break;
    case 2: {  // arpeggio
      const double cycle[4] = {1.0, kThird, kFifth, 2.0};
      std::size_t k = 0;
      for (double t = offset - beat; t < length; t += beat / 2.0, ++k) {
        notes.push_back({t, 0.45 * beat, cycle[k % 4]});
      }
      break;
    }
    case 3:  // drone
      notes.push_back({-0.1, length + 0.2, 1.0});
      break;
    case 4:  // offbeat with percussive bursts
      for (double t = offset - beat; t < length; t += beat) {
        notes.push_back({t + beat / 2.0, 0.3 * beat, 1.0});
        bursts.push_back(t);
      }
      break;
    case 5:  // chords
      for (double t = offset - 2.0 * beat; t < length; t += 2.0 * beat) {
        for (double r : {1.0, kThird, kFifth}) notes.push_back({t, 1.8 * beat, r});
      }
      break;
    default:
      throw std::invalid_argument("synthesize: genre index outside the recipe pool");
  }
  return notes;
}

}  // namespace

std::size_t clip_samples(const FrontendConfig& frontend) {
  return frontend.window + 111 * frontend.hop;
}

Waveform synthesize(const SynthClip& clip, const FrontendConfig& frontend) {
  if (clip.instrument >= kVoices.size()) {
    throw std::invalid_argument("synthesize: instrument index outside the recipe pool");
  }
  Rng rng(clip.recipe_seed);
  const Voice& voice = kVoices[clip.instrument];
  const double rate = frontend.sample_rate;
  const std::size_t n = clip_samples(frontend);
  const double length = static_cast<double>(n) / rate;
  const double root = voice.base_hz * rng.uniform(0.95, 1.05);
  const double beat = (clip.tempo == 0 ? 0.30 : 0.22) * rng.uniform(0.97, 1.03);
  const double offset = rng.uniform(0.0, beat);
  std::vector<double> bursts;
  const std::vector<Note> notes = genre_notes(clip.genre, beat, offset, length, bursts);

  std::vector<double> out(n, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double release = 0.02;
  for (const Note& note : notes) {
    const double f0 = root * note.ratio;
    const double phase0 = rng.uniform(0.0, two_pi);
    const auto first = static_cast<std::ptrdiff_t>(std::max(0.0, std::ceil(note.start * rate)));
    const auto last = static_cast<std::ptrdiff_t>(
        std::min(static_cast<double>(n), std::ceil((note.start + note.duration + release) * rate)));
    for (std::ptrdiff_t s = first; s < last; ++s) {
      const double t = static_cast<double>(s) / rate;
      const double local = t - note.start;
      double env = std::min(1.0, local / voice.attack);
      if (voice.decay_tau > 0.0) env *= std::exp(-local / voice.decay_tau);
      if (local > note.duration) env *= std::max(0.0, 1.0 - (local - note.duration) / release);
      if (clip.genre == 3) env *= 0.6 + 0.4 * std::sin(two_pi * 0.8 * t);
      const double vib = voice.vibrato_depth * std::sin(two_pi * voice.vibrato_hz * t);
      double value = 0.0;
      for (std::size_t h = 0; h < voice.harmonics.size(); ++h) {
        const double fh = f0 * static_cast<double>(h + 1);
        if (fh >= rate / 2.0 || voice.harmonics[h] == 0.0) continue;
        value += voice.harmonics[h] *
                 std::sin(phase0 * static_cast<double>(h + 1) + two_pi * fh * (local + vib / two_pi));
      }
      out[static_cast<std::size_t>(s)] += env * value;
    }
  }
  for (double b : bursts) {
    const auto first = static_cast<std::ptrdiff_t>(std::max(0.0, std::ceil(b * rate)));
    const auto last =
        static_cast<std::ptrdiff_t>(std::min(static_cast<double>(n), std::ceil((b + 0.05) * rate)));
    for (std::ptrdiff_t s = first; s < last; ++s) {
      const double local = static_cast<double>(s) / rate - b;
      out[static_cast<std::size_t>(s)] += 1.5 * std::exp(-local / 0.012) * rng.normal();
    }
  }
  // Quiet stationary room tone, one partial per mel band centre.
  const double low_mel = hz_to_mel(frontend.f_min);
  const double top_mel = hz_to_mel(frontend.upper_frequency());
  for (std::size_t b = 0; b < frontend.mel_bins; ++b) {
    const double hz = mel_to_hz(low_mel + (top_mel - low_mel) * (static_cast<double>(b) + 1.0) /
                                              static_cast<double>(frontend.mel_bins + 1));
    const double phase = rng.uniform(0.0, two_pi);
    for (std::size_t s = 0; s < n; ++s) {
      out[s] += kRoomTone * std::sin(phase + two_pi * hz * static_cast<double>(s) / rate);
    }
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : out) v *= 0.8 / peak;
  }
  return Waveform{std::move(out), rate};
}

// ---- corpus files ----------------------------------------------------------

std::string corpus_to_jsonl(std::span<const SynthClip> clips) {
  std::string out;
  for (const SynthClip& c : clips) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["seed"] = c.recipe_seed;
    j["genre"] = c.genre;
    j["instrument"] = c.instrument;
    j["tempo"] = c.tempo;
    j["tags"] = {c.genre_tag, c.instrument_tag, c.tempo_tag};
    j["caption"] = c.caption;
    nlohmann::ordered_json qa = nlohmann::ordered_json::array();
    for (const QaPair& p : c.qa) qa.push_back({p.question, p.answer});
    j["qa"] = qa;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SynthClip> corpus_from_jsonl(std::string_view text) {
  std::vector<SynthClip> clips;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SynthClip c;
      c.id = j.at("id").get<std::size_t>();
      c.recipe_seed = j.at("seed").get<std::uint64_t>();
      c.genre = j.at("genre").get<std::size_t>();
      c.instrument = j.at("instrument").get<std::size_t>();
      c.tempo = j.at("tempo").get<std::size_t>();
      const auto& tags = j.at("tags");
      c.genre_tag = tags.at(0).get<std::string>();
      c.instrument_tag = tags.at(1).get<std::string>();
      c.tempo_tag = tags.at(2).get<std::string>();
      c.caption = j.at("caption").get<std::string>();
      for (const auto& p : j.at("qa")) c.qa.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
      clips.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return clips;
}

// ---- question-answer formatting ------------------------------------------

std::string to_string(DataMode mode) {
  switch (mode) {
    case DataMode::RawCaption: return "RawCaption";
    case DataMode::GptQa: return "GptQa";
    case DataMode::Both: return "Both";
    case DataMode::Finetune: return "Finetune";
  }
  throw std::invalid_argument("unknown data mode");
}

DataMode parse_data_mode(const std::string& name) {
  for (DataMode m : {DataMode::RawCaption, DataMode::GptQa, DataMode::Both, DataMode::Finetune}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown data mode '" + name + "'");
}

std::vector<QaExample> format_qa(const SynthClip& clip, DataMode mode) {
  if (clip.qa.empty()) throw std::invalid_argument("format_qa: clip has no QA pairs");
  std::vector<QaExample> out;
  const bool raw = mode != DataMode::GptQa;
  const bool qa = mode != DataMode::RawCaption;
  if (raw) {
    out.push_back({clip.id, true, std::string(kCaptionQuestion), clip.caption,
                   make_qa_sequence(kCaptionQuestion, clip.caption)});
  }
  if (qa) {
    for (const QaPair& p : clip.qa) {
      out.push_back({clip.id, false, p.question, p.answer, make_qa_sequence(p.question, p.answer)});
    }
  }
  return out;
}

// ---- prompts ---------------------------------------------------------------

std::string to_string(PromptStrategy strategy) {
  switch (strategy) {
    case PromptStrategy::PromptOnly: return "PromptOnly";
    case PromptStrategy::PromptTagsList: return "PromptTagsList";
    case PromptStrategy::PromptTagsListOneWord: return "PromptTagsListOneWord";
    case PromptStrategy::PromptAllCandidates: return "PromptAllCandidates";
  }
  throw std::invalid_argument("unknown prompt strategy");
}

PromptStrategy parse_prompt_strategy(const std::string& name) {
  for (PromptStrategy s : {PromptStrategy::PromptOnly, PromptStrategy::PromptTagsList,
                           PromptStrategy::PromptTagsListOneWord, PromptStrategy::PromptAllCandidates}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown prompt strategy '" + name + "'");
}

OutputMode output_mode(PromptStrategy strategy) {
  switch (strategy) {
    case PromptStrategy::PromptOnly:
    case PromptStrategy::PromptTagsList: return OutputMode::Sentence;
    case PromptStrategy::PromptTagsListOneWord: return OutputMode::OneHot;
    case PromptStrategy::PromptAllCandidates: return OutputMode::NotApplicable;
  }
  throw std::invalid_argument("unknown prompt strategy");
}

Postprocess postprocess(PromptStrategy strategy) {
  switch (strategy) {
    case PromptStrategy::PromptOnly:
    case PromptStrategy::PromptTagsList: return Postprocess::Similarity;
    case PromptStrategy::PromptTagsListOneWord: return Postprocess::None;
    case PromptStrategy::PromptAllCandidates: return Postprocess::LogLikelihood;
  }
  throw std::invalid_argument("unknown prompt strategy");
}

namespace {

std::string join(std::span<const std::string> items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

std::vector<Prompt> build_prompt(PromptStrategy strategy, std::string_view question,
                                 std::span<const std::string> candidates, std::string_view list_label) {
  if (strategy != PromptStrategy::PromptOnly && candidates.empty()) {
    throw std::invalid_argument("build_prompt: " + to_string(strategy) + " needs candidates");
  }
  const std::string q(question);
  switch (strategy) {
    case PromptStrategy::PromptOnly:
      return {Prompt{q, "", 0}};
    case PromptStrategy::PromptTagsList:
      return {Prompt{q + " The " + std::string(list_label) + " include " + join(candidates) + ".", "", 0}};
    case PromptStrategy::PromptTagsListOneWord:
      return {Prompt{q + " Answer one word from " + join(candidates) + ".", "", 0}};
    case PromptStrategy::PromptAllCandidates: {
      std::vector<Prompt> out;
      const std::string lead = q + " The answer is ";
      for (const std::string& c : candidates) {
        if (c.empty()) throw std::invalid_argument("build_prompt: empty candidate");
        out.push_back(Prompt{lead + c + ".", c, lead.size()});
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown prompt strategy");
}

// ---- text pretraining corpus ---------------------------------------------

std::vector<TokenSequence> text_corpus(std::uint64_t seed, std::size_t count, const TagVocabulary& vocab) {
  const Rng root(seed);
  std::vector<TokenSequence> out;
  out.reserve(count);
  const TagKind kinds[3] = {TagKind::Genre, TagKind::Instrument, TagKind::Tempo};
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = root.split("text", k);
    const std::size_t g = rng.below(vocab.genres.size());
    const std::size_t i = rng.below(vocab.instruments.size());
    const std::size_t t = rng.below(vocab.tempos.size());
    const std::string genre = vocab.words(TagKind::Genre, rng.below(2) == 1)[g];
    const std::string instrument = vocab.words(TagKind::Instrument, rng.below(2) == 1)[i];
    const std::string caption = render_caption(rng, genre, instrument, vocab.tempos[t], 0);
    const TagKind kind = kinds[rng.below(3)];
    const std::size_t truth = kind == TagKind::Genre ? g : kind == TagKind::Instrument ? i : t;
    const std::string context = caption + " " + std::string(question_for(kind));
    // Short answers after the separator use the plain tag words; full
    // sentences use the synonyms. Only the answer itself carries loss.
    if (rng.uniform() < 0.5) {
      out.push_back(make_qa_sequence(context, vocab.words(kind, false)[truth]));
      continue;
    }
    const std::string formal = vocab.words(kind, true)[truth];
    TokenSequence seq = make_text_sequence(context + " The answer is " + formal + ".");
    const std::size_t scored = formal.size() + 2;  // word, full stop, EOS
    for (std::size_t p = 1; p + scored < seq.size(); ++p) seq.roles[p] = Role::Question;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace jmla
