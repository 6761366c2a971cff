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

// Byte-level tokenizer, synthetic music-caption corpus with ground-truth tags,
// deterministic question-answer formatting and evaluation prompt construction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jmla/frontend.hpp"
#include "jmla/rng.hpp"

namespace jmla {

// ---- tokenizer -------------------------------------------------------------

inline constexpr int kSos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kSep = 259;  // separates the question from the answer
inline constexpr int kVocabSize = 260;
inline constexpr int kIgnore = -1;

enum class Role : std::uint8_t { Question, Answer, Pad };

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Role> roles;

  std::size_t size() const { return ids.size(); }
  // Number of positions before trailing padding.
  std::size_t unpadded_size() const;
  // Next-token targets aligned with ids: targets[t] predicts ids[t+1] and is
  // kIgnore unless position t+1 is an answer token.
  std::vector<int> targets() const;
  void validate() const;
};

// [SOS] bytes [EOS]
std::vector<int> tokenize(std::string_view text);
// Drops special ids, keeps bytes.
std::string detokenize(std::span<const int> ids);

// [SOS] question [SEP] answer [EOS]; answer bytes and EOS carry the loss.
TokenSequence make_qa_sequence(std::string_view question, std::string_view answer);
// [SOS] text [EOS]; every position after SOS carries the loss.
TokenSequence make_text_sequence(std::string_view text);
// Appends trailing PAD up to length.
TokenSequence pad_to(TokenSequence seq, std::size_t length);

// ---- tag vocabulary --------------------------------------------------------

enum class TagKind { Genre, Instrument, Tempo };

// Each tag class has a training word (set A) and an unseen synonym (set B)
// that names the same acoustic recipe.
struct TagVocabulary {
  std::vector<std::string> genres;
  std::vector<std::string> genre_synonyms;
  std::vector<std::string> instruments;
  std::vector<std::string> instrument_synonyms;
  std::vector<std::string> tempos;

  // Truncated to the requested sizes; errors below 2 or above the built-in pool.
  static TagVocabulary standard(std::size_t genre_count, std::size_t instrument_count);

  const std::vector<std::string>& words(TagKind kind, bool synonyms) const;
};

inline constexpr std::string_view kGenreQuestion = "What is the genre of the music?";
inline constexpr std::string_view kInstrumentQuestion = "What instrument is playing?";
inline constexpr std::string_view kTempoQuestion = "What is the tempo of the music?";
inline constexpr std::string_view kCaptionQuestion = "Describe the music.";

std::string_view question_for(TagKind kind);

// ---- corpus ----------------------------------------------------------------

struct QaPair {
  std::string question;
  std::string answer;
  bool operator==(const QaPair&) const = default;
};

struct SynthClip {
  std::size_t id = 0;
  std::uint64_t recipe_seed = 0;
  std::size_t genre = 0;
  std::size_t instrument = 0;
  std::size_t tempo = 0;  // 0 slow, 1 fast
  std::string genre_tag;
  std::string instrument_tag;
  std::string tempo_tag;
  std::string caption;
  std::vector<QaPair> qa;

  bool operator==(const SynthClip&) const = default;
};

enum class CorpusSplit { All, Train, Eval };

// True for the tag combinations reserved for held-out evaluation.
bool is_eval_combination(std::size_t genre, std::size_t instrument, std::size_t tempo);

struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t clips = 64;
  std::size_t genres = 6;
  std::size_t instruments = 5;
  CorpusSplit split = CorpusSplit::All;
  std::size_t first_id = 0;
};

std::vector<SynthClip> gen_corpus(const CorpusConfig& config);

// Renders the clip's recipe. Every call with the same clip is bit-identical.
Waveform synthesize(const SynthClip& clip, const FrontendConfig& frontend = {});
// Samples per clip: 112 analysis frames.
std::size_t clip_samples(const FrontendConfig& frontend);

// One clip per line as a JSON object.
std::string corpus_to_jsonl(std::span<const SynthClip> clips);
std::vector<SynthClip> corpus_from_jsonl(std::string_view text);

// ---- question-answer formatting ------------------------------------------

enum class DataMode { RawCaption, GptQa, Both, Finetune };

std::string to_string(DataMode mode);
DataMode parse_data_mode(const std::string& name);

struct QaExample {
  std::size_t clip_id = 0;
  bool raw_caption = false;
  std::string question;
  std::string answer;
  TokenSequence tokens;
};

// RawCaption: one (caption question, full caption) example. GptQa: one example
// per tag question. Both and Finetune: RawCaption followed by GptQa; the
// finetune phase split is applied by the training schedule.
std::vector<QaExample> format_qa(const SynthClip& clip, DataMode mode);

// ---- prompts ---------------------------------------------------------------

enum class PromptStrategy { PromptOnly, PromptTagsList, PromptTagsListOneWord, PromptAllCandidates };
enum class OutputMode { Sentence, OneHot, NotApplicable };
enum class Postprocess { Similarity, None, LogLikelihood };

std::string to_string(PromptStrategy strategy);
PromptStrategy parse_prompt_strategy(const std::string& name);
OutputMode output_mode(PromptStrategy strategy);
Postprocess postprocess(PromptStrategy strategy);

struct Prompt {
  std::string text;
  std::string candidate;           // AllCandidates only
  std::size_t candidate_begin = 0;  // byte offset of the candidate in text
};

// list_label names the candidate class in the TagsList sentence, e.g. "genres".
std::vector<Prompt> build_prompt(PromptStrategy strategy, std::string_view question,
                                 std::span<const std::string> candidates,
                                 std::string_view list_label = "genres");

std::string_view list_label_for(TagKind kind);

// ---- text pretraining corpus ---------------------------------------------

// Caption-grounded question answering for the stand-in language model.
// Captions mix both synonym sets; short answers after the separator use the
// plain words and "The answer is ..." sentences the synonyms, so the model
// learns both name the same tag. Only answer tokens carry loss.
std::vector<TokenSequence> text_corpus(std::uint64_t seed, std::size_t count,
                                       const TagVocabulary& vocab);

}  // namespace jmla
