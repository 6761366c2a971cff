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

#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "jmla/data.hpp"
#include "jmla/frontend.hpp"
#include "jmla/nn.hpp"
#include "jmla/rng.hpp"

namespace jmla {
namespace {

std::vector<std::string> words_in(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

TEST(Tokenizer, EmptyAndRoundTrip) {
  const TokenSequence empty = make_text_sequence("");
  EXPECT_EQ(empty.ids, (std::vector<int>{kSos, kEos}));
  EXPECT_EQ(detokenize(tokenize("pop, blues")), "pop, blues");
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s(rng.below(40), '\0');
    for (char& c : s) c = static_cast<char>(rng.below(256));
    ASSERT_EQ(detokenize(tokenize(s)), s);
  }
}

TEST(Tokenizer, QaSequenceRoles) {
  const TokenSequence seq = make_qa_sequence("Q?", "ab");
  EXPECT_EQ(seq.ids, (std::vector<int>{kSos, 'Q', '?', kSep, 'a', 'b', kEos}));
  const std::vector<int> t = seq.targets();
  EXPECT_EQ(t, (std::vector<int>{kIgnore, kIgnore, kIgnore, 'a', 'b', kEos, kIgnore}));
  EXPECT_EQ(seq.roles.back(), Role::Answer);
  seq.validate();
  const TokenSequence padded = pad_to(seq, 10);
  EXPECT_EQ(padded.size(), 10u);
  EXPECT_EQ(padded.unpadded_size(), 7u);
  EXPECT_EQ(padded.targets()[8], kIgnore);
  padded.validate();
  EXPECT_THROW(pad_to(seq, 3), std::invalid_argument);
}

TEST(Tokenizer, LossIgnoresQuestionTargets) {
  // Relabelling question tokens cannot change the answer-only loss.
  Rng rng(2);
  std::vector<double> v(7 * kVocabSize);
  for (double& x : v) x = rng.normal();
  const Tensor logits = Tensor::matrix(7, kVocabSize, v);
  const TokenSequence a = make_qa_sequence("Q?", "ab");
  const TokenSequence b = make_qa_sequence("Zx", "ab");
  EXPECT_EQ(cross_entropy(logits, a.targets(), kIgnore).item(), cross_entropy(logits, b.targets(), kIgnore).item());
}

TEST(Vocabulary, DisjointSynonyms) {
  const TagVocabulary v = TagVocabulary::standard(6, 5);
  for (TagKind k : {TagKind::Genre, TagKind::Instrument}) {
    std::set<std::string> a(v.words(k, false).begin(), v.words(k, false).end());
    for (const auto& w : v.words(k, true)) EXPECT_FALSE(a.count(w)) << w;
    EXPECT_EQ(v.words(k, false).size(), v.words(k, true).size());
  }
  EXPECT_THROW(TagVocabulary::standard(1, 5), std::invalid_argument);
  EXPECT_THROW(TagVocabulary::standard(6, 99), std::invalid_argument);
}

TEST(Vocabulary, SynonymsShareNoPrefixWithPlainWords) {
  const TagVocabulary v = TagVocabulary::standard(6, 5);
  for (TagKind k : {TagKind::Genre, TagKind::Instrument}) {
    for (const auto& plain : v.words(k, false)) {
      for (const auto& syn : v.words(k, true)) {
        EXPECT_NE(plain.front(), syn.front()) << plain << " / " << syn;
        EXPECT_EQ(plain.find(syn), std::string::npos);
        EXPECT_EQ(syn.find(plain), std::string::npos);
      }
    }
  }
}

std::string scored_text(const TokenSequence& seq) {
  std::string out;
  for (std::size_t p = 0; p < seq.size(); ++p) {
    if (seq.roles[p] == Role::Answer && seq.ids[p] < 256) out += static_cast<char>(seq.ids[p]);
  }
  return out;
}

TEST(TextCorpus, AnswerOnlyLossAndRegisters) {
  const TagVocabulary v = TagVocabulary::standard(6, 5);
  const auto corpus = text_corpus(8, 300, v);
  EXPECT_EQ(corpus.size(), 300u);
  EXPECT_EQ(detokenize(text_corpus(8, 300, v)[17].ids), detokenize(corpus[17].ids));
  std::set<std::string> plain, formal;
  for (TagKind k : {TagKind::Genre, TagKind::Instrument, TagKind::Tempo}) {
    for (const auto& w : v.words(k, false)) plain.insert(w);
    for (const auto& w : v.words(k, true)) formal.insert(w + ".");
  }
  std::size_t short_answers = 0, sentences = 0;
  for (const TokenSequence& seq : corpus) {
    seq.validate();
    const std::string scored = scored_text(seq);
    const bool has_sep = std::find(seq.ids.begin(), seq.ids.end(), kSep) != seq.ids.end();
    if (has_sep) {
      ++short_answers;
      EXPECT_TRUE(plain.count(scored)) << scored;
    } else {
      ++sentences;
      EXPECT_TRUE(formal.count(scored)) << scored;
      EXPECT_NE(detokenize(seq.ids).find("The answer is " + scored), std::string::npos);
    }
    EXPECT_EQ(seq.roles.back(), Role::Answer);
  }
  EXPECT_GT(short_answers, 100u);
  EXPECT_GT(sentences, 100u);
}

TEST(Corpus, DeterministicAndConstructive) {
  const CorpusConfig cfg{7, 40, 6, 5, CorpusSplit::All, 0};
  const std::vector<SynthClip> a = gen_corpus(cfg), b = gen_corpus(cfg);
  EXPECT_EQ(corpus_to_jsonl(a), corpus_to_jsonl(b));
  for (const SynthClip& c : a) {
    for (const QaPair& qa : c.qa) EXPECT_NE(c.caption.find(qa.answer), std::string::npos) << c.caption;
    EXPECT_GE(c.qa.size(), 2u);
  }
  EXPECT_THROW(gen_corpus({7, 0, 6, 5, CorpusSplit::All, 0}), std::invalid_argument);
  EXPECT_THROW(gen_corpus({7, 4, 1, 5, CorpusSplit::All, 0}), std::invalid_argument);
}

TEST(Corpus, SplitsAreDisjointCombinations) {
  const auto train = gen_corpus({3, 120, 6, 5, CorpusSplit::Train, 0});
  const auto eval = gen_corpus({4, 60, 6, 5, CorpusSplit::Eval, 1000});
  for (const auto& c : train) EXPECT_FALSE(is_eval_combination(c.genre, c.instrument, c.tempo));
  for (const auto& c : eval) EXPECT_TRUE(is_eval_combination(c.genre, c.instrument, c.tempo));
  // Held-out tag names: no synonym word ever appears in a training answer.
  const TagVocabulary v = TagVocabulary::standard(6, 5);
  for (const auto& c : train) {
    for (const QaExample& ex : format_qa(c, DataMode::Both)) {
      for (TagKind k : {TagKind::Genre, TagKind::Instrument}) {
        for (const auto& w : v.words(k, true)) EXPECT_EQ(ex.answer.find(w), std::string::npos) << ex.answer;
      }
    }
  }
  // Every genre still appears in evaluation.
  std::set<std::size_t> genres;
  for (const auto& c : eval) genres.insert(c.genre);
  EXPECT_EQ(genres.size(), 6u);
}

TEST(Corpus, JsonlRoundTrip) {
  const auto clips = gen_corpus({5, 12, 6, 5, CorpusSplit::All, 3});
  EXPECT_EQ(corpus_from_jsonl(corpus_to_jsonl(clips)), clips);
  EXPECT_THROW(corpus_from_jsonl("{not json}\n"), std::exception);
}

double correlation(const Spectrogram& a, const Spectrogram& b) {
  const std::size_t n = std::min(a.valid_frames, b.valid_frames) * a.bins;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a.values[i] - ma) * (b.values[i] - mb);
    saa += (a.values[i] - ma) * (a.values[i] - ma);
    sbb += (b.values[i] - mb) * (b.values[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Corpus, SameTagsCorrelateMore) {
  const auto clips = gen_corpus({11, 180, 6, 5, CorpusSplit::All, 0});
  // Group by full tag assignment; compare within-group against different-genre pairs.
  double same = 0.0, other = 0.0;
  std::size_t n_same = 0, n_other = 0;
  std::vector<Spectrogram> mels;
  for (const auto& c : clips) mels.push_back(log_mel(synthesize(c)));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    for (std::size_t j = i + 1; j < clips.size(); ++j) {
      const bool tags_equal = clips[i].genre == clips[j].genre && clips[i].instrument == clips[j].instrument &&
                              clips[i].tempo == clips[j].tempo;
      if (tags_equal) {
        same += correlation(mels[i], mels[j]);
        ++n_same;
      } else if (clips[i].genre != clips[j].genre) {
        other += correlation(mels[i], mels[j]);
        ++n_other;
      }
    }
  }
  ASSERT_GT(n_same, 0u);
  EXPECT_GT(same / n_same, other / n_other);
}

TEST(Synthesize, DeterministicBoundedAndLengthed) {
  const auto clips = gen_corpus({2, 6, 6, 5, CorpusSplit::All, 0});
  for (const auto& c : clips) {
    const Waveform w = synthesize(c);
    EXPECT_EQ(w.samples.size(), clip_samples(FrontendConfig{}));
    for (double s : w.samples) ASSERT_LE(std::fabs(s), 1.0);
    EXPECT_EQ(w.samples, synthesize(c).samples);
  }
  EXPECT_EQ(patchify(log_mel(synthesize(clips[0]))).count(), 28u);
}

TEST(FormatQa, Modes) {
  SynthClip clip = gen_corpus({9, 1, 6, 5, CorpusSplit::All, 0})[0];
  const auto qa = format_qa(clip, DataMode::GptQa);
  ASSERT_EQ(qa.size(), 3u);
  EXPECT_EQ(qa[0].question, kGenreQuestion);
  EXPECT_EQ(qa[0].answer, clip.genre_tag);
  EXPECT_EQ(qa[1].question, kInstrumentQuestion);
  EXPECT_EQ(qa[1].answer, clip.instrument_tag);
  const auto raw = format_qa(clip, DataMode::RawCaption);
  ASSERT_EQ(raw.size(), 1u);
  EXPECT_EQ(raw[0].question, kCaptionQuestion);
  EXPECT_EQ(raw[0].answer, clip.caption);
  EXPECT_TRUE(raw[0].raw_caption);
  for (const auto& q : qa) EXPECT_GT(raw[0].answer.size(), q.answer.size());
  EXPECT_EQ(format_qa(clip, DataMode::Both).size(), raw.size() + qa.size());
  for (DataMode m : {DataMode::RawCaption, DataMode::GptQa, DataMode::Both, DataMode::Finetune}) {
    EXPECT_EQ(parse_data_mode(to_string(m)), m);
  }
}

TEST(FormatQa, PopGuitarExample) {
  SynthClip clip;
  clip.genre_tag = "pop";
  clip.instrument_tag = "guitar";
  clip.tempo_tag = "slow";
  clip.caption = "A slow pop piece featuring guitar.";
  clip.qa = {{std::string(kGenreQuestion), "pop"}, {std::string(kInstrumentQuestion), "guitar"},
             {std::string(kTempoQuestion), "slow"}};
  const auto qa = format_qa(clip, DataMode::GptQa);
  EXPECT_EQ(qa[0].question, "What is the genre of the music?");
  EXPECT_EQ(qa[0].answer, "pop");
  EXPECT_EQ(qa[1].question, "What instrument is playing?");
  EXPECT_EQ(qa[1].answer, "guitar");
}

TEST(Prompts, Strategies) {
  const std::vector<std::string> gtzan = {"blues", "classical", "country", "disco", "hiphop",
                                          "jazz",  "metal",     "pop",     "reggae", "rock"};
  const auto all = build_prompt(PromptStrategy::PromptAllCandidates, kGenreQuestion, gtzan);
  ASSERT_EQ(all.size(), 10u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].text, "What is the genre of the music? The answer is " + gtzan[i] + ".");
    EXPECT_EQ(all[i].text.substr(all[i].candidate_begin, gtzan[i].size()), gtzan[i]);
  }
  const auto only = build_prompt(PromptStrategy::PromptOnly, kGenreQuestion, gtzan);
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].text, kGenreQuestion);
  const auto list = build_prompt(PromptStrategy::PromptTagsList, kGenreQuestion, gtzan);
  EXPECT_NE(list[0].text.find("The genres include blues, classical"), std::string::npos);
  const auto one = build_prompt(PromptStrategy::PromptTagsListOneWord, kGenreQuestion, gtzan);
  EXPECT_NE(one[0].text.find("Answer one word from "), std::string::npos);
  for (const auto& g : gtzan) {
    std::size_t hits = 0;
    for (const auto& w : words_in(one[0].text)) hits += w == g;
    EXPECT_EQ(hits, 1u) << g;
  }
  EXPECT_THROW(build_prompt(PromptStrategy::PromptAllCandidates, kGenreQuestion, {}), std::invalid_argument);
  EXPECT_THROW(build_prompt(PromptStrategy::PromptTagsList, kGenreQuestion, {}), std::invalid_argument);
}

TEST(Prompts, Table2Combinations) {
  EXPECT_EQ(output_mode(PromptStrategy::PromptOnly), OutputMode::Sentence);
  EXPECT_EQ(postprocess(PromptStrategy::PromptOnly), Postprocess::Similarity);
  EXPECT_EQ(output_mode(PromptStrategy::PromptTagsList), OutputMode::Sentence);
  EXPECT_EQ(postprocess(PromptStrategy::PromptTagsList), Postprocess::Similarity);
  EXPECT_EQ(output_mode(PromptStrategy::PromptTagsListOneWord), OutputMode::OneHot);
  EXPECT_EQ(postprocess(PromptStrategy::PromptTagsListOneWord), Postprocess::None);
  EXPECT_EQ(output_mode(PromptStrategy::PromptAllCandidates), OutputMode::NotApplicable);
  EXPECT_EQ(postprocess(PromptStrategy::PromptAllCandidates), Postprocess::LogLikelihood);
  for (PromptStrategy s : {PromptStrategy::PromptOnly, PromptStrategy::PromptTagsList,
                           PromptStrategy::PromptTagsListOneWord, PromptStrategy::PromptAllCandidates}) {
    EXPECT_EQ(parse_prompt_strategy(to_string(s)), s);
  }
}

}  // namespace
}  // namespace jmla
