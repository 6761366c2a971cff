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

// Zero-shot evaluation: candidate log-likelihood ranking, greedy generative
// strategies with similarity matching, and tagging metrics.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jmla/data.hpp"
#include "jmla/model.hpp"
#include "jmla/trainer.hpp"

namespace jmla {

// Next-token logits [T x V] for a token prefix.
using LogitsFn = std::function<Tensor(std::span<const int> ids)>;

// Audio summaries for one clip, computed once and reused for every candidate.
struct AudioContext {
  std::vector<Tensor> summaries;
};

AudioContext make_context(const JmlaModel& model, const EncoderStack& stack,
                          std::span<const GridCell> cells);
LogitsFn audio_logits(const JmlaModel& model, const AudioContext& context);
LogitsFn text_logits(const FusionDecoder& decoder);

struct ScoreOptions {
  bool length_normalize = true;
};

struct CandidateScore {
  std::string candidate;
  double log_likelihood = 0.0;  // summed over the candidate tokens, <= 0
  std::size_t tokens = 0;
  bool normalized = true;
  double score = 0.0;  // log_likelihood, divided by tokens when normalized
};

// Sum of log p(ids[t] | ids[<t]) for t in [begin, begin + count).
double span_log_likelihood(const LogitsFn& model, std::span<const int> ids, std::size_t begin,
                           std::size_t count);

CandidateScore score_candidate(const LogitsFn& model, std::string_view question,
                               std::string_view candidate, const ScoreOptions& options = {});

// Highest score wins; ties go to the lexicographically smallest candidate.
std::string rank_and_predict(const LogitsFn& model, std::string_view question,
                             std::span<const std::string> candidates,
                             const ScoreOptions& options = {},
                             std::vector<CandidateScore>* scores = nullptr);

inline constexpr std::size_t kDecodeCap = 32;

// Greedy continuation of [SOS] prompt [SEP] up to EOS or the length cap.
std::string greedy_decode(const LogitsFn& model, std::string_view prompt,
                          std::size_t max_tokens = kDecodeCap);

// Lowercased alphanumeric words.
std::vector<std::string> words_of(std::string_view text);
// F1 of the word multisets; 0 when either side is empty.
double token_f1(std::string_view a, std::string_view b);
// Argmax of token_f1, ties to the lexicographically smallest candidate.
std::string most_similar(std::string_view text, std::span<const std::string> candidates);

struct GenerativeResult {
  std::string generated;
  std::string prediction;
};

GenerativeResult eval_generative(const LogitsFn& model, PromptStrategy strategy,
                                 std::string_view question, std::span<const std::string> candidates,
                                 std::string_view list_label = "genres");

// ---- metrics ---------------------------------------------------------------

double accuracy(std::span<const std::string> predictions, std::span<const std::string> truths);
// Step-function average precision with tied scores grouped into one threshold.
double average_precision(std::span<const double> scores, std::span<const bool> labels);
// Mann-Whitney AUC with average ranks for ties.
double roc_auc(std::span<const double> scores, std::span<const bool> labels);

struct TagMetrics {
  std::string tag;
  bool included = false;
  double average_precision = 0.0;
  double auc = 0.0;
};

struct MultiLabelReport {
  std::vector<TagMetrics> tags;
  double macro_ap = 0.0;
  double macro_auc = 0.0;
  std::vector<std::string> warnings;
};

// scores[clip][tag], truth[clip][tag]. Tags without positives or negatives
// are excluded from the macro averages with a warning.
MultiLabelReport compute_metrics(const std::vector<std::vector<double>>& scores,
                                 const std::vector<std::vector<bool>>& truth,
                                 std::span<const std::string> tag_names);

// Binary pair score: summed log-likelihood of "<tag>." after "The answer is "
// minus that of "not <tag>.".
double binary_tag_score(const LogitsFn& model, std::string_view question, std::string_view tag);

// ---- reports ---------------------------------------------------------------

struct ClipPrediction {
  std::size_t clip_id = 0;
  std::string strategy;
  std::string truth;
  std::string prediction;
  std::string generated;
};

struct StrategyAccuracy {
  std::string strategy;
  double accuracy = 0.0;
  std::size_t clips = 0;
};

struct EvalReport {
  std::vector<ClipPrediction> predictions;
  std::vector<StrategyAccuracy> accuracies;
  std::optional<MultiLabelReport> multilabel;

  double accuracy_of(PromptStrategy strategy) const;
  std::string to_jsonl() const;
  std::string summary_table() const;
};

struct EvalConfig {
  TagKind kind = TagKind::Genre;
  bool synonyms = true;  // candidates from the unseen synonym set
  std::vector<PromptStrategy> strategies{PromptStrategy::PromptAllCandidates};
  bool multilabel = false;
  ScoreOptions scoring{};
};

EvalReport evaluate(const JmlaModel& model, std::span<const SynthClip> clips, const AudioBank& bank,
                    const TagVocabulary& vocab, const EvalConfig& config);

}  // namespace jmla
