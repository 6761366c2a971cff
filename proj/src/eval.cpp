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

#include "jmla/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace jmla {

AudioContext make_context(const JmlaModel& model, const EncoderStack& stack,
                          std::span<const GridCell> cells) {
  NoGradGuard no_grad;
  return AudioContext{model.summarize(stack, cells)};
}

LogitsFn audio_logits(const JmlaModel& model, const AudioContext& context) {
  return [&model, &context](std::span<const int> ids) {
    return model.decoder.forward(ids, context.summaries);
  };
}

LogitsFn text_logits(const FusionDecoder& decoder) {
  return [&decoder](std::span<const int> ids) { return decoder.forward_text(ids); };
}

namespace {

double log_prob(const Tensor& logits, std::size_t row, int id) {
  const std::size_t vocab = logits.cols();
  const auto values = logits.values().subspan(row * vocab, vocab);
  const double peak = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return values[static_cast<std::size_t>(id)] - peak - std::log(total);
}

std::vector<int> prompt_ids(std::string_view prompt) {
  std::vector<int> ids{kSos};
  for (unsigned char c : prompt) ids.push_back(c);
  ids.push_back(kSep);
  return ids;
}

}  // namespace

double span_log_likelihood(const LogitsFn& model, std::span<const int> ids, std::size_t begin,
                           std::size_t count) {
  if (begin == 0 || begin + count > ids.size()) {
    throw std::out_of_range("span_log_likelihood: span outside the scored sequence");
  }
  NoGradGuard no_grad;
  const Tensor logits = model(ids.first(begin + count));
  double total = 0.0;
  for (std::size_t t = begin; t < begin + count; ++t) total += log_prob(logits, t - 1, ids[t]);
  return total;
}

CandidateScore score_candidate(const LogitsFn& model, std::string_view question,
                               std::string_view candidate, const ScoreOptions& options) {
  if (candidate.empty()) throw std::invalid_argument("score_candidate: empty candidate");
  const std::string cand(candidate);
  const std::vector<Prompt> prompts =
      build_prompt(PromptStrategy::PromptAllCandidates, question, std::span<const std::string>(&cand, 1));
  const std::vector<int> ids = tokenize(prompts[0].text);
  CandidateScore s;
  s.candidate = cand;
  s.tokens = cand.size();
  s.normalized = options.length_normalize;
  s.log_likelihood = span_log_likelihood(model, ids, 1 + prompts[0].candidate_begin, s.tokens);
  s.score = s.normalized ? s.log_likelihood / static_cast<double>(s.tokens) : s.log_likelihood;
  return s;
}

std::string rank_and_predict(const LogitsFn& model, std::string_view question,
                             std::span<const std::string> candidates, const ScoreOptions& options,
                             std::vector<CandidateScore>* scores) {
  if (candidates.empty()) throw std::invalid_argument("rank_and_predict: no candidates");
  std::vector<CandidateScore> all;
  for (const std::string& c : candidates) all.push_back(score_candidate(model, question, c, options));
  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].score > all[best].score ||
        (all[i].score == all[best].score && all[i].candidate < all[best].candidate)) {
      best = i;
    }
  }
  std::string winner = all[best].candidate;
  if (scores != nullptr) *scores = std::move(all);
  return winner;
}

std::string greedy_decode(const LogitsFn& model, std::string_view prompt, std::size_t max_tokens) {
  NoGradGuard no_grad;
  std::vector<int> ids = prompt_ids(prompt);
  std::vector<int> generated;
  for (std::size_t step = 0; step < max_tokens; ++step) {
    const Tensor logits = model(ids);
    const std::size_t vocab = logits.cols();
    const auto row = logits.values().subspan((ids.size() - 1) * vocab, vocab);
    const int next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (next == kEos) break;
    generated.push_back(next);
    ids.push_back(next);
  }
  return detokenize(generated);
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double token_f1(std::string_view a, std::string_view b) {
  const std::vector<std::string> wa = words_of(a);
  const std::vector<std::string> wb = words_of(b);
  if (wa.empty() || wb.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& w : wb) ++counts[w];
  std::size_t overlap = 0;
  for (const auto& w : wa) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(wa.size() + wb.size());
}

std::string most_similar(std::string_view text, std::span<const std::string> candidates) {
  if (candidates.empty()) throw std::invalid_argument("most_similar: no candidates");
  std::size_t best = 0;
  double best_f1 = token_f1(text, candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double f1 = token_f1(text, candidates[i]);
    if (f1 > best_f1 || (f1 == best_f1 && candidates[i] < candidates[best])) {
      best = i;
      best_f1 = f1;
    }
  }
  return candidates[best];
}

GenerativeResult eval_generative(const LogitsFn& model, PromptStrategy strategy,
                                 std::string_view question, std::span<const std::string> candidates,
                                 std::string_view list_label) {
  if (strategy == PromptStrategy::PromptAllCandidates) {
    throw std::invalid_argument("eval_generative: AllCandidates is a ranking strategy");
  }
  const std::vector<Prompt> prompts = build_prompt(strategy, question, candidates, list_label);
  GenerativeResult r;
  r.generated = greedy_decode(model, prompts[0].text);
  if (output_mode(strategy) == OutputMode::OneHot) {
    const std::vector<std::string> words = words_of(r.generated);
    if (!words.empty()) {
      for (const std::string& c : candidates) {
        if (words.front() == c) {
          r.prediction = c;
          return r;
        }
      }
    }
  }
  r.prediction = most_similar(r.generated, candidates);
  return r;
}

// ---- metrics ---------------------------------------------------------------

double accuracy(std::span<const std::string> predictions, std::span<const std::string> truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw std::invalid_argument("accuracy: need equal-length nonempty lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

void check_binary_inputs(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores/labels length mismatch");
  const auto positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw std::invalid_argument("metrics: need at least one positive and one negative");
  }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const bool> labels) {
  check_binary_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  double ap = 0.0;
  std::size_t seen = 0, hits = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_hits = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_hits += labels[order[j]];
      ++j;
    }
    seen += j - i;
    hits += group_hits;
    ap += static_cast<double>(group_hits) / positives * static_cast<double>(hits) / static_cast<double>(seen);
    i = j;
  }
  return ap;
}

double roc_auc(std::span<const double> scores, std::span<const bool> labels) {
  check_binary_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> ranks(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  double rank_sum = 0.0;
  double pos = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      rank_sum += ranks[i];
      pos += 1.0;
    }
  }
  const double neg = static_cast<double>(labels.size()) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MultiLabelReport compute_metrics(const std::vector<std::vector<double>>& scores,
                                 const std::vector<std::vector<bool>>& truth,
                                 std::span<const std::string> tag_names) {
  if (scores.size() != truth.size() || scores.empty()) {
    throw std::invalid_argument("compute_metrics: scores and truth must cover the same clips");
  }
  const std::size_t tags = tag_names.size();
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c].size() != tags || truth[c].size() != tags) {
      throw std::invalid_argument("compute_metrics: inconsistent tag set at clip " + std::to_string(c));
    }
  }
  MultiLabelReport report;
  double ap_sum = 0.0, auc_sum = 0.0;
  std::size_t included = 0;
  for (std::size_t t = 0; t < tags; ++t) {
    std::vector<double> column(scores.size());
    std::vector<char> labels_storage(scores.size());
    std::size_t positives = 0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
      column[c] = scores[c][t];
      labels_storage[c] = truth[c][t];
      positives += truth[c][t];
    }
    TagMetrics m;
    m.tag = tag_names[t];
    if (positives == 0 || positives == scores.size()) {
      report.warnings.push_back("tag '" + m.tag + "' has no " + (positives == 0 ? "positives" : "negatives") +
                                "; excluded from macro averages");
      report.tags.push_back(m);
      continue;
    }
    std::unique_ptr<bool[]> labels(new bool[scores.size()]);
    for (std::size_t c = 0; c < scores.size(); ++c) labels[c] = labels_storage[c] != 0;
    const std::span<const bool> label_span(labels.get(), scores.size());
    m.included = true;
    m.average_precision = average_precision(column, label_span);
    m.auc = roc_auc(column, label_span);
    ap_sum += m.average_precision;
    auc_sum += m.auc;
    ++included;
    report.tags.push_back(m);
  }
  if (included > 0) {
    report.macro_ap = ap_sum / static_cast<double>(included);
    report.macro_auc = auc_sum / static_cast<double>(included);
  }
  return report;
}

double binary_tag_score(const LogitsFn& model, std::string_view question, std::string_view tag) {
  const std::string lead = std::string(question) + " The answer is ";
  const std::string yes = std::string(tag) + ".";
  const std::string no = "not " + std::string(tag) + ".";
  const std::vector<int> yes_ids = tokenize(lead + yes);
  const std::vector<int> no_ids = tokenize(lead + no);
  return span_log_likelihood(model, yes_ids, 1 + lead.size(), yes.size()) -
         span_log_likelihood(model, no_ids, 1 + lead.size(), no.size());
}

// ---- reports ---------------------------------------------------------------

double EvalReport::accuracy_of(PromptStrategy strategy) const {
  const std::string name = to_string(strategy);
  for (const StrategyAccuracy& a : accuracies) {
    if (a.strategy == name) return a.accuracy;
  }
  throw std::out_of_range("eval report has no strategy " + name);
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const ClipPrediction& p : predictions) {
    nlohmann::ordered_json j;
    j["record"] = "prediction";
    j["clip"] = p.clip_id;
    j["strategy"] = p.strategy;
    j["truth"] = p.truth;
    j["prediction"] = p.prediction;
    j["generated"] = p.generated;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  }
  for (const StrategyAccuracy& a : accuracies) {
    nlohmann::ordered_json j;
    j["record"] = "accuracy";
    j["strategy"] = a.strategy;
    j["clips"] = a.clips;
    j["accuracy"] = a.accuracy;
    out += j.dump() + "\n";
  }
  if (multilabel) {
    for (const TagMetrics& m : multilabel->tags) {
      nlohmann::ordered_json j;
      j["record"] = "tag";
      j["tag"] = m.tag;
      j["included"] = m.included;
      j["ap"] = m.average_precision;
      j["auc"] = m.auc;
      out += j.dump() + "\n";
    }
    nlohmann::ordered_json j;
    j["record"] = "macro";
    j["ap"] = multilabel->macro_ap;
    j["auc"] = multilabel->macro_auc;
    j["warnings"] = multilabel->warnings;
    out += j.dump() + "\n";
  }
  return out;
}

std::string EvalReport::summary_table() const {
  std::ostringstream os;
  os << std::left << std::setw(24) << "strategy" << std::right << std::setw(8) << "clips" << std::setw(10)
     << "acc" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const StrategyAccuracy& a : accuracies) {
    os << std::left << std::setw(24) << a.strategy << std::right << std::setw(8) << a.clips << std::setw(10)
       << a.accuracy << "\n";
  }
  if (multilabel) {
    os << "macro AP  " << multilabel->macro_ap << "\n";
    os << "macro AUC " << multilabel->macro_auc << "\n";
    for (const std::string& w : multilabel->warnings) os << "warning: " << w << "\n";
  }
  return os.str();
}

EvalReport evaluate(const JmlaModel& model, std::span<const SynthClip> clips, const AudioBank& bank,
                    const TagVocabulary& vocab, const EvalConfig& config) {
  if (clips.empty()) throw std::invalid_argument("evaluate: no clips");
  EvalReport report;
  const std::vector<std::string>& candidates = vocab.words(config.kind, config.synonyms);
  const std::string question(question_for(config.kind));
  std::vector<std::size_t> hits(config.strategies.size(), 0);

  std::vector<std::string> tag_names;
  std::vector<TagKind> tag_kinds;
  std::vector<std::size_t> tag_index;
  for (TagKind kind : {TagKind::Genre, TagKind::Instrument, TagKind::Tempo}) {
    const auto& words = vocab.words(kind, true);
    for (std::size_t i = 0; i < words.size(); ++i) {
      tag_names.push_back(words[i]);
      tag_kinds.push_back(kind);
      tag_index.push_back(i);
    }
  }
  std::vector<std::vector<double>> ml_scores;
  std::vector<std::vector<bool>> ml_truth;

  for (const SynthClip& clip : clips) {
    const AudioContext ctx = make_context(model, bank.stack(clip.id), bank.patch(clip.id).cells);
    const LogitsFn fn = audio_logits(model, ctx);
    const std::size_t truth_index =
        config.kind == TagKind::Genre ? clip.genre : config.kind == TagKind::Instrument ? clip.instrument : clip.tempo;
    const std::string& truth = candidates.at(truth_index);
    for (std::size_t s = 0; s < config.strategies.size(); ++s) {
      const PromptStrategy strategy = config.strategies[s];
      ClipPrediction p{clip.id, to_string(strategy), truth, "", ""};
      if (strategy == PromptStrategy::PromptAllCandidates) {
        p.prediction = rank_and_predict(fn, question, candidates, config.scoring);
      } else {
        GenerativeResult g = eval_generative(fn, strategy, question, candidates, list_label_for(config.kind));
        p.prediction = g.prediction;
        p.generated = g.generated;
      }
      hits[s] += p.prediction == truth;
      report.predictions.push_back(std::move(p));
    }
    if (config.multilabel) {
      std::vector<double> row;
      std::vector<bool> truth_row;
      for (std::size_t t = 0; t < tag_names.size(); ++t) {
        row.push_back(binary_tag_score(fn, question_for(tag_kinds[t]), tag_names[t]));
        const std::size_t actual = tag_kinds[t] == TagKind::Genre        ? clip.genre
                                   : tag_kinds[t] == TagKind::Instrument ? clip.instrument
                                                                         : clip.tempo;
        truth_row.push_back(actual == tag_index[t]);
      }
      ml_scores.push_back(std::move(row));
      ml_truth.push_back(std::move(truth_row));
    }
  }
  for (std::size_t s = 0; s < config.strategies.size(); ++s) {
    report.accuracies.push_back({to_string(config.strategies[s]),
                                 static_cast<double>(hits[s]) / static_cast<double>(clips.size()), clips.size()});
  }
  if (config.multilabel) report.multilabel = compute_metrics(ml_scores, ml_truth, tag_names);
  return report;
}

}  // namespace jmla
