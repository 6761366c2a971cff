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

#include <cmath>
#include <map>
#include <memory>

#include "jmla/eval.hpp"
#include "jmla/trainer.hpp"

namespace jmla {
namespace {

// Next-token logits that depend only on the previous token: a tiny bigram
// model whose log-probabilities the tests can sum by hand.
double bigram_logit(int prev, int next) { return std::sin(0.37 * prev + 1.3 * next) * 2.0; }

Tensor bigram_logits(std::span<const int> ids) {
  std::vector<double> v(ids.size() * kVocabSize);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (int n = 0; n < kVocabSize; ++n) v[t * kVocabSize + n] = bigram_logit(ids[t], n);
  }
  return Tensor::matrix(ids.size(), kVocabSize, std::move(v));
}

double bigram_log_prob(int prev, int next) {
  double z = 0.0;
  for (int n = 0; n < kVocabSize; ++n) z += std::exp(bigram_logit(prev, n));
  return bigram_logit(prev, next) - std::log(z);
}

// Emits a fixed byte string after the prompt, then EOS.
LogitsFn scripted(std::string reply, std::size_t prompt_len) {
  return [reply, prompt_len](std::span<const int> ids) {
    std::vector<double> v(ids.size() * kVocabSize, 0.0);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const std::size_t k = t + 1 - prompt_len;
      const int next = t + 1 >= prompt_len && k < reply.size() ? static_cast<unsigned char>(reply[k]) : kEos;
      v[t * kVocabSize + next] = 10.0;
    }
    return Tensor::matrix(ids.size(), kVocabSize, std::move(v));
  };
}

TEST(ScoreCandidate, HandSummedBigram) {
  const LogitsFn fn = bigram_logits;
  const std::string question = "Q?";
  for (const std::string cand : {"ab", "xyz"}) {
    const std::string text = question + " The answer is " + cand + ".";
    double ref = 0.0;
    const std::size_t begin = question.size() + std::string(" The answer is ").size();
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const int prev = static_cast<unsigned char>(text[begin + i - 1]);
      ref += bigram_log_prob(prev, static_cast<unsigned char>(cand[i]));
    }
    const CandidateScore raw = score_candidate(fn, question, cand, {false});
    EXPECT_NEAR(raw.log_likelihood, ref, 1e-12);
    EXPECT_EQ(raw.score, raw.log_likelihood);
    const CandidateScore norm = score_candidate(fn, question, cand);
    EXPECT_NEAR(norm.score, ref / static_cast<double>(cand.size()), 1e-12);
    EXPECT_LE(norm.log_likelihood, 0.0);
  }
  EXPECT_THROW(score_candidate(fn, question, ""), std::invalid_argument);
}

TEST(ScoreCandidate, DuplicateIsPure) {
  const LogitsFn fn = bigram_logits;
  EXPECT_EQ(score_candidate(fn, "Q", "soul").score, score_candidate(fn, "Q", "soul").score);
}

TEST(RankAndPredict, TiesAndDuplicates) {
  const LogitsFn flat = [](std::span<const int> ids) { return Tensor::zeros({ids.size(), std::size_t(kVocabSize)}); };
  const std::vector<std::string> both = {"soul", "soul"};
  EXPECT_EQ(rank_and_predict(flat, "Q", both), "soul");
  const std::vector<std::string> tie = {"metal", "chart", "drift"};
  EXPECT_EQ(rank_and_predict(flat, "Q", tie), "chart");
}

TEST(RankAndPredict, ArgmaxInvariantToShift) {
  const std::vector<std::string> cands = {"chart", "soul", "lounge", "drift"};
  std::vector<CandidateScore> scores;
  const std::string pick = rank_and_predict(bigram_logits, "What?", cands, {}, &scores);
  ASSERT_EQ(scores.size(), cands.size());
  auto best = std::max_element(scores.begin(), scores.end(),
                               [](const auto& a, const auto& b) { return a.score < b.score; });
  EXPECT_EQ(pick, best->candidate);
  // A constant added to every logit leaves log-softmax, and so the pick, fixed.
  const LogitsFn shifted = [](std::span<const int> ids) {
    return add(bigram_logits(ids), Tensor::full({ids.size(), std::size_t(kVocabSize)}, 7.5));
  };
  EXPECT_EQ(rank_and_predict(shifted, "What?", cands), pick);
}

TEST(RankAndPredict, RandomModelIsNearUniform) {
  const std::vector<std::string> cands = {"a0", "b1", "c2", "d3", "e4", "f5", "g6", "h7", "i8", "j9"};
  std::map<std::string, int> counts;
  const int clips = 2000;
  for (int clip = 0; clip < clips; ++clip) {
    const LogitsFn fn = [clip](std::span<const int> ids) {
      Rng rng(static_cast<std::uint64_t>(clip) * 1000003ull + ids.size() * 7919ull + static_cast<std::uint64_t>(ids.back()));
      std::vector<double> v(ids.size() * kVocabSize);
      for (double& x : v) x = rng.normal();
      return Tensor::matrix(ids.size(), kVocabSize, std::move(v));
    };
    ++counts[rank_and_predict(fn, "Q", cands)];
  }
  double chi2 = 0.0;
  const double expected = clips / 10.0;
  for (const auto& c : cands) chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
  EXPECT_LT(chi2, 27.877);  // chi-square, 9 dof, p = 0.001
}

TEST(Generative, OneWordAndSimilarity) {
  const std::vector<std::string> cands = {"pop", "blues"};
  const std::string one_prompt = build_prompt(PromptStrategy::PromptTagsListOneWord, kGenreQuestion, cands)[0].text;
  const GenerativeResult one =
      eval_generative(scripted("pop", one_prompt.size() + 2), PromptStrategy::PromptTagsListOneWord, kGenreQuestion, cands);
  EXPECT_EQ(one.generated, "pop");
  EXPECT_EQ(one.prediction, "pop");
  const std::string only_prompt(kGenreQuestion);
  const GenerativeResult sent = eval_generative(scripted("this is a blues track", only_prompt.size() + 2),
                                                PromptStrategy::PromptOnly, kGenreQuestion, cands);
  EXPECT_EQ(sent.generated, "this is a blues track");
  EXPECT_EQ(sent.prediction, "blues");
  EXPECT_THROW(eval_generative(bigram_logits, PromptStrategy::PromptAllCandidates, kGenreQuestion, cands),
               std::invalid_argument);
}

TEST(Generative, DecodeRespectsCap) {
  const LogitsFn never_ends = [](std::span<const int> ids) {
    std::vector<double> v(ids.size() * kVocabSize, 0.0);
    for (std::size_t t = 0; t < ids.size(); ++t) v[t * kVocabSize + 'a'] = 5.0;
    return Tensor::matrix(ids.size(), kVocabSize, std::move(v));
  };
  EXPECT_EQ(greedy_decode(never_ends, "Q").size(), kDecodeCap);
}

TEST(Similarity, TokenF1) {
  EXPECT_NEAR(token_f1("this is a blues track", "blues"), 2.0 * (1.0 / 5.0) * 1.0 / (1.0 / 5.0 + 1.0), 1e-15);
  EXPECT_EQ(token_f1("pop", "blues"), 0.0);
  const std::vector<std::string> cands = {"pop", "blues"};
  EXPECT_EQ(most_similar("Blues!", cands), "blues");
}

// std::vector<bool> has no contiguous storage to view.
struct Labels {
  explicit Labels(const std::vector<bool>& y) : data(new bool[y.size()]), size(y.size()) {
    std::copy(y.begin(), y.end(), data.get());
  }
  std::span<const bool> view() const { return {data.get(), size}; }
  std::unique_ptr<bool[]> data;
  std::size_t size;
};

// Exhaustive references for the metric oracles.
double brute_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

double brute_ap(const std::vector<double>& s, const std::vector<bool>& y) {
  // Sum over distinct thresholds of (recall gain) x (precision at threshold).
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double positives = 0.0;
  for (bool b : y) positives += b;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        n += 1.0;
        tp += y[i];
      }
    }
    ap += (tp / positives - prev_recall) * (tp / n);
    prev_recall = tp / positives;
  }
  return ap;
}

TEST(Metrics, PerfectAndInverted) {
  const std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
  const std::vector<bool> y = {true, true, false, false};
  EXPECT_EQ(average_precision(s, Labels(y).view()), 1.0);
  EXPECT_EQ(roc_auc(s, Labels(y).view()), 1.0);
  EXPECT_EQ(roc_auc(s, Labels({false, false, true, true}).view()), 0.0);
}

TEST(Metrics, MatchBruteForce) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(16);
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 6.0) / 6.0;  // coarse grid forces ties
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = true;
    y[1] = false;
    const Labels ys(y);
    EXPECT_NEAR(average_precision(s, ys.view()), brute_ap(s, y), 1e-12);
    EXPECT_NEAR(roc_auc(s, ys.view()), brute_auc(s, y), 1e-12);
  }
}

TEST(Metrics, AccuracyAndDegenerateTags) {
  const std::vector<std::string> p = {"a", "b", "c", "a"}, t = {"a", "b", "a", "a"};
  EXPECT_EQ(accuracy(p, t), 0.75);
  const std::vector<std::vector<double>> scores = {{0.9, 0.1, 0.5}, {0.2, 0.8, 0.4}, {0.6, 0.3, 0.7}};
  const std::vector<std::vector<bool>> truth = {{true, false, true}, {false, true, true}, {true, false, true}};
  const std::vector<std::string> names = {"x", "y", "z"};
  const MultiLabelReport r = compute_metrics(scores, truth, names);
  ASSERT_EQ(r.tags.size(), 3u);
  EXPECT_TRUE(r.tags[0].included);
  EXPECT_FALSE(r.tags[2].included);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.macro_auc, 1.0);
  EXPECT_EQ(r.macro_ap, 1.0);
}

TEST(Evaluate, ZeroGatesIgnoreAudio) {
  // With every gate at zero, predictions cannot depend on the clip.
  const auto clips = gen_corpus({41, 6, 6, 5, CorpusSplit::Eval, 100});
  MaeConfig mc;
  mc.encoder_layers = 1;
  mc.width = 8;
  mc.heads = 2;
  mc.decoder_layers = 1;
  mc.decoder_width = 8;
  mc.decoder_heads = 2;
  Rng rng(5);
  const MaeEncoder enc = make_mae(mc, rng).encoder;
  DecoderConfig dc;
  dc.layers = 1;
  dc.width = 8;
  dc.heads = 2;
  const FusionDecoder dec = make_decoder(dc, rng);
  ResamplerConfig rc;
  rc.latents = 2;
  rc.heads = 2;
  rc.depth = 1;
  const JmlaModel model = assemble_model(enc, dec, TopologyVariant::DenseDec, rc, rng);
  const AudioBank bank = build_audio_bank(clips, enc);
  EvalConfig cfg;
  cfg.strategies = {PromptStrategy::PromptAllCandidates, PromptStrategy::PromptOnly};
  const EvalReport report = evaluate(model, clips, bank, TagVocabulary::standard(6, 5), cfg);
  ASSERT_EQ(report.predictions.size(), 2 * clips.size());
  std::map<std::string, std::string> first;
  for (const auto& p : report.predictions) {
    auto [it, inserted] = first.emplace(p.strategy, p.prediction);
    if (!inserted) EXPECT_EQ(it->second, p.prediction);
  }
  for (const auto& a : report.accuracies) {
    EXPECT_GE(a.accuracy, 0.0);
    EXPECT_LE(a.accuracy, 1.0);
  }
  const EvalReport again = evaluate(model, clips, bank, TagVocabulary::standard(6, 5), cfg);
  EXPECT_EQ(report.to_jsonl(), again.to_jsonl());
}

}  // namespace
}  // namespace jmla
