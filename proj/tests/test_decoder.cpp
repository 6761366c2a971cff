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

#include <set>

#include "jmla/data.hpp"
#include "jmla/gradcheck.hpp"
#include "jmla/model.hpp"
#include "jmla/optim.hpp"

namespace jmla {
namespace {

DecoderConfig small_decoder() {
  DecoderConfig c;
  c.layers = 4;
  c.width = 16;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.max_len = 32;
  return c;
}

MaeConfig small_encoder() {
  MaeConfig c;
  c.encoder_layers = 4;
  c.width = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.decoder_layers = 1;
  c.decoder_width = 8;
  c.decoder_heads = 2;
  return c;
}

PatchSequence random_patches(std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  Spectrogram s;
  s.frames = frames;
  s.bins = 32;
  s.valid_frames = frames;
  s.values.resize(frames * 32);
  for (double& v : s.values) v = rng.normal();
  return patchify(s);
}

std::vector<int> random_ids(std::size_t n, Rng& rng) {
  std::vector<int> ids(n);
  for (int& t : ids) t = static_cast<int>(rng.below(kVocabSize));
  return ids;
}

struct Fixture {
  MaeEncoder encoder;
  FusionDecoder text;
  JmlaModel model;
};

Fixture make_fixture(TopologyVariant variant, std::uint64_t seed) {
  Rng rng(seed);
  Rng enc_rng = rng.split("enc"), dec_rng = rng.split("dec"), asm_rng = rng.split("asm");
  Fixture f;
  f.encoder = make_mae(small_encoder(), enc_rng).encoder;
  f.text = make_decoder(small_decoder(), dec_rng);
  ResamplerConfig rc;
  rc.latents = 2;
  rc.heads = 2;
  rc.depth = 1;
  rc.mlp_ratio = 2;
  f.model = assemble_model(f.encoder, f.text, variant, rc, asm_rng);
  return f;
}

TEST(Topology, Examples) {
  using S = InjectionSite;
  EXPECT_EQ(build_topology(TopologyVariant::Baseline, 4, 4).sites, (std::vector<S>{{4, 0, 1}}));
  EXPECT_EQ(build_topology(TopologyVariant::DenseDec, 4, 4).sites,
            (std::vector<S>{{4, 0, 1}, {4, 1, 2}, {4, 2, 3}, {4, 3, 4}}));
  EXPECT_EQ(build_topology(TopologyVariant::DenseEncDec, 4, 4).sites,
            (std::vector<S>{{1, 0, 1}, {2, 1, 2}, {3, 2, 3}, {4, 3, 4}}));
  EXPECT_EQ(build_topology(TopologyVariant::DenseEncDec, 4, 2).sites, (std::vector<S>{{2, 0, 1}, {4, 1, 2}}));
  EXPECT_THROW(build_topology(TopologyVariant::DenseEncDec, 2, 4), std::invalid_argument);
  EXPECT_THROW(build_topology(TopologyVariant::DenseDec, 0, 4), std::invalid_argument);
}

TEST(Topology, DescribeParseRoundTrip) {
  for (TopologyVariant v : {TopologyVariant::Baseline, TopologyVariant::DenseDec, TopologyVariant::DenseEncDec}) {
    const InjectionTopology t = build_topology(v, 4, 4);
    const InjectionTopology back = InjectionTopology::parse(t.describe());
    EXPECT_EQ(back.variant, v);
    EXPECT_EQ(back.sites, t.sites);
    EXPECT_EQ(parse_topology_variant(to_string(v)), v);
  }
}

TEST(Decoder, ZeroGateEquivalence) {
  Fixture f = make_fixture(TopologyVariant::DenseDec, 1);
  const PatchSequence patches = random_patches(32, 2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<int> ids = random_ids(1 + rng.below(20), rng);
    EXPECT_EQ(checksum(f.model.logits(patches, ids)), checksum(f.text.forward_text(ids)));
  }
}

TEST(Decoder, Causality) {
  Fixture f = make_fixture(TopologyVariant::DenseEncDec, 4);
  for (CrossBlock& c : f.model.decoder.cross) c.gate.mutable_values()[0] = 0.8;
  const PatchSequence patches = random_patches(32, 5);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> ids = random_ids(12, rng);
    const std::size_t t = rng.below(11);
    const Tensor base = f.model.logits(patches, ids);
    for (std::size_t j = t + 1; j < ids.size(); ++j) ids[j] = static_cast<int>(rng.below(kVocabSize));
    const Tensor changed = f.model.logits(patches, ids);
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t c = 0; c < base.cols(); ++c) ASSERT_NEAR(base(r, c), changed(r, c), 1e-12);
    }
  }
}

TEST(Decoder, AudioReachesEveryPosition) {
  Fixture f = make_fixture(TopologyVariant::Baseline, 7);
  f.model.decoder.cross[0].gate.mutable_values()[0] = 0.5;
  const std::vector<int> ids = {kSos, 'a', 'b', 'c'};
  const Tensor a = f.model.logits(random_patches(32, 8), ids);
  const Tensor b = f.model.logits(random_patches(32, 9), ids);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    double diff = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) diff = std::max(diff, std::fabs(a(r, c) - b(r, c)));
    EXPECT_GT(diff, 0.0) << r;
  }
}

TEST(Decoder, Errors) {
  Fixture f = make_fixture(TopologyVariant::DenseDec, 10);
  EXPECT_THROW(f.model.decoder.forward(std::vector<int>{kSos}, {}), std::invalid_argument);
  Rng rng(11);
  EXPECT_THROW(f.text.forward_text(random_ids(33, rng)), std::invalid_argument);
  EXPECT_THROW(f.text.forward_text(std::vector<int>{kVocabSize}), std::out_of_range);
}

TEST(Partition, Counts) {
  const Fixture base = make_fixture(TopologyVariant::Baseline, 12);
  const Fixture dense = make_fixture(TopologyVariant::DenseDec, 12);
  const ParamPartition pb = partition_params(base.model);
  const ParamPartition pd = partition_params(dense.model);
  EXPECT_EQ(pb.resamplers, 1u);
  EXPECT_EQ(pb.cross_blocks, 1u);
  EXPECT_EQ(pb.gates, 1u);
  EXPECT_EQ(pd.cross_blocks, 4u * pb.cross_blocks);
  EXPECT_EQ(pd.resamplers, 4u);

  // The two sets partition everything.
  const NamedParams all = dense.model.parameters();
  EXPECT_EQ(pd.frozen.size() + pd.trainable.size(), all.size());
  std::set<const void*> frozen, trainable;
  for (const auto& [name, t] : pd.frozen) frozen.insert(t.id());
  for (const auto& [name, t] : pd.trainable) trainable.insert(t.id());
  for (const auto& [name, t] : all) EXPECT_NE(frozen.count(t.id()), trainable.count(t.id())) << name;
  EXPECT_EQ(pd.frozen_values + pd.trainable_values, parameter_count(all));
  for (const auto& [name, t] : pd.trainable) {
    EXPECT_TRUE(name.rfind("resampler", 0) == 0 || name.find("cross") != std::string::npos) << name;
  }
}

TEST(Partition, FreezeDiscipline) {
  Fixture f = make_fixture(TopologyVariant::DenseDec, 13);
  const ParamPartition p = partition_params(f.model);
  const std::uint64_t frozen_before = checksum(p.frozen), trainable_before = checksum(p.trainable);
  AdamW opt(tensors_of(p.trainable), AdamWConfig{1e-2});
  const PatchSequence patches = random_patches(32, 14);
  const TokenSequence seq = make_qa_sequence("Q?", "ab");
  const std::vector<int> targets = seq.targets();
  for (int step = 0; step < 10; ++step) {
    opt.zero_grad();
    backward(cross_entropy(f.model.logits(patches, seq.ids), targets, kIgnore));
    opt.step();
  }
  EXPECT_EQ(checksum(p.frozen), frozen_before);
  EXPECT_NE(checksum(p.trainable), trainable_before);
  for (const auto& [name, t] : p.frozen) EXPECT_TRUE(t.grad().empty()) << name;
}

TEST(Decoder, FusedGradientCheck) {
  Fixture f = make_fixture(TopologyVariant::Baseline, 15);
  f.model.decoder.cross[0].gate.mutable_values()[0] = 0.5;
  const PatchSequence patches = random_patches(32, 16);
  const TokenSequence seq = make_qa_sequence("Q", "xy");
  const std::vector<int> targets = seq.targets();
  NamedParams trainable = partition_params(f.model).trainable;
  set_requires_grad(trainable, true);
  const GradCheckResult r = finite_diff_check(
      [&] { return cross_entropy(f.model.logits(patches, seq.ids), targets, kIgnore); }, trainable);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_name;
}

}  // namespace
}  // namespace jmla
