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

#include "jmla/gradcheck.hpp"
#include "jmla/optim.hpp"
#include "jmla/resampler.hpp"

namespace jmla {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor::matrix(r, c, std::move(v));
}

std::vector<GridCell> grid(std::size_t p) {
  std::vector<GridCell> cells;
  for (std::size_t i = 0; i < p; ++i) cells.push_back({i / 4, i % 4});
  return cells;
}

ResamplerConfig small_config() {
  ResamplerConfig c;
  c.latents = 3;
  c.width = 8;
  c.input_width = 12;
  c.heads = 2;
  c.depth = 2;
  c.mlp_ratio = 2;
  return c;
}

TEST(Resample, FixedShapeForAnyLength) {
  Rng rng(1);
  const Resampler r = make_resampler(small_config(), rng);
  for (std::size_t p : {1u, 4u, 16u, 64u}) {
    const Tensor h = resample(random_matrix(p, 12, rng), grid(p), r);
    EXPECT_EQ(h.shape(), (Shape{3, 8})) << p;
  }
}

TEST(Resample, DuplicatedRowsGiveSameSummary) {
  Rng rng(2);
  ResamplerConfig cfg = small_config();
  cfg.positional = false;
  const Resampler r = make_resampler(cfg, rng);
  const Tensor e = random_matrix(5, 12, rng);
  std::vector<std::size_t> twice;
  for (std::size_t i = 0; i < 5; ++i) {
    twice.push_back(i);
    twice.push_back(i);
  }
  const Tensor a = resample(e, {}, r);
  const Tensor b = resample(gather_rows(e, twice), {}, r);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-9);
}

TEST(Resample, PermutationInvariantWithoutPositions) {
  Rng rng(3);
  ResamplerConfig cfg = small_config();
  cfg.positional = false;
  const Resampler r = make_resampler(cfg, rng);
  const Tensor e = random_matrix(6, 12, rng);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  const Tensor a = resample(e, {}, r), b = resample(gather_rows(e, perm), {}, r);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-10);
}

void set(Tensor& t, std::vector<double> v) {
  auto m = t.mutable_values();
  std::copy(v.begin(), v.end(), m.begin());
}

TEST(Resample, HandComputedSingleLatent) {
  ResamplerConfig cfg;
  cfg.latents = 1;
  cfg.width = 2;
  cfg.input_width = 2;
  cfg.heads = 1;
  cfg.depth = 1;
  cfg.mlp_ratio = 1;
  cfg.positional = false;
  Rng rng(4);
  Resampler r = make_resampler(cfg, rng);
  ResamplerBlock& b = r.blocks[0];
  set(r.latents, {0.5, -0.25});
  // Identity query/key/value/output projections and a silent feed-forward.
  for (Linear* l : {&b.cross.query, &b.cross.key, &b.cross.value, &b.cross.output}) {
    set(l->weight, {1, 0, 0, 1});
    if (l->bias.defined()) set(l->bias, {0, 0});
  }
  std::fill(b.ff.down.weight.mutable_values().begin(), b.ff.down.weight.mutable_values().end(), 0.0);
  set(b.ff.down.bias, {0, 0});
  // Non-trivial norm affine so the normalized rows are not just +-1.
  set(b.media_norm.gain, {0.7, 1.3});
  set(b.media_norm.bias, {0.1, -0.2});
  set(b.latent_norm.gain, {2.0, 0.5});
  set(b.latent_norm.bias, {0.0, 0.3});

  const double rows[3][2] = {{1.0, 3.0}, {2.0, -1.0}, {0.5, 0.4}};
  auto ln = [](const double* x, const double* g, const double* bias, double out[2]) {
    const double mu = (x[0] + x[1]) / 2.0;
    const double var = ((x[0] - mu) * (x[0] - mu) + (x[1] - mu) * (x[1] - mu)) / 2.0;
    for (int i = 0; i < 2; ++i) out[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[i] + bias[i];
  };
  const double lat[2] = {0.5, -0.25};
  const double lg[2] = {2.0, 0.5}, lb[2] = {0.0, 0.3}, mg[2] = {0.7, 1.3}, mb[2] = {0.1, -0.2};
  double q[2];
  ln(lat, lg, lb, q);
  double kv[3][2], logits[3], z = 0.0;
  for (int i = 0; i < 3; ++i) {
    ln(rows[i], mg, mb, kv[i]);
    logits[i] = (q[0] * kv[i][0] + q[1] * kv[i][1]) / std::sqrt(2.0);
  }
  const double top = std::max({logits[0], logits[1], logits[2]});
  for (double& l : logits) z += (l = std::exp(l - top));
  double expect[2] = {lat[0], lat[1]};
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 2; ++c) expect[c] += logits[i] / z * kv[i][c];
  }

  const Tensor e = Tensor::matrix(3, 2, {1.0, 3.0, 2.0, -1.0, 0.5, 0.4});
  const Tensor h = resample(e, {}, r);
  EXPECT_NEAR(h(0, 0), expect[0], 1e-12);
  EXPECT_NEAR(h(0, 1), expect[1], 1e-12);
}

TEST(Resample, WidthMismatch) {
  Rng rng(5);
  const Resampler r = make_resampler(small_config(), rng);
  EXPECT_THROW(resample(random_matrix(4, 11, rng), grid(4), r), DimensionError);
  EXPECT_THROW(resample(random_matrix(4, 12, rng), grid(3), r), DimensionError);
}

TEST(Resample, GradientCheck) {
  Rng rng(6);
  ResamplerConfig cfg = small_config();
  cfg.depth = 1;
  Resampler r = make_resampler(cfg, rng);
  const Tensor e = random_matrix(5, 12, rng);
  NamedParams params;
  r.collect("r", params);
  set_requires_grad(params, true);
  const Tensor target = random_matrix(3, 8, rng);
  const GradCheckResult res =
      finite_diff_check([&] { return mean(mul(sub(resample(e, grid(5), r), target), sub(resample(e, grid(5), r), target))); }, params);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_name;
}

TEST(Resample, LatentsReceiveUpdates) {
  Rng rng(7);
  Resampler r = make_resampler(small_config(), rng);
  NamedParams params;
  r.collect("r", params);
  set_requires_grad(params, true);
  const std::uint64_t before = checksum(r.latents);
  AdamW opt(tensors_of(params), AdamWConfig{1e-2});
  backward(sum(resample(random_matrix(4, 12, rng), grid(4), r)));
  opt.step();
  EXPECT_NE(checksum(r.latents), before);
}

TEST(CrossFlops, ScalingContracts) {
  CrossCostQuery q;
  q.patches = 16;
  const CrossCost a = count_cross_flops(q);
  q.patches = 32;
  const CrossCost b = count_cross_flops(q);
  q.patches = 64;
  const CrossCost c = count_cross_flops(q);
  q.patches = 1024;
  const CrossCost d = count_cross_flops(q);
  EXPECT_EQ(static_cast<double>(b.resampler_kv) / static_cast<double>(a.resampler_kv), 2.0);
  EXPECT_EQ(a.decoder_cross, d.decoder_cross);
  EXPECT_GT(static_cast<double>(c.naive_prefix_attention) / static_cast<double>(a.naive_prefix_attention), 4.0);
  EXPECT_GT(c.naive_prefix_total, a.naive_prefix_total);
}

TEST(CrossFlops, ClosedForms) {
  CrossCostQuery q;
  q.patches = 16;
  q.latents = 8;
  q.width = 64;
  q.input_width = 64;
  q.depth = 2;
  q.text_len = 16;
  q.sites = 4;
  q.decoder_layers = 4;
  const CrossCost c = count_cross_flops(q);
  EXPECT_EQ(c.resampler_kv, 2u * 2u * 16u * 64u * 64u);
  EXPECT_EQ(c.naive_prefix_attention, 4u * 2u * 32u * 32u * 64u);
}

}  // namespace
}  // namespace jmla
