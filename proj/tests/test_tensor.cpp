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
#include <limits>
#include <set>

#include "jmla/gradcheck.hpp"
#include "jmla/nn.hpp"
#include "jmla/optim.hpp"
#include "jmla/rng.hpp"
#include "jmla/tensor.hpp"

namespace jmla {
namespace {

constexpr int kIgnoreId = -1;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = false) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor::matrix(r, c, std::move(v), grad);
}

TEST(Tensor, RejectsNonFiniteAndShapeMismatch) {
  EXPECT_THROW(Tensor({2}, {1.0, std::nan("")}), NumericError);
  EXPECT_THROW(Tensor({2}, {1.0, std::numeric_limits<double>::infinity()}), NumericError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Matmul, IdentityAndHandProduct) {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor out = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})).item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  const Tensor a = random_matrix(3, 4, rng);
  const Tensor b = random_matrix(4, 2, rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 4; ++k) ref += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), ref, 1e-12);
    }
  }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformStableAndNaive) {
  const Tensor u = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor s = softmax(Tensor({2}, {1000, 0}), 0);
  EXPECT_NEAR(s.values()[0], 1.0, 1e-12);
  EXPECT_NEAR(s.values()[1], 0.0, 1e-12);

  Rng rng(2);
  std::vector<double> x(7);
  for (double& v : x) v = rng.normal(0.0, 3.0);
  const Tensor p = softmax(Tensor({7}, x), 0);
  double z = 0.0;
  for (double v : x) z += std::exp(v);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(p.values()[i], std::exp(x[i]) / z, 1e-12);
}

TEST(Softmax, RowsSumToOneProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = scale(random_matrix(4, 9, rng), rng.uniform(0.1, 200.0));
    const Tensor p = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_GE(p(r, c), 0.0);
        total += p(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, Examples) {
  const Tensor g = Tensor::full({3}, 1.0), b = Tensor::zeros({3});
  const Tensor flat = layer_norm(Tensor::matrix(1, 3, {5, 5, 5}), g, b);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);
  const Tensor out = layer_norm(Tensor::matrix(1, 2, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
  EXPECT_NEAR(out.values()[0], 1.0, 1e-12);
  EXPECT_NEAR(out.values()[1], -1.0, 1e-12);

  Rng rng(4);
  const Tensor x = scale(random_matrix(1, 16, rng), 7.0);
  const Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
  double mu = 0.0, var = 0.0;
  for (double v : y.values()) mu += v;
  mu /= 16.0;
  for (double v : y.values()) var += (v - mu) * (v - mu);
  var /= 16.0;
  EXPECT_NEAR(mu, 0.0, 1e-8);
  EXPECT_NEAR(var, 1.0, 1e-8);
}

TEST(CrossEntropy, Examples) {
  const int one[] = {2};
  EXPECT_NEAR(cross_entropy(Tensor::zeros({1, 4}), one, kIgnoreId).item(), std::log(4.0), 1e-12);
  EXPECT_LT(cross_entropy(Tensor::matrix(1, 3, {0, 0, 100}), one, kIgnoreId).item(), 1e-10);

  const Tensor logits = Tensor::matrix(3, 2, {1, 2, 0.5, -1, 3, 3});
  const int targets[] = {1, kIgnoreId, 0};
  const double first = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
  const double third = std::log(2.0);
  EXPECT_NEAR(cross_entropy(logits, targets, kIgnoreId).item(), (first + third) / 2.0, 1e-12);

  const int none[] = {kIgnoreId, kIgnoreId, kIgnoreId};
  EXPECT_THROW(cross_entropy(logits, none, kIgnoreId), std::domain_error);
}

TEST(Backward, SumAndSquare) {
  Tensor x({3}, {1, -2, 5}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], -4.0);
  EXPECT_EQ(x.grad()[2], 10.0);
}

TEST(Backward, RejectsNonScalar) {
  Tensor x({3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), DimensionError);
}

TEST(Backward, AccumulationDoubles) {
  Rng rng(5);
  Tensor w = random_matrix(3, 3, rng, true);
  const Tensor x = random_matrix(2, 3, rng);
  const Tensor loss = sum(gelu(matmul(x, w)));
  backward(loss);
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(ComputationRecord, TopologicalOrder) {
  Rng rng(6);
  Tensor a = random_matrix(2, 2, rng, true);
  Tensor b = random_matrix(2, 2, rng, true);
  const Tensor loss = sum(tanh(add(matmul(a, b), mul(a, a))));
  const ComputationRecord rec = ComputationRecord::trace(loss);
  ASSERT_GE(rec.size(), 5u);
  std::set<const void*> produced{a.id(), b.id()};
  for (const auto& e : rec.entries()) {
    for (const void* in : e.inputs) EXPECT_TRUE(produced.count(in)) << e.op;
    produced.insert(e.output);
  }
  EXPECT_EQ(rec.entries().back().output, loss.id());
}

TEST(GradCheck, LinearAndQuadratic) {
  Tensor x({4}, {0.3, -1.2, 2.0, 0.7}, true);
  Tensor c({4}, {1.5, -0.5, 2.5, 3.0});
  const double linear = finite_diff_check([&] { return sum(mul(x, c)); }, {x}).max_rel_error;
  EXPECT_LT(linear, 1e-9);
  const double quadratic = finite_diff_check([&] { return sum(mul(mul(x, x), c)); }, {x}).max_rel_error;
  EXPECT_LT(quadratic, 1e-7);
}

TEST(GradCheck, CompositeGraphsAgree) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w = random_matrix(4, 6, rng, true);
    Tensor g = Tensor::full({6}, 1.0, true);
    Tensor b = Tensor::zeros({6}, true);
    Tensor q = random_matrix(3, 6, rng, true);
    const Tensor x = random_matrix(5, 4, rng);
    const int targets[] = {0, 3, kIgnoreId, 5, 1};
    auto f = [&] {
      Tensor h = layer_norm(gelu(matmul(x, w)), g, b);
      Tensor a = attention(h, h, h, 2, true);
      Tensor cross = attention(q, h, h, 3, false);
      return add(cross_entropy(add(a, h), targets, kIgnoreId), mean(abs(cross)));
    };
    EXPECT_LT(finite_diff_check(f, {w, g, b, q}).max_rel_error, 1e-4);
  }
}

TEST(Ops, Deterministic) {
  Rng r1(8), r2(8);
  const Tensor a = random_matrix(6, 6, r1), b = random_matrix(6, 6, r2);
  EXPECT_EQ(checksum(softmax(matmul(a, a), 1)), checksum(softmax(matmul(b, b), 1)));
}

TEST(NoGrad, SuppressesRecording) {
  Tensor x({2}, {1, 2}, true);
  NoGradGuard guard;
  const Tensor y = scale(x, 3.0);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::matrix(1, 2, {1.0, -1.0}, true);
  AdamW opt({w}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  backward(sum(mul(w, Tensor::matrix(1, 2, {3.0, -5.0}))));
  opt.step();
  EXPECT_NEAR(w.values()[0], 0.9, 1e-7);
  EXPECT_NEAR(w.values()[1], -0.9, 1e-7);
}

TEST(AdamW, DecaySkipsVectors) {
  Tensor m = Tensor::matrix(1, 1, {2.0}, true);
  Tensor v = Tensor({1}, {2.0}, true);
  AdamW opt({m, v}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
  m.mutable_grad();
  v.mutable_grad();
  opt.step();
  EXPECT_NEAR(m.values()[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
  EXPECT_EQ(v.values()[0], 2.0);
}

TEST(ClipGradNorm, ScalesJointNorm) {
  Tensor a({2}, {0, 0}, true), b({1}, {0}, true);
  auto ga = a.mutable_grad();
  ga[0] = 3.0;
  ga[1] = 0.0;
  b.mutable_grad()[0] = 4.0;
  EXPECT_NEAR(clip_grad_norm({a, b}, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
}

}  // namespace
}  // namespace jmla
