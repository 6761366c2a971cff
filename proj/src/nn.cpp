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

#include "jmla/nn.hpp"

#include <cmath>

namespace jmla {

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_rowwise(y, bias) : y;
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  std::vector<double> w(in * out);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w) v = rng.normal(0.0, stddev);
  Linear l;
  l.weight = Tensor::matrix(in, out, std::move(w));
  if (with_bias) l.bias = Tensor::zeros({out});
  return l;
}

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm make_layer_norm(std::size_t width) {
  return LayerNorm{Tensor::full({width}, 1.0), Tensor::zeros({width})};
}

void FeedForward::collect(const std::string& prefix, NamedParams& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

FeedForward make_feed_forward(std::size_t width, std::size_t hidden, Rng& rng) {
  FeedForward f;
  f.up = make_linear(width, hidden, rng);
  f.down = make_linear(hidden, width, rng);
  return f;
}

Tensor MultiHeadAttention::operator()(const Tensor& x_query, const Tensor& x_context,
                                      bool causal) const {
  return output(attention(query(x_query), key(x_context), value(x_context), heads, causal));
}

void MultiHeadAttention::collect(const std::string& prefix, NamedParams& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

MultiHeadAttention make_attention(std::size_t width, std::size_t context_width,
                                  std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("attention width " + std::to_string(width) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = make_linear(width, width, rng);
  a.key = make_linear(context_width, width, rng, false);
  a.value = make_linear(context_width, width, rng);
  a.output = make_linear(width, width, rng);
  a.heads = heads;
  return a;
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  Tensor h = attn_norm(x);
  Tensor y = add(x, attn(h, h, causal));
  return add(y, mlp(mlp_norm(y)));
}

void TransformerBlock::collect(const std::string& prefix, NamedParams& out) const {
  attn_norm.collect(prefix + ".attn_norm", out);
  attn.collect(prefix + ".attn", out);
  mlp_norm.collect(prefix + ".mlp_norm", out);
  mlp.collect(prefix + ".mlp", out);
}

TransformerBlock make_transformer_block(std::size_t width, std::size_t heads,
                                        std::size_t mlp_ratio, bool causal, Rng& rng) {
  TransformerBlock b;
  b.attn_norm = make_layer_norm(width);
  b.attn = make_attention(width, width, heads, rng);
  b.mlp_norm = make_layer_norm(width);
  b.mlp = make_feed_forward(width, width * mlp_ratio, rng);
  b.causal = causal;
  return b;
}

namespace {

void fill_sincos(double position, std::size_t channels, double* dst) {
  // channels/2 frequencies, sin then cos.
  const std::size_t half = channels / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half, 1)));
    dst[i] = std::sin(position * freq);
    dst[half + i] = std::cos(position * freq);
  }
}

}  // namespace

Tensor sincos_2d_at(std::span<const std::pair<std::size_t, std::size_t>> cells,
                    std::size_t width) {
  if (width % 4 != 0) {
    throw DimensionError("2-D sincos embedding needs width divisible by 4, got " +
                         std::to_string(width));
  }
  const std::size_t half = width / 2;
  std::vector<double> out(cells.size() * width);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    fill_sincos(static_cast<double>(cells[i].first), half, out.data() + i * width);
    fill_sincos(static_cast<double>(cells[i].second), half, out.data() + i * width + half);
  }
  return Tensor::matrix(cells.size(), width, std::move(out));
}

Tensor sincos_2d(std::size_t grid_rows, std::size_t grid_cols, std::size_t width) {
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < grid_rows; ++r)
    for (std::size_t c = 0; c < grid_cols; ++c) cells.emplace_back(r, c);
  return sincos_2d_at(cells, width);
}

Tensor average(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw DimensionError("average of no tensors");
  Tensor total = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) total = add(total, scalars[i]);
  return scalars.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(scalars.size()));
}

void set_requires_grad(const NamedParams& params, bool flag) {
  for (auto [name, t] : params) t.set_requires_grad(flag);
}

void zero_grad(const NamedParams& params) {
  for (auto [name, t] : params) t.zero_grad();
}

std::size_t parameter_count(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

std::uint64_t checksum(const NamedParams& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : params) {
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= checksum(t);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<Tensor> tensors_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

}  // namespace jmla
