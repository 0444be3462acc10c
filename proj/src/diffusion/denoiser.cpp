// Copyright 2026 The DiffuPT Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <array>
#include <cmath>

#include "diffupt/diffusion.hpp"

namespace diffupt::diffusion {

using namespace diffupt::num;

Tensor timestep_embedding(std::span<const std::size_t> t, std::size_t width) {
  const std::size_t half = width / 2;
  std::vector<double> out(t.size() * width, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(t[i]) * freq;
      out[i * width + k] = std::sin(arg);
      out[i * width + half + k] = std::cos(arg);
    }
  }
  return Tensor(Shape{t.size(), width}, std::move(out));
}

DenoiserModel::DenoiserModel(DenoiserConfig cfg) : cfg_(cfg) {
  if (cfg_.channels == 0 || cfg_.height == 0 || cfg_.width == 0 || cfg_.base_channels == 0) {
    throw DiffusionError("denoiser dimensions must be positive");
  }
  if (cfg_.time_embedding < 2 || cfg_.time_embedding % 2 != 0) {
    throw DiffusionError("time embedding width must be even and >= 2");
  }
  levels_ = 0;
  if (cfg_.levels > 0 && cfg_.height % 2 == 0 && cfg_.width % 2 == 0 && cfg_.height >= 2 &&
      cfg_.width >= 2) {
    levels_ = 1;
  }
  kernel_ = (cfg_.height == 1 && cfg_.width == 1) ? 1 : 3;

  RngStream rng(cfg_.init_seed);
  const std::size_t c = cfg_.base_channels;
  const std::size_t k2 = kernel_ * kernel_;
  t_w1_ = params_.add_uniform("time.fc1.w", {c, cfg_.time_embedding}, cfg_.time_embedding, rng);
  t_b1_ = params_.add_zeros("time.fc1.b", {c});
  t_w2_ = params_.add_uniform("time.fc2.w", {c, c}, c, rng);
  t_b2_ = params_.add_zeros("time.fc2.b", {c});
  {
    std::vector<double> table(3 * c);
    rng.fill_normal(table);
    class_table_ = params_.add("class.table", Tensor(Shape{3, c}, std::move(table)));
  }
  in_w_ = params_.add_uniform("in.w", {c, cfg_.channels, kernel_, kernel_}, cfg_.channels * k2, rng);
  in_b_ = params_.add_zeros("in.b", {c});
  first_ = add_block("block0", c, c, rng);
  if (levels_ == 1) {
    down_ = add_block("down", c, c, rng);
    merge_w_ = params_.add_uniform("merge.w", {c, 2 * c, kernel_, kernel_}, 2 * c * k2, rng);
    merge_b_ = params_.add_zeros("merge.b", {c});
  }
  last_ = add_block("block1", c, c, rng);
  out_w_ = params_.add_uniform("out.w", {cfg_.channels, c, kernel_, kernel_}, c * k2, rng, 0.1);
  out_b_ = params_.add_zeros("out.b", {cfg_.channels});
}

DenoiserModel::ResBlock DenoiserModel::add_block(const std::string& name, std::size_t ch,
                                                 std::size_t emb, RngStream& rng) {
  const std::size_t fan = ch * kernel_ * kernel_;
  ResBlock b{};
  b.conv_a_w = params_.add_uniform(name + ".conv_a.w", {ch, ch, kernel_, kernel_}, fan, rng);
  b.conv_a_b = params_.add_zeros(name + ".conv_a.b", {ch});
  b.proj_w = params_.add_uniform(name + ".emb.w", {ch, emb}, emb, rng);
  b.proj_b = params_.add_zeros(name + ".emb.b", {ch});
  b.conv_b_w = params_.add_uniform(name + ".conv_b.w", {ch, ch, kernel_, kernel_}, fan, rng, 0.5);
  b.conv_b_b = params_.add_zeros(name + ".conv_b.b", {ch});
  return b;
}

Tensor DenoiserModel::conv(const Tensor& x, std::size_t w, std::size_t b) {
  return conv2d(x, params_[w], params_[b], {1, kernel_ / 2});
}

Tensor DenoiserModel::run_block(const ResBlock& b, const Tensor& h, const Tensor& emb) {
  Tensor a = conv(silu(h), b.conv_a_w, b.conv_a_b);
  a = add_channel(a, linear(emb, params_[b.proj_w], params_[b.proj_b]));
  a = conv(silu(a), b.conv_b_w, b.conv_b_b);
  return add(h, a);
}

Tensor DenoiserModel::predict(const Tensor& z, std::span<const std::size_t> t,
                              std::span<const std::size_t> classes) {
  if (z.rank() != 4 || z.dim(1) != cfg_.channels || z.dim(2) != cfg_.height ||
      z.dim(3) != cfg_.width) {
    throw ShapeError("denoiser: expected (N, " + std::to_string(cfg_.channels) + ", " +
                     std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                     ") input, got " + to_string(z.shape()));
  }
  const std::size_t n = z.dim(0);
  if (t.size() != n || classes.size() != n) {
    throw ShapeError("denoiser: need one timestep and one class per sample");
  }
  const Tensor temb = timestep_embedding(t, cfg_.time_embedding);
  Tensor emb = linear(silu(linear(temb, params_[t_w1_], params_[t_b1_])), params_[t_w2_],
                      params_[t_b2_]);
  emb = silu(add(emb, embedding(params_[class_table_], classes)));

  Tensor h = conv(z, in_w_, in_b_);
  h = run_block(first_, h, emb);
  if (levels_ == 1) {
    Tensor d = run_block(down_, avg_pool2d(h, 2), emb);
    const std::array<Tensor, 2> parts{h, upsample_nearest2d(d, 2)};
    h = conv(concat(parts, 1), merge_w_, merge_b_);
  }
  h = run_block(last_, h, emb);
  return conv(silu(h), out_w_, out_b_);
}

}  // namespace diffupt::diffusion
