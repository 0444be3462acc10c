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
#include <algorithm>
#include <cmath>

#include "diffupt/diffusion.hpp"
#include "diffupt/parallel.hpp"

namespace diffupt::diffusion {

using num::Shape;

std::string SamplerChoice::label() const {
  if (kind == Kind::kDdpm) return "ddpm";
  std::string s = "ddim(" + std::to_string(steps) + ")";
  if (eta > 0.0) s += "@eta=" + std::to_string(eta);
  return s;
}

std::size_t SamplerChoice::step_count(std::size_t T) const {
  return kind == Kind::kDdpm ? T : std::min(steps, T);
}

std::vector<std::pair<std::size_t, std::size_t>> timestep_pairs(const SamplerChoice& sampler,
                                                                std::size_t T) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (sampler.kind == SamplerChoice::Kind::kDdpm) {
    for (std::size_t t = T; t >= 1; --t) pairs.emplace_back(t, t - 1);
    return pairs;
  }
  if (sampler.steps == 0) throw DiffusionError("DDIM needs at least one step");
  const std::size_t s = std::min(sampler.steps, T);
  // t_k = ceil(k T / s) for k = s..1, strictly decreasing, ending at 0.
  std::vector<std::size_t> ts;
  for (std::size_t k = s; k >= 1; --k) ts.push_back((k * T + s - 1) / s);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    pairs.emplace_back(ts[i], i + 1 < ts.size() ? ts[i + 1] : 0);
  }
  return pairs;
}

namespace {

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t stride = x.dim(0) == 0 ? 0 : x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<double> v(x.data().begin() + static_cast<long>(begin * stride),
                        x.data().begin() + static_cast<long>((begin + count) * stride));
  return Tensor(std::move(shape), std::move(v));
}

Tensor stack_noise(std::vector<RngStream>& streams, const Shape& shape) {
  const std::size_t stride = num::numel(shape) / std::max<std::size_t>(shape[0], 1);
  std::vector<double> v(num::numel(shape));
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (std::size_t j = 0; j < stride; ++j) v[i * stride + j] = streams[i].normal();
  }
  return Tensor(shape, std::move(v));
}

// Reverse process for draws [first, first + count).
Tensor run_chain(EpsilonModel& model, std::size_t first, std::size_t count, std::size_t y,
                 const GuidanceSpec& guidance, const SamplerChoice& sampler,
                 const NoiseSchedule& sched, const RngStream& rng, const Shape& item_shape) {
  num::NoGradGuard no_grad;
  Shape shape{count};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  std::vector<RngStream> streams;
  for (std::size_t i = 0; i < count; ++i) streams.push_back(rng.split(first + i));
  Tensor x = stack_noise(streams, shape);

  Shape pair_shape = shape;
  pair_shape[0] = 2 * count;
  std::vector<std::size_t> classes(2 * count, kNullClass);
  std::fill_n(classes.begin(), count, y);
  std::vector<std::size_t> ts(2 * count);

  for (const auto& [t, t_prev] : timestep_pairs(sampler, sched.T)) {
    std::fill(ts.begin(), ts.end(), t);
    const std::array<Tensor, 2> both{x, x};
    const Tensor eps_pair = model.predict(num::concat(both, 0), ts, classes);
    const Tensor eps = cfg_epsilon(slice_rows(eps_pair, 0, count),
                                   slice_rows(eps_pair, count, count), guidance.w);
    if (sampler.kind == SamplerChoice::Kind::kDdpm) {
      x = ddpm_step(x, t, eps, sched, t > 1 ? stack_noise(streams, shape) : Tensor());
    } else {
      x = ddim_step(x, t, t_prev, eps, sched, sampler.eta,
                    sampler.eta > 0.0 ? stack_noise(streams, shape) : Tensor());
    }
  }
  return x;
}

}  // namespace

Tensor sample_raw(EpsilonModel& model, std::size_t n, std::size_t y, const GuidanceSpec& guidance,
                  const SamplerChoice& sampler, const NoiseSchedule& sched, const RngStream& rng,
                  const Shape& item_shape, std::size_t batch) {
  if (guidance.w < 0.0) throw DiffusionError("guidance scale w must be non-negative");
  if (y > 1) throw DiffusionError("sampling class must be 0 or 1");
  Shape shape{n};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  if (n == 0) return Tensor(shape);
  batch = std::max<std::size_t>(batch, 1);
  const std::size_t chunks = (n + batch - 1) / batch;
  std::vector<Tensor> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t first = c * batch;
    parts[c] = run_chain(model, first, std::min(batch, n - first), y, guidance, sampler, sched,
                         rng, item_shape);
  });
  return chunks == 1 ? parts[0] : num::concat(parts, 0);
}

Tensor to_model_space(const Tensor& images) {
  std::vector<double> v(images.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * images[i] - 1.0;
  return Tensor(images.shape(), std::move(v));
}

Tensor sample(EpsilonModel& model, std::size_t n, std::size_t y, const GuidanceSpec& guidance,
              const SamplerChoice& sampler, const NoiseSchedule& sched, const RngStream& rng,
              const Shape& item_shape) {
  const Tensor raw = sample_raw(model, n, y, guidance, sampler, sched, rng, item_shape);
  std::vector<double> v(raw.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(0.5 * (raw[i] + 1.0), 0.0, 1.0);
  return Tensor(raw.shape(), std::move(v));
}

// ---- training -----------------------------------------------------------------

Tensor diffusion_loss(EpsilonModel& model, const Tensor& x0, std::span<const std::uint8_t> y,
                      const NoiseSchedule& sched, RngStream& rng, double p_uncond) {
  if (x0.rank() == 0 || x0.dim(0) == 0) throw DiffusionError("diffusion_loss: empty batch");
  const std::size_t n = x0.dim(0);
  if (y.size() != n) throw num::ShapeError("diffusion_loss: one label per sample required");
  std::vector<std::size_t> t(n), classes(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = 1 + rng.below(sched.T);
    classes[i] = rng.uniform() < p_uncond ? kNullClass : y[i];
  }
  std::vector<double> noise(x0.size());
  rng.fill_normal(noise);
  const Tensor eps(x0.shape(), std::move(noise));
  const Tensor z = q_sample(x0, t, eps, sched);
  const Tensor pred = model.predict(z, t, classes);
  return num::mean(num::square(num::sub(pred, eps)));
}

TrainCurve train_diffusion(DenoiserModel& model, const Tensor& data,
                           std::span<const std::uint8_t> labels, const DiffusionTrainConfig& cfg,
                           const NoiseSchedule& sched, RngStream rng) {
  TrainCurve curve;
  if (cfg.iterations == 0) return curve;
  if (data.rank() != 4 || data.dim(0) == 0) throw DiffusionError("train_diffusion: empty dataset");
  if (labels.size() != data.dim(0)) throw DiffusionError("train_diffusion: label count mismatch");
  const std::size_t n = data.dim(0);
  const std::size_t stride = data.size() / n;
  num::AdamOptions adam;
  adam.lr = cfg.lr;
  auto& params = model.parameters();
  double smoothed = 0.0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<std::size_t> idx(cfg.batch);
    for (auto& i : idx) i = rng.below(n);
    Shape shape = data.shape();
    shape[0] = cfg.batch;
    std::vector<double> xb(cfg.batch * stride);
    std::vector<std::uint8_t> yb(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::copy_n(data.data().begin() + static_cast<long>(idx[b] * stride), stride,
                  xb.begin() + static_cast<long>(b * stride));
      yb[b] = labels[idx[b]];
    }
    double value = 0.0;
    try {
      const Tensor loss = diffusion_loss(model, Tensor(shape, std::move(xb)), yb, sched, rng, cfg.p_uncond);
      value = loss.item();
      num::backward(loss);
      num::adam_step(params, adam);
    } catch (const num::NumericError& e) {
      num::clear_tape();
      throw DiffusionError("diffusion training diverged at iteration " + std::to_string(it) + ": " +
                           e.what());
    }
    smoothed = it == 0 ? value : cfg.smoothing * smoothed + (1.0 - cfg.smoothing) * value;
    curve.loss.push_back(value);
    curve.smoothed.push_back(smoothed);
  }
  return curve;
}

TrainCurve train_diffusion(DenoiserModel& model, const data::LabeledDataset& ds,
                           const DiffusionTrainConfig& cfg, const NoiseSchedule& sched,
                           RngStream rng) {
  return train_diffusion(model, to_model_space(ds.images()), ds.labels(), cfg, sched, rng);
}

}  // namespace diffupt::diffusion
