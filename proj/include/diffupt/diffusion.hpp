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

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/data.hpp"
#include "diffupt/optim.hpp"
#include "diffupt/rng.hpp"
#include "diffupt/tensor.hpp"

namespace diffupt::diffusion {

using num::RngStream;
using num::Tensor;

class DiffusionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear beta schedule and its derived tables. Timesteps are 1-based; the
/// arrays are indexed by t - 1.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // posterior standard deviation

  /// alpha_bar for t in [0, T]; alpha_bar(0) is 1.
  double alpha_bar_at(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
  void check_timestep(std::size_t t) const;
};

NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);
/// Per-sample timesteps along the leading axis. The result is untracked.
Tensor q_sample(const Tensor& x0, std::span<const std::size_t> t, const Tensor& eps,
                const NoiseSchedule& sched);

/// Conditioning index reserved for "no class".
inline constexpr std::size_t kNullClass = 2;

/// Anything that predicts the injected noise from (z_t, t, class).
class EpsilonModel {
 public:
  virtual ~EpsilonModel() = default;
  virtual Tensor predict(const Tensor& z, std::span<const std::size_t> t,
                         std::span<const std::size_t> classes) = 0;
};

struct DenoiserConfig {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t base_channels = 16;
  /// Number of 2x down/up levels; clamped to what the spatial size allows.
  std::size_t levels = 1;
  std::size_t time_embedding = 32;
  std::uint64_t init_seed = 0;
};

/// Small U-shaped convolutional noise predictor with a sinusoidal timestep
/// embedding and a 3-row class table (0, 1, null). The embedding is added to
/// every residual block's activations.
class DenoiserModel final : public EpsilonModel {
 public:
  explicit DenoiserModel(DenoiserConfig cfg);

  Tensor predict(const Tensor& z, std::span<const std::size_t> t,
                 std::span<const std::size_t> classes) override;

  const DenoiserConfig& config() const { return cfg_; }
  num::ParameterSet& parameters() { return params_; }
  const num::ParameterSet& parameters() const { return params_; }
  /// Index of the (3, E) class-embedding table in parameters().
  std::size_t class_table_index() const { return class_table_; }
  std::size_t levels() const { return levels_; }

 private:
  struct ResBlock {
    std::size_t conv_a_w, conv_a_b, proj_w, proj_b, conv_b_w, conv_b_b;
  };
  ResBlock add_block(const std::string& name, std::size_t ch, std::size_t emb, RngStream& rng);
  Tensor run_block(const ResBlock& b, const Tensor& h, const Tensor& emb);
  Tensor conv(const Tensor& x, std::size_t w, std::size_t b);

  DenoiserConfig cfg_;
  std::size_t levels_ = 0;
  std::size_t kernel_ = 3;
  num::ParameterSet params_;
  std::size_t t_w1_, t_b1_, t_w2_, t_b2_, class_table_;
  std::size_t in_w_, in_b_, out_w_, out_b_;
  std::size_t merge_w_ = 0, merge_b_ = 0;
  ResBlock first_{}, down_{}, last_{};
};

/// Sinusoidal embedding of integer timesteps: (n, width).
Tensor timestep_embedding(std::span<const std::size_t> t, std::size_t width);

/// Mean squared noise-prediction error with w(t) = 1. Draws t ~ U{1..T},
/// eps ~ N(0, I), and swaps each label for the null class with probability
/// p_uncond.
Tensor diffusion_loss(EpsilonModel& model, const Tensor& x0, std::span<const std::uint8_t> y,
                      const NoiseSchedule& sched, RngStream& rng, double p_uncond);

/// (1 + w) eps_cond - w eps_uncond
Tensor cfg_epsilon(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

struct GuidanceSpec {
  double w = 3.0;
};

/// Ancestral update x_t -> x_{t-1}; the noise term is dropped at t = 1.
/// `noise` supplies z and may be empty when t = 1.
Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched, const Tensor& noise);
Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched, RngStream& rng);

/// Generalized DDIM update x_t -> x_{t_prev} (t_prev = 0 means the clean
/// sample). eta = 0 is deterministic; eta = 1 with consecutive steps
/// reproduces the ancestral posterior variance.
Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, const Tensor& noise);
Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, RngStream& rng);
/// x0 estimate implied by eps_hat.
Tensor predict_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                  const NoiseSchedule& sched);

struct SamplerChoice {
  enum class Kind { kDdpm, kDdim };
  Kind kind = Kind::kDdim;
  std::size_t steps = 50;  // DDIM only
  double eta = 0.0;        // DDIM only

  static SamplerChoice ddpm() { return {Kind::kDdpm, 0, 0.0}; }
  static SamplerChoice ddim(std::size_t steps, double eta = 0.0) { return {Kind::kDdim, steps, eta}; }
  std::string label() const;
  /// Number of reverse steps for a schedule with T timesteps.
  std::size_t step_count(std::size_t T) const;
};

/// Descending timestep pairs (t, t_prev) visited by the sampler.
std::vector<std::pair<std::size_t, std::size_t>> timestep_pairs(const SamplerChoice& sampler,
                                                                std::size_t T);

/// Reverse diffusion in model space, returning unclamped x_0 for `n` draws of
/// class `y`. Each step evaluates the model once for y and once for the null
/// class and combines them with cfg_epsilon. Draw i uses rng.split(i), so the
/// result does not depend on how draws are batched.
Tensor sample_raw(EpsilonModel& model, std::size_t n, std::size_t y, const GuidanceSpec& guidance,
                  const SamplerChoice& sampler, const NoiseSchedule& sched, const RngStream& rng,
                  const num::Shape& item_shape, std::size_t batch = 64);

/// Pixel-space sampling: maps model space [-1, 1] back to [0, 1] and clamps.
Tensor sample(EpsilonModel& model, std::size_t n, std::size_t y, const GuidanceSpec& guidance,
              const SamplerChoice& sampler, const NoiseSchedule& sched, const RngStream& rng,
              const num::Shape& item_shape);

/// Image [0, 1] -> model space [-1, 1].
Tensor to_model_space(const Tensor& images);

struct DiffusionTrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 32;
  double lr = 1e-3;
  double p_uncond = 0.1;
  double smoothing = 0.98;  // EMA factor for the smoothed loss curve
};

struct TrainCurve {
  std::vector<double> loss;
  std::vector<double> smoothed;
  bool improved() const { return !smoothed.empty() && smoothed.back() < smoothed.front(); }
};

/// Adam on diffusion_loss over (data, labels) in model space.
/// Throws DiffusionError on a non-finite loss.
TrainCurve train_diffusion(DenoiserModel& model, const Tensor& data,
                           std::span<const std::uint8_t> labels, const DiffusionTrainConfig& cfg,
                           const NoiseSchedule& sched, RngStream rng);
/// Pixel-space training on a labelled image set.
TrainCurve train_diffusion(DenoiserModel& model, const data::LabeledDataset& ds,
                           const DiffusionTrainConfig& cfg, const NoiseSchedule& sched,
                           RngStream rng);

}  // namespace diffupt::diffusion
