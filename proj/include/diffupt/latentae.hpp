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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/data.hpp"
#include "diffupt/diffusion.hpp"
#include "diffupt/optim.hpp"

namespace diffupt::latent {

using num::RngStream;
using num::Tensor;

class AutoencoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AutoencoderConfig {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t latent_channels = 4;
  /// Number of 2x spatial reductions; the compression factor is 2^downsample.
  std::size_t downsample = 2;
  std::size_t hidden = 16;
  std::uint64_t init_seed = 0;
};

/// Plain convolutional autoencoder (no KL or adversarial term). The encoder
/// halves the resolution `downsample` times; the decoder mirrors it with
/// nearest-neighbour upsampling. Latents are standardized by a per-channel
/// shift/scale fitted after training so diffusion sees roughly unit variance.
class Autoencoder {
 public:
  explicit Autoencoder(AutoencoderConfig cfg);

  const AutoencoderConfig& config() const { return cfg_; }
  /// (latent_channels, h, w) of one latent.
  num::Shape latent_shape() const;
  num::Shape image_shape() const { return {cfg_.channels, cfg_.height, cfg_.width}; }

  /// (N, C, H, W) images in [0, 1] -> raw latents (N, c, h, w).
  Tensor encode(const Tensor& images);
  /// Raw latents -> unclamped reconstructions.
  Tensor decode(const Tensor& latents);
  Tensor reconstruct(const Tensor& images) { return decode(encode(images)); }

  /// Standardized latents (what the latent denoiser is trained on) and back.
  Tensor to_standard(const Tensor& raw) const;
  Tensor from_standard(const Tensor& standard) const;
  /// Fits the per-channel shift/scale on the encodings of `images`.
  void fit_latent_stats(const Tensor& images);
  const std::vector<double>& latent_shift() const { return shift_; }
  const std::vector<double>& latent_scale() const { return scale_; }

  num::ParameterSet& parameters() { return params_; }
  const num::ParameterSet& parameters() const { return params_; }

  /// Trainable weights plus the latent statistics.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  void check_images(const Tensor& x) const;

  AutoencoderConfig cfg_;
  num::ParameterSet params_;
  std::vector<std::size_t> enc_w_, enc_b_, dec_w_, dec_b_;
  std::vector<double> shift_, scale_;
};

struct AutoencoderTrainConfig {
  std::size_t iterations = 1500;
  std::size_t batch = 32;
  double lr = 2e-3;
  /// Fraction of the dataset held out for the reconstruction report.
  double holdout_fraction = 0.1;
};

struct ReconstructionRow {
  std::string split;
  double mse = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
};

inline constexpr const char* kReconstructionHeader = "split,mse,ssim";

struct AutoencoderReport {
  std::vector<double> loss;
  std::vector<ReconstructionRow> rows;  // "train" and "holdout"
};

/// Adam on per-pixel MSE. Holds out the last `holdout_fraction` of a seeded
/// permutation for the report, then fits latent statistics on all images.
/// Throws AutoencoderError on divergence.
AutoencoderReport train_autoencoder(Autoencoder& ae, const data::LabeledDataset& ds,
                                    const AutoencoderTrainConfig& cfg, RngStream rng);

/// Mean MSE, SSIM and MAE of reconstructions of `images`.
ReconstructionRow reconstruction_metrics(Autoencoder& ae, const Tensor& images, std::string split);

std::string to_csv(const ReconstructionRow& row);

/// Latent diffusion: sample standardized latents with `denoiser`, map them back
/// to raw latents, decode once per image and clamp to [0, 1].
Tensor latent_diffusion_sample(Autoencoder& ae, diffusion::EpsilonModel& denoiser, std::size_t n,
                               std::size_t y, const diffusion::GuidanceSpec& guidance,
                               const diffusion::SamplerChoice& sampler,
                               const diffusion::NoiseSchedule& sched, const RngStream& rng);

/// Throws AutoencoderError unless the denoiser operates on ae's latent shape.
void check_latent_compat(const Autoencoder& ae, const diffusion::DenoiserModel& denoiser);

}  // namespace diffupt::latent
