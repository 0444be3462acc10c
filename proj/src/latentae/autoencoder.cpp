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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "diffupt/latentae.hpp"
#include "diffupt/metrics.hpp"

namespace diffupt::latent {

using namespace diffupt::num;

Autoencoder::Autoencoder(AutoencoderConfig cfg) : cfg_(cfg) {
  if (cfg_.channels == 0 || cfg_.latent_channels == 0 || cfg_.hidden == 0) {
    throw AutoencoderError("autoencoder channel counts must be positive");
  }
  const std::size_t factor = std::size_t{1} << cfg_.downsample;
  if (cfg_.height == 0 || cfg_.width == 0 || cfg_.height % factor != 0 ||
      cfg_.width % factor != 0) {
    throw AutoencoderError("image size " + std::to_string(cfg_.height) + "x" +
                           std::to_string(cfg_.width) + " is not divisible by 2^" +
                           std::to_string(cfg_.downsample));
  }
  RngStream rng(cfg_.init_seed);
  const std::size_t h = cfg_.hidden;
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out,
                  std::vector<std::size_t>& ws, std::vector<std::size_t>& bs) {
    ws.push_back(params_.add_uniform(name + ".w", {out, in, 3, 3}, in * 9, rng));
    bs.push_back(params_.add_zeros(name + ".b", {out}));
  };
  conv("enc.in", cfg_.channels, h, enc_w_, enc_b_);
  for (std::size_t l = 0; l < cfg_.downsample; ++l) {
    conv("enc.down" + std::to_string(l), h, h, enc_w_, enc_b_);
  }
  conv("enc.out", h, cfg_.latent_channels, enc_w_, enc_b_);
  conv("dec.in", cfg_.latent_channels, h, dec_w_, dec_b_);
  for (std::size_t l = 0; l < cfg_.downsample; ++l) {
    conv("dec.up" + std::to_string(l), h, h, dec_w_, dec_b_);
  }
  conv("dec.out", h, cfg_.channels, dec_w_, dec_b_);
  shift_.assign(cfg_.latent_channels, 0.0);
  scale_.assign(cfg_.latent_channels, 1.0);
}

Shape Autoencoder::latent_shape() const {
  const std::size_t factor = std::size_t{1} << cfg_.downsample;
  return {cfg_.latent_channels, cfg_.height / factor, cfg_.width / factor};
}

void Autoencoder::check_images(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.height ||
      x.dim(3) != cfg_.width) {
    throw ShapeError("autoencoder: expected (N, " + std::to_string(cfg_.channels) + ", " +
                     std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                     ") images, got " + to_string(x.shape()));
  }
}

Tensor Autoencoder::encode(const Tensor& images) {
  check_images(images);
  const std::size_t last = enc_w_.size() - 1;
  Tensor h = silu(conv2d(images, params_[enc_w_[0]], params_[enc_b_[0]], {1, 1}));
  for (std::size_t l = 1; l < last; ++l) {
    h = silu(conv2d(avg_pool2d(h, 2), params_[enc_w_[l]], params_[enc_b_[l]], {1, 1}));
  }
  return conv2d(h, params_[enc_w_[last]], params_[enc_b_[last]], {1, 1});
}

Tensor Autoencoder::decode(const Tensor& latents) {
  const Shape ls = latent_shape();
  if (latents.rank() != 4 || latents.dim(1) != ls[0] || latents.dim(2) != ls[1] ||
      latents.dim(3) != ls[2]) {
    throw ShapeError("autoencoder: expected (N, " + std::to_string(ls[0]) + ", " +
                     std::to_string(ls[1]) + ", " + std::to_string(ls[2]) + ") latents, got " +
                     to_string(latents.shape()));
  }
  const std::size_t last = dec_w_.size() - 1;
  Tensor h = silu(conv2d(latents, params_[dec_w_[0]], params_[dec_b_[0]], {1, 1}));
  for (std::size_t l = 1; l < last; ++l) {
    h = silu(conv2d(upsample_nearest2d(h, 2), params_[dec_w_[l]], params_[dec_b_[l]], {1, 1}));
  }
  return conv2d(h, params_[dec_w_[last]], params_[dec_b_[last]], {1, 1});
}

Tensor Autoencoder::to_standard(const Tensor& raw) const {
  const std::size_t c = cfg_.latent_channels;
  const std::size_t plane = raw.rank() == 4 ? raw.dim(2) * raw.dim(3) : 0;
  if (raw.rank() != 4 || raw.dim(1) != c) throw ShapeError("to_standard: bad latent shape");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    out[i] = (raw[i] - shift_[ch]) / scale_[ch];
  }
  return Tensor(raw.shape(), std::move(out));
}

Tensor Autoencoder::from_standard(const Tensor& standard) const {
  const std::size_t c = cfg_.latent_channels;
  const std::size_t plane = standard.rank() == 4 ? standard.dim(2) * standard.dim(3) : 0;
  if (standard.rank() != 4 || standard.dim(1) != c) {
    throw ShapeError("from_standard: bad latent shape");
  }
  std::vector<double> out(standard.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    out[i] = standard[i] * scale_[ch] + shift_[ch];
  }
  return Tensor(standard.shape(), std::move(out));
}

void Autoencoder::fit_latent_stats(const Tensor& images) {
  if (images.rank() != 4 || images.dim(0) == 0) return;
  Tensor z;
  {
    NoGradGuard no_grad;
    z = encode(images);
  }
  const std::size_t c = cfg_.latent_channels;
  const std::size_t plane = z.dim(2) * z.dim(3);
  const std::size_t n = z.dim(0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = z[(i * c + ch) * plane + p];
        s += v;
        ss += v * v;
      }
    }
    const double count = static_cast<double>(n * plane);
    const double mean = s / count;
    const double var = std::max(ss / count - mean * mean, 0.0);
    shift_[ch] = mean;
    scale_[ch] = std::max(std::sqrt(var), 1e-6);
  }
}

void Autoencoder::save(const std::filesystem::path& path) const {
  ParameterSet all = params_;
  const std::size_t c = cfg_.latent_channels;
  all.add("latent.shift", Tensor(Shape{c}, shift_));
  all.add("latent.scale", Tensor(Shape{c}, scale_));
  save_parameters(all, path);
}

void Autoencoder::load(const std::filesystem::path& path) {
  ParameterSet all = params_;
  const std::size_t c = cfg_.latent_channels;
  all.add("latent.shift", Tensor(Shape{c}));
  all.add("latent.scale", Tensor(Shape{c}));
  load_parameters(all, path);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::copy(all[i].data().begin(), all[i].data().end(), params_[i].data().begin());
  }
  const auto shift = all[params_.size()].data();
  const auto scale = all[params_.size() + 1].data();
  shift_.assign(shift.begin(), shift.end());
  scale_.assign(scale.begin(), scale.end());
}

// ---- training ---------------------------------------------------------------------

ReconstructionRow reconstruction_metrics(Autoencoder& ae, const Tensor& images, std::string split) {
  ReconstructionRow row;
  row.split = std::move(split);
  if (images.rank() != 4 || images.dim(0) == 0) return row;
  NoGradGuard no_grad;
  const Tensor rec = ae.reconstruct(images);
  const std::size_t n = images.dim(0);
  const std::size_t per = images.size() / n;
  const auto& cfg = ae.config();
  double se = 0.0, ae_sum = 0.0, ssim_sum = 0.0;
  std::vector<double> clamped(per);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = images.data().subspan(i * per, per);
    for (std::size_t j = 0; j < per; ++j) {
      const double r = rec[i * per + j];
      se += (r - a[j]) * (r - a[j]);
      clamped[j] = std::clamp(r, 0.0, 1.0);
      ae_sum += std::abs(clamped[j] - a[j]);
    }
    ssim_sum += metrics::ssim(a, clamped, cfg.channels, cfg.height, cfg.width);
  }
  row.mse = se / static_cast<double>(images.size());
  row.mae = ae_sum / static_cast<double>(images.size());
  row.ssim = ssim_sum / static_cast<double>(n);
  return row;
}

std::string to_csv(const ReconstructionRow& row) {
  char buf[96];
  std::snprintf(buf, sizeof buf, ",%.6f,%.4f", row.mse, row.ssim);
  return row.split + buf;
}

AutoencoderReport train_autoencoder(Autoencoder& ae, const data::LabeledDataset& ds,
                                    const AutoencoderTrainConfig& cfg, RngStream rng) {
  AutoencoderReport report;
  if (ds.empty()) throw AutoencoderError("train_autoencoder: empty dataset");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream split_rng = rng.split("holdout");
  split_rng.shuffle(order);
  std::size_t n_hold = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(ds.size()));
  if (n_hold >= ds.size()) n_hold = ds.size() - 1;
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(n_hold));
  std::vector<std::size_t> hold_idx(order.end() - static_cast<long>(n_hold), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());
  const data::LabeledDataset train = ds.subset(train_idx);

  AdamOptions adam;
  adam.lr = cfg.lr;
  const std::size_t per = ds.pixels_per_image();
  RngStream batch_rng = rng.split("batches");
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Shape shape = train.images().shape();
    shape[0] = cfg.batch;
    std::vector<double> xb(cfg.batch * per);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto img = train.image(batch_rng.below(train.size()));
      std::copy(img.begin(), img.end(), xb.begin() + static_cast<long>(b * per));
    }
    const Tensor x(shape, std::move(xb));
    try {
      const Tensor loss = mean(square(sub(ae.reconstruct(x), x)));
      report.loss.push_back(loss.item());
      backward(loss);
      adam_step(ae.parameters(), adam);
    } catch (const NumericError& e) {
      clear_tape();
      throw AutoencoderError("autoencoder training diverged at iteration " + std::to_string(it) +
                             ": " + e.what());
    }
  }
  ae.fit_latent_stats(ds.images());
  report.rows.push_back(reconstruction_metrics(ae, train.images(), "train"));
  if (!hold_idx.empty()) {
    report.rows.push_back(reconstruction_metrics(ae, ds.subset(hold_idx).images(), "holdout"));
  }
  return report;
}

// ---- latent diffusion -------------------------------------------------------------

void check_latent_compat(const Autoencoder& ae, const diffusion::DenoiserModel& denoiser) {
  const Shape ls = ae.latent_shape();
  const auto& dc = denoiser.config();
  if (dc.channels != ls[0] || dc.height != ls[1] || dc.width != ls[2]) {
    throw AutoencoderError("denoiser operates on (" + std::to_string(dc.channels) + ", " +
                           std::to_string(dc.height) + ", " + std::to_string(dc.width) +
                           ") but the autoencoder latent is " + to_string(ls));
  }
}

Tensor latent_diffusion_sample(Autoencoder& ae, diffusion::EpsilonModel& denoiser, std::size_t n,
                               std::size_t y, const diffusion::GuidanceSpec& guidance,
                               const diffusion::SamplerChoice& sampler,
                               const diffusion::NoiseSchedule& sched, const RngStream& rng) {
  if (auto* concrete = dynamic_cast<diffusion::DenoiserModel*>(&denoiser)) {
    check_latent_compat(ae, *concrete);
  }
  const Shape ls = ae.latent_shape();
  if (n == 0) {
    const Shape is = ae.image_shape();
    return Tensor(Shape{0, is[0], is[1], is[2]});
  }
  Tensor z;
  try {
    z = diffusion::sample_raw(denoiser, n, y, guidance, sampler, sched, rng, ls);
  } catch (const ShapeError& e) {
    throw AutoencoderError(std::string("latent sampling failed: ") + e.what());
  }
  NoGradGuard no_grad;
  const Tensor decoded = ae.decode(ae.from_standard(z));
  std::vector<double> out(decoded.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(decoded[i], 0.0, 1.0);
  return Tensor(decoded.shape(), std::move(out));
}

}  // namespace diffupt::latent
