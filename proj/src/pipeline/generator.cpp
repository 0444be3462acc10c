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

#include <chrono>

#include "diffupt/pipeline.hpp"

namespace diffupt::pipeline {

Generator::Generator(const GeneratorConfig& cfg, std::size_t channels, std::size_t height,
                     std::size_t width)
    : cfg_(cfg), image_shape_{channels, height, width} {
  sched_ = diffusion::linear_schedule(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end);
  diffusion::DenoiserConfig dc = cfg_.denoiser;
  if (cfg_.latent) {
    latent::AutoencoderConfig ac = cfg_.autoencoder;
    ac.channels = channels;
    ac.height = height;
    ac.width = width;
    ae_ = std::make_unique<latent::Autoencoder>(ac);
    const num::Shape ls = ae_->latent_shape();
    dc.channels = ls[0];
    dc.height = ls[1];
    dc.width = ls[2];
  } else {
    dc.channels = channels;
    dc.height = height;
    dc.width = width;
  }
  cfg_.denoiser = dc;
  denoiser_ = std::make_unique<diffusion::DenoiserModel>(dc);
}

void Generator::train(const data::LabeledDataset& train, RngStream rng) {
  if (train.empty()) throw PipelineError("generator training needs a nonempty dataset");
  if (ae_) {
    ae_report_ = latent::train_autoencoder(*ae_, train, cfg_.autoencoder_train, rng.split("autoencoder"));
    Tensor z;
    {
      num::NoGradGuard no_grad;
      z = ae_->to_standard(ae_->encode(train.images()));
    }
    curve_ = diffusion::train_diffusion(*denoiser_, z, train.labels(), cfg_.diffusion_train, sched_,
                                        rng.split("diffusion"));
  } else {
    curve_ = diffusion::train_diffusion(*denoiser_, train, cfg_.diffusion_train, sched_,
                                        rng.split("diffusion"));
  }
}

Tensor Generator::sample(std::size_t n, std::size_t y, const diffusion::GuidanceSpec& guidance,
                         const diffusion::SamplerChoice& sampler, const RngStream& rng) {
  if (ae_) {
    return latent::latent_diffusion_sample(*ae_, *denoiser_, n, y, guidance, sampler, sched_, rng);
  }
  return diffusion::sample(*denoiser_, n, y, guidance, sampler, sched_, rng, image_shape_);
}

void Generator::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  num::save_parameters(denoiser_->parameters(), dir / "denoiser.dptw");
  if (ae_) ae_->save(dir / "autoencoder.dptw");
}

void Generator::load(const std::filesystem::path& dir) {
  num::load_parameters(denoiser_->parameters(), dir / "denoiser.dptw");
  if (ae_) ae_->load(dir / "autoencoder.dptw");
}

// ---- candidate pool -----------------------------------------------------------------

CandidatePool::CandidatePool(Generator& generator, diffusion::GuidanceSpec guidance,
                             diffusion::SamplerChoice sampler, RngStream rng, std::size_t round)
    : gen_(generator),
      guidance_(guidance),
      sampler_(sampler),
      rng_(rng),
      round_(round == 0 ? 1 : round) {
  if (auto* ae = gen_.autoencoder()) {
    item_shape_ = ae->image_shape();
  } else {
    const auto& dc = gen_.denoiser().config();
    item_shape_ = {dc.channels, dc.height, dc.width};
  }
  pixels_ = num::numel(item_shape_);
}

void CandidatePool::ensure(std::size_t y, std::size_t n) {
  if (y > 1) throw PipelineError("candidate class must be 0 or 1");
  while (counts_[y] < n) {
    const std::size_t r = counts_[y] / round_;
    const auto start = std::chrono::steady_clock::now();
    const Tensor batch = gen_.sample(round_, y, guidance_, sampler_, rng_.split(y).split(r));
    seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    evaluations_ += round_ * 2 * sampler_.step_count(gen_.schedule().T);
    data_[y].insert(data_[y].end(), batch.data().begin(), batch.data().end());
    counts_[y] += round_;
  }
}

std::span<const double> CandidatePool::image(std::size_t y, std::size_t i) const {
  if (y > 1 || i >= counts_[y]) throw PipelineError("candidate index out of range");
  return std::span<const double>(data_[y]).subspan(i * pixels_, pixels_);
}

Tensor CandidatePool::images(std::size_t y, std::span<const std::size_t> indices) const {
  num::Shape shape{indices.size()};
  shape.insert(shape.end(), item_shape_.begin(), item_shape_.end());
  std::vector<double> out;
  out.reserve(indices.size() * pixels_);
  for (std::size_t i : indices) {
    const auto img = image(y, i);
    out.insert(out.end(), img.begin(), img.end());
  }
  return Tensor(std::move(shape), std::move(out));
}

double CandidatePool::target_probability(std::size_t y, std::size_t i, cls::ClassifierModel& baseline) {
  ensure(y, i + 1);
  if (scored_by_ != &baseline) {
    probs_[0].clear();
    probs_[1].clear();
    scored_by_ = &baseline;
  }
  auto& probs = probs_[y];
  if (probs.size() <= i) {
    const std::size_t first = probs.size();
    const std::size_t last = std::min(counts_[y], first + std::max<std::size_t>(round_, i + 1 - first));
    std::vector<std::size_t> idx;
    for (std::size_t k = first; k < last; ++k) idx.push_back(k);
    const auto p = baseline.predict_proba(images(y, idx));
    for (double v : p) probs.push_back(y == 1 ? v : 1.0 - v);
  }
  return probs[i];
}

}  // namespace diffupt::pipeline
