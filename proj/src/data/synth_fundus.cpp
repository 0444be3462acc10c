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

#include "diffupt/data.hpp"

namespace diffupt::data {

namespace {

constexpr int kSuper = 4;  // supersamples per pixel axis

void check_ratio(const RatioDistribution& r, const char* name) {
  if (!(r.mean > 0.0 && r.mean < 1.0)) {
    throw DatasetError(std::string(name) + " mean must lie in (0, 1)");
  }
  if (!(r.sd >= 0.0 && r.sd < 1.0)) throw DatasetError(std::string(name) + " sd must lie in [0, 1)");
}

void render(const FundusTruth& t, const SynthFundusConfig& cfg, RngStream& rng, double* out) {
  const std::size_t s = cfg.image_size;
  const double cup_r = t.cup_ratio * t.disc_radius;
  const double inv = 1.0 / (kSuper * kSuper);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
          const double r = std::hypot(px - t.center_x, py - t.center_y);
          double v = cfg.background_level;
          if (r < t.disc_radius) v = cfg.disc_level;
          if (r < cup_r) v = cfg.cup_level;
          acc += v;
        }
      }
      const double noisy = acc * inv + cfg.noise_sd * rng.normal();
      out[y * s + x] = std::clamp(noisy, 0.0, 1.0);
    }
  }
}

}  // namespace

void SynthFundusConfig::validate() const {
  if (image_size < 8) {
    throw DatasetError("image_size " + std::to_string(image_size) +
                       " < 8: disc and cup are indistinguishable");
  }
  check_ratio(cup_ratio_majority, "cup_ratio_majority");
  check_ratio(cup_ratio_minority, "cup_ratio_minority");
  if (!(cup_ratio_minority.mean > cup_ratio_majority.mean)) {
    throw DatasetError("cup_ratio_minority mean must exceed cup_ratio_majority mean");
  }
  if (!(disc_radius_min > 0.0 && disc_radius_min <= disc_radius_max && disc_radius_max < 0.5)) {
    throw DatasetError("disc radius range must satisfy 0 < min <= max < 0.5");
  }
  if (center_jitter < 0.0 || disc_radius_max + center_jitter > 0.5) {
    throw DatasetError("center_jitter pushes the disc outside the image");
  }
  if (noise_sd < 0.0) throw DatasetError("noise_sd must be non-negative");
  if (!(background_level < disc_level && disc_level < cup_level && background_level >= 0.0 &&
        cup_level <= 1.0)) {
    throw DatasetError("intensity levels must satisfy 0 <= background < disc < cup <= 1");
  }
}

LabeledDataset generate_synth_fundus(const SynthFundusConfig& cfg, std::size_t n_negative,
                                     std::size_t n_positive) {
  cfg.validate();
  const std::size_t n = n_negative + n_positive;
  const std::size_t s = cfg.image_size;
  const RngStream root(cfg.seed);

  std::vector<std::uint8_t> labels(n_negative, kNegative);
  labels.resize(n, kPositive);
  RngStream order = root.split("order");
  order.shuffle(labels);

  std::vector<double> pixels(n * s * s);
  std::vector<FundusTruth> truth(n);
  const double size = static_cast<double>(s);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng = root.split(i);
    const auto& dist = labels[i] == kPositive ? cfg.cup_ratio_minority : cfg.cup_ratio_majority;
    FundusTruth t;
    t.disc_radius = size * rng.uniform(cfg.disc_radius_min, cfg.disc_radius_max);
    t.cup_ratio = std::clamp(rng.normal(dist.mean, dist.sd), 0.05, 0.95);
    t.center_x = size * (0.5 + rng.uniform(-cfg.center_jitter, cfg.center_jitter));
    t.center_y = size * (0.5 + rng.uniform(-cfg.center_jitter, cfg.center_jitter));
    render(t, cfg, rng, pixels.data() + i * s * s);
    truth[i] = t;
  }
  return LabeledDataset(Tensor(num::Shape{n, 1, s, s}, std::move(pixels)), std::move(labels),
                        std::vector<Provenance>(n, Provenance::kReal), std::move(truth));
}

double measure_cup_ratio(std::span<const double> image, std::size_t height, std::size_t width,
                         const SynthFundusConfig& cfg) {
  if (image.size() < height * width) throw DatasetError("measure_cup_ratio: short image");
  double disc_area = 0.0;
  double cup_area = 0.0;
  const double disc_span = cfg.disc_level - cfg.background_level;
  const double cup_span = cfg.cup_level - cfg.disc_level;
  for (std::size_t i = 0; i < height * width; ++i) {
    const double v = image[i];
    disc_area += std::clamp((v - cfg.background_level) / disc_span, 0.0, 1.0);
    cup_area += std::clamp((v - cfg.disc_level) / cup_span, 0.0, 1.0);
  }
  if (disc_area <= 0.0) return 0.0;
  return std::sqrt(std::min(cup_area, disc_area) / disc_area);
}

}  // namespace diffupt::data
