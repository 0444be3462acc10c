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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "diffupt/rng.hpp"
#include "diffupt/tensor.hpp"

namespace diffupt::data {

using num::RngStream;
using num::Tensor;

/// Class 0 is the majority (healthy surrogate), class 1 the minority.
inline constexpr int kNegative = 0;
inline constexpr int kPositive = 1;

enum class Provenance : std::uint8_t { kReal = 0, kSynthetic = 1 };

struct ClassCounts {
  std::size_t negative = 0;
  std::size_t positive = 0;
  std::size_t total() const { return negative + positive; }
  double positive_fraction() const {
    return total() == 0 ? 0.0 : static_cast<double>(positive) / static_cast<double>(total());
  }
  bool operator==(const ClassCounts&) const = default;
};

/// Geometry used to draw one synthetic disc image.
struct FundusTruth {
  double disc_radius = 0;  // pixels
  double cup_ratio = 0;    // cup radius / disc radius
  double center_x = 0;
  double center_y = 0;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images (N, C, H, W) in [0,1] with binary labels and per-sample provenance.
/// Immutable after construction.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Tensor images, std::vector<std::uint8_t> labels,
                 std::vector<Provenance> provenance, std::vector<FundusTruth> truth = {});

  /// Empty dataset with a fixed image geometry.
  static LabeledDataset empty(std::size_t channels, std::size_t height, std::size_t width);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t channels() const { return geometry_[0]; }
  std::size_t height() const { return geometry_[1]; }
  std::size_t width() const { return geometry_[2]; }
  std::size_t pixels_per_image() const { return geometry_[0] * geometry_[1] * geometry_[2]; }

  const Tensor& images() const { return images_; }
  std::span<const double> image(std::size_t i) const;
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }
  /// Ground-truth generation parameters; empty for datasets without them.
  const std::vector<FundusTruth>& truth() const { return truth_; }
  const ClassCounts& class_counts() const { return counts_; }

  std::vector<std::size_t> indices_of(int label) const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Images of one class as an (n, C, H, W) tensor.
  Tensor class_images(int label) const;
  /// Concatenates two datasets with equal image geometry.
  static LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);
  /// Builds a dataset from raw images that all share one label and provenance.
  static LabeledDataset uniform_label(Tensor images, int label, Provenance provenance);

 private:
  Tensor images_{num::Shape{0, 1, 0, 0}};
  std::array<std::size_t, 3> geometry_{1, 0, 0};
  std::vector<std::uint8_t> labels_;
  std::vector<Provenance> provenance_;
  std::vector<FundusTruth> truth_;
  ClassCounts counts_;
};

// ---- synthetic fundus surrogate ------------------------------------------------

struct RatioDistribution {
  double mean = 0.0;
  double sd = 0.0;
};

/// Procedural optic-disc images: a bright disc on a dark fundus with a
/// brighter inner cup. The minority class draws a larger cup/disc ratio.
struct SynthFundusConfig {
  std::size_t image_size = 16;
  double disc_radius_min = 0.22;  // fraction of width
  double disc_radius_max = 0.30;
  double center_jitter = 0.06;  // fraction of width, uniform +/-
  RatioDistribution cup_ratio_majority{0.40, 0.05};
  RatioDistribution cup_ratio_minority{0.60, 0.05};
  double noise_sd = 0.05;
  double background_level = 0.15;
  double disc_level = 0.55;
  double cup_level = 0.90;
  std::uint64_t seed = 1;

  /// Throws DatasetError naming the violated constraint.
  void validate() const;
};

LabeledDataset generate_synth_fundus(const SynthFundusConfig& cfg, std::size_t n_negative,
                                     std::size_t n_positive);

/// Estimates the cup/disc ratio of one rendered image from its intensity
/// levels: fractional pixel areas above the disc and cup thresholds give the
/// two radii. Independent of the renderer's geometry parameters.
double measure_cup_ratio(std::span<const double> image, std::size_t height, std::size_t width,
                         const SynthFundusConfig& cfg);

// ---- splits, weights, sampling -----------------------------------------------

struct SplitFractions {
  double train = 1.0;
  double val = 0.0;
  double test = 0.0;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Partitions `ds` into disjoint train/val/test sets. The test set (and the
/// validation set, when a target is given) is filled to the requested minority
/// fraction; the train set absorbs the remainder. Sample order within a split
/// follows the input order.
SplitResult stratified_split(const LabeledDataset& ds, SplitFractions fractions,
                             double test_minority_fraction, std::uint64_t seed,
                             std::optional<double> val_minority_fraction = std::nullopt);

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
  double for_label(int y) const { return y == kPositive ? positive : negative; }
};

/// Inverse-frequency weights w_c = N / (2 N_c).
ClassWeights class_weights(const LabeledDataset& ds);
ClassWeights class_weights(ClassCounts counts);

enum class SamplerKind { kUniform, kClassWeighted };

struct SamplerSpec {
  SamplerKind kind = SamplerKind::kUniform;
  std::optional<ClassWeights> class_weights;  // defaults to inverse frequency
};

/// Endless stream of dataset indices.
class IndexSampler {
 public:
  IndexSampler(SamplerSpec spec, const LabeledDataset& ds, RngStream rng);
  std::size_t next();
  std::vector<std::size_t> batch(std::size_t n);
  /// Probability that a draw comes from the positive class.
  double positive_probability() const { return p_positive_; }

 private:
  SamplerKind kind_;
  std::size_t n_ = 0;
  std::vector<std::size_t> negatives_;
  std::vector<std::size_t> positives_;
  double p_positive_ = 0.0;
  RngStream rng_;
};

IndexSampler make_sampler(const SamplerSpec& spec, const LabeledDataset& ds, RngStream rng);

struct SmoteResult {
  Tensor images;  // (n_new, C, H, W)
  std::vector<std::pair<std::size_t, std::size_t>> parents;  // (sample, neighbour)
  std::vector<double> lambdas;
};

/// x_new = x_i + lambda (x_nn - x_i) with x_nn among the k nearest minority
/// neighbours of x_i in pixel space. `fixed_lambda` pins lambda for testing.
SmoteResult smote_oversample(const Tensor& minority, std::size_t k, std::size_t n_new,
                             RngStream& rng, std::optional<double> fixed_lambda = std::nullopt);

// ---- files ----------------------------------------------------------------------

/// Binary dataset file: "DPTD" magic, u32 version, u64 N, C, H, W, N label
/// bytes, N provenance bytes, then N*C*H*W little-endian f64 pixel values.
void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_dataset(const std::filesystem::path& path);

/// Portable graymap (binary P5, 8-bit) of one channel-0 image.
void write_pgm(std::span<const double> image, std::size_t height, std::size_t width,
               const std::filesystem::path& path);
/// Tiles the first `count` images of an (N, C, H, W) tensor into one PGM grid.
void write_pgm_grid(const Tensor& images, std::size_t count, std::size_t columns,
                    const std::filesystem::path& path);

}  // namespace diffupt::data
