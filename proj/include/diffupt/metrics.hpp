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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffupt::metrics {

/// Percentage in [0, 100], or nullopt when the rate is undefined (zero
/// denominator). Reports print undefined values as "NA".
using Percent = std::optional<double>;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::string subgroup;  // optional grouping key, empty for the whole set

  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Predicted positive iff prob >= threshold.
ConfusionCounts confusion(std::span<const double> probs, std::span<const std::uint8_t> labels,
                          double threshold = 0.5);

Percent sensitivity(const ConfusionCounts& c);
Percent specificity(const ConfusionCounts& c);
/// 2 s p / (s + p); 0 when both rates are 0.
double harmonic_mean(double sens, double spec);
Percent harmonic_mean(Percent sens, Percent spec);

/// Trapezoidal ROC area over all distinct thresholds (tied scores form one
/// ROC vertex). nullopt unless both classes are present.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Row-major (n, d) feature matrix.
struct Features {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)) between Gaussian fits.
/// Each set needs at least d + 1 samples.
double frechet_feature_distance(const Features& a, const Features& b);
/// Same distance from population moments; covariances are row-major d x d.
double frechet_from_moments(std::span<const double> mean_a, std::span<const double> cov_a,
                            std::span<const double> mean_b, std::span<const double> cov_b);

/// Polynomial kernel (x.y / d + 1)^3.
double polynomial_kernel(std::span<const double> x, std::span<const double> y);
/// Unbiased squared MMD under polynomial_kernel.
double kernel_feature_distance(const Features& a, const Features& b);

/// exp(mean_x KL(p(y|x) || p(y))) for a binary scorer; `positive_probs`
/// holds p(y=1|x). Lies in [1, 2].
double inception_score_analog(std::span<const double> positive_probs);

/// Mean SSIM over all 8x8 windows (stride 1) of each channel; dynamic range 1.
/// Images are (C, H, W) flattened; H and W must be at least 8.
double ssim(std::span<const double> a, std::span<const double> b, std::size_t channels,
            std::size_t height, std::size_t width);
/// Contrast-structure factor of SSIM (the luminance term dropped), averaged
/// over the same windows. Invariant to adding one constant to both images.
double ssim_contrast_structure(std::span<const double> a, std::span<const double> b,
                               std::size_t channels, std::size_t height, std::size_t width);

// ---- report rows ---------------------------------------------------------------

/// One (method, split) row; rates are percentages.
struct MetricRow {
  std::string method;
  std::string split;
  Percent sensitivity;
  Percent specificity;
  Percent auc;
  Percent harmonic_mean;
  ConfusionCounts confusion;
};

/// Evaluates scores against labels at threshold 0.5.
MetricRow evaluate(std::string method, std::string split, std::span<const double> probs,
                   std::span<const std::uint8_t> labels);

struct GenerationRow {
  std::string model;
  std::size_t nfe = 0;
  double fid = 0;
  double kid = 0;
  double is = 0;
  double sampling_time_s = 0;
};

/// Column order: method,split,sens,spec,auc,hm
inline constexpr const char* kMetricHeader = "method,split,sens,spec,auc,hm";
/// Column order: model,nfe,fid_analog,kid_analog,is_analog,sampling_time_s
inline constexpr const char* kGenerationHeader =
    "model,nfe,fid_analog,kid_analog,is_analog,sampling_time_s";
inline constexpr const char* kConfusionHeader = "method,split,subgroup,tp,fp,tn,fn";

std::string format_percent(Percent p);
std::string to_csv(const MetricRow& row);
std::string to_csv(const GenerationRow& row);
std::string confusion_csv(const MetricRow& row);

}  // namespace diffupt::metrics
