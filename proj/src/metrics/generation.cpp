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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "diffupt/metrics.hpp"

namespace diffupt::metrics {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void moments(const Features& f, VectorXd& mu, MatrixXd& cov) {
  const auto n = static_cast<Eigen::Index>(f.rows);
  const auto d = static_cast<Eigen::Index>(f.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      f.values.data(), n, d);
  mu = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

// tr((A B)^(1/2)) for symmetric PSD A, B, via the symmetric form
// A^(1/2) B A^(1/2), which has the same eigenvalues as A B.
double trace_sqrt_product(const MatrixXd& a, const MatrixXd& b) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> ea(a);
  const VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  MatrixXd m = sqrt_a * b * sqrt_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> em(m, Eigen::EigenvaluesOnly);
  return em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

double frechet(const VectorXd& mu_a, const MatrixXd& cov_a, const VectorXd& mu_b,
               const MatrixXd& cov_b) {
  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double value =
      mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt_product(cov_a, cov_b);
  return std::max(value, 0.0);
}

void check_features(const Features& f, const char* which) {
  if (f.values.size() != f.rows * f.cols) {
    throw MetricError(std::string(which) + ": feature matrix size does not match its shape");
  }
}

}  // namespace

double frechet_feature_distance(const Features& a, const Features& b) {
  check_features(a, "frechet_feature_distance");
  check_features(b, "frechet_feature_distance");
  if (a.cols != b.cols) throw MetricError("frechet_feature_distance: feature widths differ");
  if (a.rows < a.cols + 1 || b.rows < b.cols + 1) {
    throw MetricError("frechet_feature_distance: need at least " + std::to_string(a.cols + 1) +
                      " samples per set, got " + std::to_string(a.rows) + " and " +
                      std::to_string(b.rows));
  }
  VectorXd mu_a, mu_b;
  MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  return frechet(mu_a, cov_a, mu_b, cov_b);
}

double frechet_from_moments(std::span<const double> mean_a, std::span<const double> cov_a,
                            std::span<const double> mean_b, std::span<const double> cov_b) {
  const auto d = static_cast<Eigen::Index>(mean_a.size());
  if (mean_b.size() != mean_a.size() || cov_a.size() != mean_a.size() * mean_a.size() ||
      cov_b.size() != cov_a.size()) {
    throw MetricError("frechet_from_moments: inconsistent moment dimensions");
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const VectorXd ma = Eigen::Map<const VectorXd>(mean_a.data(), d);
  const VectorXd mb = Eigen::Map<const VectorXd>(mean_b.data(), d);
  const MatrixXd ca = Eigen::Map<const RowMat>(cov_a.data(), d, d);
  const MatrixXd cb = Eigen::Map<const RowMat>(cov_b.data(), d, d);
  return frechet(ma, ca, mb, cb);
}

double polynomial_kernel(std::span<const double> x, std::span<const double> y) {
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  const double base = dot / static_cast<double>(x.size()) + 1.0;
  return base * base * base;
}

double kernel_feature_distance(const Features& a, const Features& b) {
  check_features(a, "kernel_feature_distance");
  check_features(b, "kernel_feature_distance");
  if (a.cols != b.cols) throw MetricError("kernel_feature_distance: feature widths differ");
  if (a.rows < 2 || b.rows < 2) throw MetricError("kernel_feature_distance: need >= 2 samples each");
  const std::size_t d = a.cols;
  auto row = [d](const Features& f, std::size_t i) {
    return std::span<const double>(f.values.data() + i * d, d);
  };
  auto within = [&](const Features& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.rows; ++i) {
      for (std::size_t j = i + 1; j < f.rows; ++j) s += polynomial_kernel(row(f, i), row(f, j));
    }
    const double n = static_cast<double>(f.rows);
    return 2.0 * s / (n * (n - 1.0));
  };
  double cross = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) cross += polynomial_kernel(row(a, i), row(b, j));
  }
  cross /= static_cast<double>(a.rows) * static_cast<double>(b.rows);
  return within(a) + within(b) - 2.0 * cross;
}

double inception_score_analog(std::span<const double> positive_probs) {
  if (positive_probs.empty()) return 1.0;
  double marginal = 0.0;
  for (double p : positive_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw MetricError("inception_score_analog: probability outside [0, 1]");
    marginal += p;
  }
  marginal /= static_cast<double>(positive_probs.size());
  auto term = [](double p, double q) { return p > 0.0 ? p * std::log(p / q) : 0.0; };
  double kl = 0.0;
  for (double p : positive_probs) kl += term(p, marginal) + term(1.0 - p, 1.0 - marginal);
  kl /= static_cast<double>(positive_probs.size());
  return std::clamp(std::exp(kl), 1.0, 2.0);
}

// ---- SSIM -----------------------------------------------------------------------

namespace {

constexpr std::size_t kWindow = 8;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

template <typename F>
double window_mean(std::span<const double> a, std::span<const double> b, std::size_t channels,
                   std::size_t height, std::size_t width, F score) {
  if (a.size() != b.size() || a.size() != channels * height * width) {
    throw MetricError("ssim: image shapes differ");
  }
  if (height < kWindow || width < kWindow) throw MetricError("ssim: images smaller than 8x8");
  const double n = static_cast<double>(kWindow * kWindow);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* pa = a.data() + c * height * width;
    const double* pb = b.data() + c * height * width;
    for (std::size_t y0 = 0; y0 + kWindow <= height; ++y0) {
      for (std::size_t x0 = 0; x0 + kWindow <= width; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t y = y0; y < y0 + kWindow; ++y) {
          for (std::size_t x = x0; x < x0 + kWindow; ++x) {
            const double va = pa[y * width + x], vb = pb[y * width + x];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double mu_a = sa / n, mu_b = sb / n;
        const double var_a = std::max(saa / n - mu_a * mu_a, 0.0);
        const double var_b = std::max(sbb / n - mu_b * mu_b, 0.0);
        const double cov = sab / n - mu_a * mu_b;
        total += score(mu_a, mu_b, var_a, var_b, cov);
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

double ssim(std::span<const double> a, std::span<const double> b, std::size_t channels,
            std::size_t height, std::size_t width) {
  return window_mean(a, b, channels, height, width,
                     [](double ma, double mb, double va, double vb, double cov) {
                       return ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                              ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                     });
}

double ssim_contrast_structure(std::span<const double> a, std::span<const double> b,
                               std::size_t channels, std::size_t height, std::size_t width) {
  return window_mean(a, b, channels, height, width,
                     [](double, double, double va, double vb, double cov) {
                       return (2 * cov + kC2) / (va + vb + kC2);
                     });
}

}  // namespace diffupt::metrics
