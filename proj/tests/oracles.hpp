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

// Reference computations used by the tests. Each one is written the slow,
// obvious way and shares no code with the library.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "diffupt/tensor.hpp"

namespace oracle {

using diffupt::num::Tensor;

/// Nested-loop convolution of (N, Cin, H, W) by (Cout, Cin, K, K).
inline std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                                  std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t di = 0; di < k; ++di)
              for (std::size_t dj = 0; dj < k; ++dj) {
                const long yy = static_cast<long>(i * stride + di) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + dj) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += x[((s * cin + c) * h + yy) * wd + xx] * w[((o * cin + c) * k + di) * k + dj];
              }
          out[((s * cout + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

/// Central differences of f with respect to every entry of `values`.
inline std::vector<double> central_difference(const std::function<double()>& f, std::span<double> values,
                                              double h) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// P(score_pos > score_neg) + 0.5 P(tie), over all pairs.
inline double pairwise_auc(std::span<const double> s, std::span<const std::uint8_t> y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Frechet distance using the eigenvalues of the (non-symmetric) product
/// S_a S_b: tr((S_a S_b)^(1/2)) is the sum of their square roots.
inline double frechet(const Eigen::VectorXd& ma, const Eigen::MatrixXd& sa, const Eigen::VectorXd& mb,
                      const Eigen::MatrixXd& sb) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb);
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(es.eigenvalues()[i]).real();
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2 * tr_sqrt;
}

/// Sample mean and (n - 1)-normalized covariance of row-major (n, d) data.
inline void moments(const std::vector<double>& x, std::size_t n, std::size_t d, Eigen::VectorXd& mean,
                    Eigen::MatrixXd& cov) {
  mean = Eigen::VectorXd::Zero(d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x[r * d + c] / n;
  cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += (x[r * d + a] - mean[a]) * (x[r * d + b] - mean[b]) / (n - 1.0);
}

/// 2 s p / (s + p)
inline double harmonic_mean(double s, double p) { return s + p == 0 ? 0.0 : 2 * s * p / (s + p); }

/// Single 8x8-window SSIM terms straight from the definition (population
/// variances, C1 = 0.01^2, C2 = 0.03^2).
inline double window_ssim(std::span<const double> a, std::span<const double> b, std::size_t w, std::size_t r0,
                          std::size_t c0, bool luminance) {
  const double c1 = 1e-4, c2 = 9e-4;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      ma += a[(r0 + i) * w + c0 + j] / 64;
      mb += b[(r0 + i) * w + c0 + j] / 64;
    }
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double da = a[(r0 + i) * w + c0 + j] - ma, db = b[(r0 + i) * w + c0 + j] - mb;
      va += da * da / 64;
      vb += db * db / 64;
      cov += da * db / 64;
    }
  const double cs = (2 * cov + c2) / (va + vb + c2);
  return luminance ? cs * (2 * ma * mb + c1) / (ma * ma + mb * mb + c1) : cs;
}

}  // namespace oracle
