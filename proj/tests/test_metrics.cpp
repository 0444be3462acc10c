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
#include <numeric>
#include <vector>

#include "doctest.h"
#include "diffupt/metrics.hpp"
#include "diffupt/rng.hpp"
#include "oracles.hpp"

using namespace diffupt;
using diffupt::num::RngStream;

namespace {

metrics::Features gaussian_features(std::size_t n, std::size_t d, double shift, RngStream& rng) {
  metrics::Features f{n, d, std::vector<double>(n * d)};
  for (double& v : f.values) v = rng.normal() + shift;
  return f;
}

}  // namespace

TEST_CASE("confusion of a perfect predictor has no errors") {
  const std::vector<double> p{0.9, 0.1, 0.8, 0.2};
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  const auto c = metrics::confusion(p, y);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.tp == 2);
  CHECK(c.tn == 2);
}

TEST_CASE("all-positive predictor counts every negative as a false positive") {
  std::vector<std::uint8_t> y(30, 0);
  std::fill(y.begin(), y.begin() + 7, 1);
  const std::vector<double> p(y.size(), 1.0);
  const auto c = metrics::confusion(p, y);
  CHECK(c.tp == 7);
  CHECK(c.fp == 23);
  CHECK(c.tn == 0);
  CHECK(c.fn == 0);
  CHECK(c.positives() == 7);
  CHECK(c.negatives() == 23);
}

TEST_CASE("threshold ties count as positive") {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{1};
  CHECK(metrics::confusion(p, y).tp == 1);
}

TEST_CASE("sensitivity of 93.09 percent on 521 positives means 485 hits") {
  const std::size_t positives = 521;
  const auto tp = static_cast<std::size_t>(std::llround(0.9309 * positives));
  CHECK(tp == 485);
  metrics::ConfusionCounts c;
  c.tp = tp;
  c.fn = positives - tp;
  CHECK(c.fn == 36);
  CHECK(*metrics::sensitivity(c) == doctest::Approx(93.09).epsilon(1e-3));
}

TEST_CASE("rates are undefined without the relevant class") {
  metrics::ConfusionCounts c;
  c.tn = 4;
  CHECK_FALSE(metrics::sensitivity(c).has_value());
  CHECK(*metrics::specificity(c) == 100.0);
  CHECK_FALSE(metrics::harmonic_mean(metrics::sensitivity(c), metrics::specificity(c)).has_value());
  CHECK(metrics::format_percent(std::nullopt) == "NA");
}

TEST_CASE("harmonic mean of published rate pairs") {
  CHECK(std::abs(metrics::harmonic_mean(83.69, 95.23) - 89.09) <= 0.01);
  CHECK(std::abs(metrics::harmonic_mean(93.09, 92.1) - 92.59) <= 0.01);
  for (double x : {0.0, 12.5, 50.0, 100.0}) CHECK(metrics::harmonic_mean(x, x) == doctest::Approx(x));
  CHECK(metrics::harmonic_mean(0.0, 0.0) == 0.0);
}

TEST_CASE("harmonic mean never exceeds the larger rate") {
  RngStream rng(17);
  for (int i = 0; i < 500; ++i) {
    const double s = rng.uniform(0, 100), p = rng.uniform(0, 100);
    const double h = metrics::harmonic_mean(s, p);
    CHECK(h <= std::max(s, p) + 1e-12);
    CHECK(h >= std::min(s, p) - 1e-12);
    CHECK(h == doctest::Approx(oracle::harmonic_mean(s, p)));
  }
}

TEST_CASE("auc edge cases") {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(*metrics::auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
  CHECK(*metrics::auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y) == 0.5);
  CHECK_FALSE(metrics::auc(std::vector<double>{0.3, 0.4}, std::vector<std::uint8_t>{1, 1}).has_value());
}

TEST_CASE("auc equals the pairwise ranking probability") {
  RngStream rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> s(200);
    std::vector<std::uint8_t> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = rng.uniform() < 0.3 ? 1 : 0;
      // coarse scores so ties occur
      s[i] = std::round((rng.normal() + y[i]) * 4) / 4;
    }
    CHECK(*metrics::auc(s, y) == doctest::Approx(oracle::pairwise_auc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("frechet distance closed forms") {
  RngStream rng(31);
  const auto f = gaussian_features(50, 3, 0.0, rng);
  CHECK(std::abs(metrics::frechet_feature_distance(f, f)) < 1e-8);
  const std::vector<double> m0{0.0}, m1{1.0}, one{1.0};
  CHECK(metrics::frechet_from_moments(m0, one, m1, one) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frechet distance matches an eigenvalue oracle on random 4-D Gaussians") {
  RngStream rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = gaussian_features(80, 4, 0.0, rng);
    auto b = gaussian_features(60, 4, 0.5, rng);
    for (std::size_t r = 0; r < b.rows; ++r) b.values[r * 4] *= 2.0;  // anisotropic
    Eigen::VectorXd ma, mb;
    Eigen::MatrixXd sa, sb;
    oracle::moments(a.values, a.rows, 4, ma, sa);
    oracle::moments(b.values, b.rows, 4, mb, sb);
    CHECK(metrics::frechet_feature_distance(a, b) == doctest::Approx(oracle::frechet(ma, sa, mb, sb)).epsilon(1e-6));
  }
}

TEST_CASE("frechet distance needs enough samples") {
  RngStream rng(1);
  const auto small = gaussian_features(3, 4, 0.0, rng);
  CHECK_THROWS_AS(metrics::frechet_feature_distance(small, small), metrics::MetricError);
}

TEST_CASE("kernel distance: same distribution is within the permutation null") {
  RngStream rng(41);
  const auto a = gaussian_features(60, 4, 0.0, rng);
  const auto b = gaussian_features(60, 4, 0.0, rng);
  const double observed = metrics::kernel_feature_distance(a, b);

  // Permutation null: reshuffle the pooled rows into two halves.
  std::vector<std::size_t> idx(120);
  std::iota(idx.begin(), idx.end(), 0);
  auto row = [&](std::size_t i) { return i < 60 ? &a.values[i * 4] : &b.values[(i - 60) * 4]; };
  std::vector<double> null;
  for (int p = 0; p < 40; ++p) {
    rng.shuffle(idx);
    metrics::Features x{60, 4, {}}, y{60, 4, {}};
    for (std::size_t i = 0; i < 120; ++i) {
      auto& dst = i < 60 ? x.values : y.values;
      dst.insert(dst.end(), row(idx[i]), row(idx[i]) + 4);
    }
    null.push_back(metrics::kernel_feature_distance(x, y));
  }
  const double mean = std::accumulate(null.begin(), null.end(), 0.0) / null.size();
  double var = 0;
  for (double v : null) var += (v - mean) * (v - mean) / (null.size() - 1.0);
  CHECK(std::abs(observed) < 3 * std::sqrt(var));

  const auto shifted = gaussian_features(60, 4, 1.0, rng);
  CHECK(metrics::kernel_feature_distance(a, shifted) > observed);
}

TEST_CASE("polynomial kernel is symmetric") {
  RngStream rng(43);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(5), y(5);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    CHECK(metrics::polynomial_kernel(x, y) == metrics::polynomial_kernel(y, x));
  }
}

TEST_CASE("inception score analog bounds") {
  CHECK(metrics::inception_score_analog(std::vector<double>(10, 0.5)) == doctest::Approx(1.0));
  std::vector<double> confident(10, 1.0);
  std::fill(confident.begin(), confident.begin() + 5, 0.0);
  CHECK(metrics::inception_score_analog(confident) == doctest::Approx(2.0));
  RngStream rng(47);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(20);
    for (auto& v : p) v = rng.uniform();
    const double is = metrics::inception_score_analog(p);
    CHECK(is >= 1.0);
    CHECK(is <= 2.0);
  }
}

TEST_CASE("ssim basics") {
  RngStream rng(53);
  std::vector<double> x(16 * 16), inv(16 * 16);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    inv[i] = 1.0 - x[i];
  }
  CHECK(metrics::ssim(x, x, 1, 16, 16) == doctest::Approx(1.0));
  CHECK(metrics::ssim(x, inv, 1, 16, 16) < metrics::ssim(x, x, 1, 16, 16));
  CHECK_THROWS_AS(metrics::ssim(std::vector<double>(16), std::vector<double>(16), 1, 4, 4), metrics::MetricError);
}

TEST_CASE("ssim equals the direct window formula") {
  RngStream rng(59);
  std::vector<double> a(12 * 10), b(12 * 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform();
    b[i] = std::clamp(a[i] + 0.2 * rng.normal(), 0.0, 1.0);
  }
  double full = 0, cs = 0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + 8 <= 12; ++r)
    for (std::size_t c = 0; c + 8 <= 10; ++c) {
      full += oracle::window_ssim(a, b, 10, r, c, true);
      cs += oracle::window_ssim(a, b, 10, r, c, false);
      ++windows;
    }
  CHECK(metrics::ssim(a, b, 1, 12, 10) == doctest::Approx(full / windows).epsilon(1e-12));
  CHECK(metrics::ssim_contrast_structure(a, b, 1, 12, 10) == doctest::Approx(cs / windows).epsilon(1e-12));
}

TEST_CASE("contrast-structure ssim ignores a common offset") {
  RngStream rng(61);
  std::vector<double> a(16 * 16), b(16 * 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(0, 0.5);
    b[i] = rng.uniform(0, 0.5);
  }
  const double before = metrics::ssim_contrast_structure(a, b, 1, 16, 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] += 0.3;
    b[i] += 0.3;
  }
  CHECK(std::abs(metrics::ssim_contrast_structure(a, b, 1, 16, 16) - before) < 1e-6);
}

TEST_CASE("metric rows are internally consistent") {
  RngStream rng(67);
  std::vector<double> p(300);
  std::vector<std::uint8_t> y(300);
  for (std::size_t i = 0; i < p.size(); ++i) {
    y[i] = rng.uniform() < 0.25;
    p[i] = std::clamp(0.5 + 0.3 * (y[i] ? 1 : -1) + 0.3 * rng.normal(), 0.0, 1.0);
  }
  const auto row = metrics::evaluate("m", "test", p, y);
  for (const auto& v : {row.sensitivity, row.specificity, row.auc, row.harmonic_mean}) {
    REQUIRE(v.has_value());
    CHECK(*v >= 0.0);
    CHECK(*v <= 100.0);
  }
  CHECK(std::abs(*row.harmonic_mean - oracle::harmonic_mean(*row.sensitivity, *row.specificity)) <= 0.01);
  CHECK(row.confusion.tp + row.confusion.fn == static_cast<std::size_t>(std::count(y.begin(), y.end(), 1)));
  const auto csv = metrics::to_csv(row);
  CHECK(csv.rfind("m,test,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), ',') == 5);
}
