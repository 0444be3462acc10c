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
#include <cmath>
#include <cstdio>

#include "diffupt/classifier.hpp"

namespace diffupt::cls {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Gaussian {
  VectorXd mean;
  MatrixXd cov;
};

Gaussian fit(const metrics::Features& f, const std::vector<std::size_t>& rows) {
  const auto d = static_cast<Eigen::Index>(f.cols);
  Gaussian g{VectorXd::Zero(d), MatrixXd::Zero(d, d)};
  for (std::size_t r : rows) {
    g.mean += Eigen::Map<const VectorXd>(f.values.data() + r * f.cols, d);
  }
  g.mean /= static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const VectorXd c = Eigen::Map<const VectorXd>(f.values.data() + r * f.cols, d) - g.mean;
    g.cov += c * c.transpose();
  }
  g.cov /= static_cast<double>(rows.size() > 1 ? rows.size() - 1 : 1);
  return g;
}

// log det of a symmetric positive definite matrix.
double log_det(const MatrixXd& m) {
  Eigen::LDLT<MatrixXd> ldlt(m);
  return ldlt.vectorD().array().log().sum();
}

}  // namespace

EmbeddingStats embedding_stats(const metrics::Features& feats, std::span<const std::uint8_t> labels) {
  if (labels.size() != feats.rows) throw ClassifierError("embedding_stats: one label per row required");
  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (neg.size() < 2 || pos.size() < 2) {
    throw ClassifierError("embedding_stats: need at least two samples of each class");
  }
  const Gaussian g0 = fit(feats, neg);
  const Gaussian g1 = fit(feats, pos);
  EmbeddingStats s;
  s.trace_cov_negative = g0.cov.trace();
  s.trace_cov_positive = g1.cov.trace();

  // A small ridge keeps rank-deficient covariances (dead features) invertible.
  const auto d = static_cast<Eigen::Index>(feats.cols);
  const double ridge = 1e-6 * (1.0 + 0.5 * (s.trace_cov_negative + s.trace_cov_positive) /
                                         static_cast<double>(d));
  const MatrixXd c0 = g0.cov + ridge * MatrixXd::Identity(d, d);
  const MatrixXd c1 = g1.cov + ridge * MatrixXd::Identity(d, d);
  const MatrixXd c = 0.5 * (c0 + c1);
  const VectorXd diff = g1.mean - g0.mean;
  s.bhattacharyya = 0.125 * diff.dot(c.ldlt().solve(diff)) +
                    0.5 * (log_det(c) - 0.5 * (log_det(c0) + log_det(c1)));

  auto dist = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < feats.cols; ++k) {
      const double t = feats.at(a, k) - feats.at(b, k);
      acc += t * t;
    }
    return std::sqrt(acc);
  };
  double between = 0.0;
  for (std::size_t a : neg) {
    for (std::size_t b : pos) between += dist(a, b);
  }
  s.between_mean_distance = between / static_cast<double>(neg.size() * pos.size());
  double within = 0.0;
  std::size_t pairs = 0;
  for (const auto* group : {&neg, &pos}) {
    for (std::size_t i = 0; i < group->size(); ++i) {
      for (std::size_t j = i + 1; j < group->size(); ++j) {
        within += dist((*group)[i], (*group)[j]);
        ++pairs;
      }
    }
  }
  s.within_mean_distance = within / static_cast<double>(pairs);
  return s;
}

std::string to_csv(const EmbeddingStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f", s.trace_cov_negative,
                s.trace_cov_positive, s.bhattacharyya, s.between_mean_distance,
                s.within_mean_distance);
  return buf;
}

}  // namespace diffupt::cls
