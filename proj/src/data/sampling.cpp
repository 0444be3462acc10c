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

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace

SplitResult stratified_split(const LabeledDataset& ds, SplitFractions fractions,
                             double test_minority_fraction, std::uint64_t seed,
                             std::optional<double> val_minority_fraction) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw DatasetError("split fractions must be non-negative and sum to 1");
  }
  if (test_minority_fraction < 0.0 || test_minority_fraction > 1.0) {
    throw DatasetError("test minority fraction must lie in [0, 1]");
  }
  const std::size_t n = ds.size();
  const auto counts = ds.class_counts();
  const std::size_t n_test = round_count(fractions.test * static_cast<double>(n));
  const std::size_t n_val = std::min(n - n_test, round_count(fractions.val * static_cast<double>(n)));

  const std::size_t test_pos = round_count(test_minority_fraction * static_cast<double>(n_test));
  const double val_frac = val_minority_fraction.value_or(counts.positive_fraction());
  const std::size_t val_pos = round_count(val_frac * static_cast<double>(n_val));
  const std::size_t test_neg = n_test - test_pos;
  const std::size_t val_neg = n_val - val_pos;

  if (test_pos + val_pos > counts.positive) {
    throw DatasetError("insufficient minority samples: validation and test need " +
                       std::to_string(test_pos + val_pos) + ", have " +
                       std::to_string(counts.positive) + " (deficit " +
                       std::to_string(test_pos + val_pos - counts.positive) + ")");
  }
  if (test_neg + val_neg > counts.negative) {
    throw DatasetError("insufficient majority samples: validation and test need " +
                       std::to_string(test_neg + val_neg) + ", have " +
                       std::to_string(counts.negative) + " (deficit " +
                       std::to_string(test_neg + val_neg - counts.negative) + ")");
  }

  RngStream rng(seed);
  auto pos = ds.indices_of(kPositive);
  auto neg = ds.indices_of(kNegative);
  rng.shuffle(pos);
  rng.shuffle(neg);

  std::vector<std::size_t> test(pos.begin(), pos.begin() + static_cast<long>(test_pos));
  test.insert(test.end(), neg.begin(), neg.begin() + static_cast<long>(test_neg));
  std::vector<std::size_t> val(pos.begin() + static_cast<long>(test_pos),
                               pos.begin() + static_cast<long>(test_pos + val_pos));
  val.insert(val.end(), neg.begin() + static_cast<long>(test_neg),
             neg.begin() + static_cast<long>(test_neg + val_neg));
  std::vector<std::size_t> train(pos.begin() + static_cast<long>(test_pos + val_pos), pos.end());
  train.insert(train.end(), neg.begin() + static_cast<long>(test_neg + val_neg), neg.end());

  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(val), ds.subset(test)};
}

ClassWeights class_weights(ClassCounts counts) {
  if (counts.negative == 0 || counts.positive == 0) {
    throw DatasetError("class weights need both classes present (negative " +
                       std::to_string(counts.negative) + ", positive " +
                       std::to_string(counts.positive) + ")");
  }
  const double n = static_cast<double>(counts.total());
  return {n / (2.0 * static_cast<double>(counts.negative)),
          n / (2.0 * static_cast<double>(counts.positive))};
}

ClassWeights class_weights(const LabeledDataset& ds) { return class_weights(ds.class_counts()); }

IndexSampler::IndexSampler(SamplerSpec spec, const LabeledDataset& ds, RngStream rng)
    : kind_(spec.kind), n_(ds.size()), rng_(rng) {
  if (ds.empty()) throw DatasetError("cannot sample from an empty dataset");
  negatives_ = ds.indices_of(kNegative);
  positives_ = ds.indices_of(kPositive);
  const double nn = static_cast<double>(negatives_.size());
  const double np = static_cast<double>(positives_.size());
  if (kind_ == SamplerKind::kUniform || negatives_.empty() || positives_.empty()) {
    kind_ = SamplerKind::kUniform;
    p_positive_ = np / (nn + np);
    return;
  }
  const ClassWeights w = spec.class_weights.value_or(class_weights(ds));
  if (!(w.negative > 0.0 && w.positive > 0.0)) {
    throw DatasetError("sampler class weights must be positive");
  }
  p_positive_ = w.positive * np / (w.positive * np + w.negative * nn);
}

std::size_t IndexSampler::next() {
  if (kind_ == SamplerKind::kUniform) return rng_.below(n_);
  const bool positive = rng_.uniform() < p_positive_;
  const auto& pool = positive ? positives_ : negatives_;
  return pool[rng_.below(pool.size())];
}

std::vector<std::size_t> IndexSampler::batch(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = next();
  return out;
}

IndexSampler make_sampler(const SamplerSpec& spec, const LabeledDataset& ds, RngStream rng) {
  return IndexSampler(spec, ds, rng);
}

SmoteResult smote_oversample(const Tensor& minority, std::size_t k, std::size_t n_new,
                             RngStream& rng, std::optional<double> fixed_lambda) {
  if (minority.rank() != 4) {
    throw DatasetError("smote expects (N, C, H, W) images, got " +
                       num::to_string(minority.shape()));
  }
  const std::size_t m = minority.dim(0);
  if (k < 1 || m <= k) {
    throw DatasetError("smote needs more minority samples (" + std::to_string(m) +
                       ") than neighbours k (" + std::to_string(k) + ")");
  }
  const std::size_t d = minority.size() / m;
  const auto x = minority.data();

  std::vector<std::vector<std::size_t>> neighbours(m);
  std::vector<std::pair<double, std::size_t>> dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = x[i * d + p] - x[j * d + p];
        s += diff * diff;
      }
      dist[j] = {j == i ? INFINITY : s, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    for (std::size_t r = 0; r < k; ++r) neighbours[i].push_back(dist[r].second);
  }

  SmoteResult out;
  std::vector<double> values(n_new * d);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t i = rng.below(m);
    const std::size_t j = neighbours[i][rng.below(k)];
    const double lambda = fixed_lambda ? *fixed_lambda : rng.uniform();
    for (std::size_t p = 0; p < d; ++p) {
      values[s * d + p] = x[i * d + p] + lambda * (x[j * d + p] - x[i * d + p]);
    }
    out.parents.emplace_back(i, j);
    out.lambdas.push_back(lambda);
  }
  num::Shape shape = minority.shape();
  shape[0] = n_new;
  out.images = Tensor(std::move(shape), std::move(values));
  return out;
}

}  // namespace diffupt::data
