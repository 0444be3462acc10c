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
#include <cstring>
#include <vector>

#include "doctest.h"
#include "diffupt/classifier.hpp"

using namespace diffupt;
using data::LabeledDataset;
using num::RngStream;
using num::Tensor;

namespace {

// Two features stored as a (2, 1, 1) image per sample.
LabeledDataset two_feature_set(std::size_t n_neg, std::size_t n_pos, double centre_gap, double sd, RngStream& rng) {
  const std::size_t n = n_neg + n_pos;
  Tensor x({n, 2, 1, 1});
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i >= n_neg;
    const double centre = 0.5 + (y[i] ? 0.5 : -0.5) * centre_gap;
    for (std::size_t c = 0; c < 2; ++c) x.data()[i * 2 + c] = std::clamp(centre + sd * rng.normal(), 0.0, 1.0);
  }
  return LabeledDataset(x, y, std::vector<data::Provenance>(n, data::Provenance::kReal));
}

cls::ClassifierConfig toy_config(std::uint64_t seed) { return {2, 1, 1, {8, 8}, seed}; }

double accuracy(cls::ClassifierModel& m, const LabeledDataset& ds) {
  const auto p = m.predict_proba(ds.images());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (ds.labels()[i] == 1);
  return static_cast<double>(ok) / p.size();
}

double minority_recall(cls::ClassifierModel& m, const LabeledDataset& ds) {
  const auto p = m.predict_proba(ds.images());
  std::size_t hit = 0, pos = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (ds.labels()[i] != 1) continue;
    ++pos;
    hit += p[i] >= 0.5;
  }
  return static_cast<double>(hit) / pos;
}

}  // namespace

TEST_CASE("binary cross-entropy closed forms") {
  const std::vector<std::uint8_t> one{1};
  CHECK(cls::bce_loss(Tensor::from({0.0}), one).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const std::vector<std::uint8_t> y{1, 0, 1};
  CHECK(cls::bce_loss(Tensor::from({40.0, -40.0, 40.0}), y).item() < 1e-6);
  CHECK(std::isfinite(cls::bce_loss(Tensor::from({-800.0}), one).item()));
}

TEST_CASE("unit class weights reproduce the unweighted loss exactly") {
  RngStream rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits({16});
    std::vector<std::uint8_t> y(16);
    for (std::size_t i = 0; i < 16; ++i) {
      logits.data()[i] = 3 * rng.normal();
      y[i] = rng.uniform() < 0.3;
    }
    CHECK(cls::bce_loss(logits, y, data::ClassWeights{1.0, 1.0}).item() == cls::bce_loss(logits, y).item());
  }
  CHECK_THROWS_AS(cls::bce_loss(Tensor::from({0.0}), std::vector<std::uint8_t>{1}, data::ClassWeights{0.0, 1.0}),
                  cls::ClassifierError);
}

TEST_CASE("zero iterations leave the model unchanged") {
  RngStream rng(2);
  const auto ds = two_feature_set(20, 20, 0.5, 0.05, rng);
  cls::ClassifierModel m(toy_config(3));
  const auto before = m.parameters();
  cls::TrainRegime r;
  r.iterations = 0;
  cls::train_classifier(m, ds, nullptr, r, RngStream(4));
  CHECK(m.parameters().bitwise_equal(before));
  CHECK(m.trained_steps() == 0);
}

TEST_CASE("separable two-feature data is learned") {
  RngStream rng(5);
  const auto ds = two_feature_set(300, 300, 0.5, 0.06, rng);
  cls::ClassifierModel m(toy_config(6));
  cls::TrainRegime r;
  r.iterations = 2000;
  r.lr = 3e-3;
  cls::train_classifier(m, ds, nullptr, r, RngStream(7));
  CHECK(accuracy(m, ds) > 0.99);
  CHECK(m.trained_steps() == 2000);
}

TEST_CASE("training is bitwise reproducible") {
  RngStream rng(8);
  const auto ds = two_feature_set(50, 20, 0.4, 0.1, rng);
  cls::TrainRegime r;
  r.iterations = 100;
  r.sampler.kind = data::SamplerKind::kClassWeighted;
  cls::ClassifierModel a(toy_config(9)), b(toy_config(9));
  cls::train_classifier(a, ds, &ds, r, RngStream(10));
  cls::train_classifier(b, ds, &ds, r, RngStream(10));
  CHECK(a.parameters().bitwise_equal(b.parameters()));
}

TEST_CASE("validation history starts at iteration zero and restores the best weights") {
  RngStream rng(11);
  const auto train = two_feature_set(80, 20, 0.4, 0.1, rng);
  const auto val = two_feature_set(40, 10, 0.4, 0.1, rng);
  cls::ClassifierModel m(toy_config(12));
  cls::TrainRegime r;
  r.iterations = 300;
  r.eval_interval = 100;
  const auto h = cls::train_classifier(m, train, &val, r, RngStream(13));
  REQUIRE(h.rows.size() == 4);
  CHECK(h.rows.front().iteration == 0);
  CHECK(h.rows.back().iteration == 300);
  REQUIRE(h.best_val_hm.has_value());
  double best = -1;
  for (const auto& row : h.rows) best = std::max(best, row.val_hm.value_or(0.0));
  CHECK(*h.best_val_hm == doctest::Approx(best));
  CHECK(*cls::evaluate_model(m, val, "m", "val").harmonic_mean == doctest::Approx(best));
}

TEST_CASE("head-only retraining keeps the feature weights") {
  RngStream rng(14);
  const auto ds = two_feature_set(90, 10, 0.3, 0.12, rng);
  cls::ClassifierModel m(toy_config(15));
  cls::TrainRegime r;
  r.iterations = 200;
  cls::train_classifier(m, ds, nullptr, r, RngStream(16));
  std::vector<std::vector<double>> features, heads;
  for (auto i : m.feature_parameters()) features.emplace_back(m.parameters()[i].data().begin(), m.parameters()[i].data().end());
  for (auto i : m.head_parameters()) heads.emplace_back(m.parameters()[i].data().begin(), m.parameters()[i].data().end());
  cls::multi_stage_retrain(m, ds, nullptr, r, RngStream(17));
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto& now = m.parameters()[m.feature_parameters()[k]];
    CHECK(std::memcmp(now.data().data(), features[k].data(), features[k].size() * sizeof(double)) == 0);
  }
  bool changed = false;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& now = m.parameters()[m.head_parameters()[k]];
    changed |= !std::equal(heads[k].begin(), heads[k].end(), now.data().begin());
  }
  CHECK(changed);
}

TEST_CASE("retraining an untrained model warns") {
  RngStream rng(18);
  const auto ds = two_feature_set(20, 5, 0.4, 0.1, rng);
  cls::ClassifierModel m(toy_config(19));
  cls::TrainRegime r;
  r.iterations = 10;
  const auto h = cls::multi_stage_retrain(m, ds, nullptr, r, RngStream(20));
  REQUIRE_FALSE(h.warnings.empty());
  CHECK(h.warnings.front().find("not been trained") != std::string::npos);
}

TEST_CASE("balanced head retraining raises minority recall") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream rng(100 + seed);
    const auto train = two_feature_set(950, 50, 0.25, 0.12, rng);
    const auto test = two_feature_set(500, 500, 0.25, 0.12, rng);
    cls::ClassifierModel m(toy_config(seed));
    cls::TrainRegime r;
    r.iterations = 600;
    r.lr = 3e-3;
    cls::train_classifier(m, train, nullptr, r, RngStream(seed).split("stage1"));
    const double before = minority_recall(m, test);
    cls::multi_stage_retrain(m, train, nullptr, r, RngStream(seed).split("stage2"));
    const double after = minority_recall(m, test);
    wins += after >= before;
  }
  CHECK(wins >= 4);
}

TEST_CASE("prediction shape and determinism") {
  cls::ClassifierModel m(cls::ClassifierConfig{});
  const auto ds = data::generate_synth_fundus({}, 7, 3);
  const auto a = m.predict_proba(ds.images());
  const auto b = m.predict_proba(ds.images());
  CHECK(a.size() == 10);
  CHECK(a == b);
  for (double p : a) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  const auto f = m.extract_features(ds.images());
  CHECK(f.rows == 10);
  CHECK(f.cols == m.feature_dim());
}

TEST_CASE("a trained model separates the classes in feature space") {
  data::SynthFundusConfig sc;
  sc.seed = 21;
  const auto pool = data::generate_synth_fundus(sc, 400, 400);
  const auto split = data::stratified_split(pool, {0.75, 0.0, 0.25}, 0.5, 22);
  cls::ClassifierModel m(cls::ClassifierConfig{1, 16, 16, {8, 16, 32}, 23});
  cls::TrainRegime r;
  r.iterations = 600;
  cls::train_classifier(m, split.train, nullptr, r, RngStream(24));
  const auto stats = cls::embedding_stats(m.extract_features(split.test.images()), split.test.labels());
  CHECK(stats.between_mean_distance > stats.within_mean_distance);
  CHECK(stats.bhattacharyya > 0.0);
  CHECK(stats.trace_cov_negative >= 0.0);
}
