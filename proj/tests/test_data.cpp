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
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "diffupt/data.hpp"

using namespace diffupt;
using data::LabeledDataset;
using num::RngStream;
using num::Tensor;

namespace {

// Tiny dataset whose single pixel value encodes the sample id.
LabeledDataset tagged(std::size_t n_neg, std::size_t n_pos) {
  const std::size_t n = n_neg + n_pos;
  Tensor images({n, 1, 1, 1});
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    images.data()[i] = static_cast<double>(i) / 4096.0;  // exact, unique, in [0, 1]
    labels[i] = i >= n_neg ? 1 : 0;
  }
  return LabeledDataset(images, labels, std::vector<data::Provenance>(n, data::Provenance::kReal));
}

std::multiset<double> ids(const LabeledDataset& ds) {
  std::multiset<double> s;
  for (std::size_t i = 0; i < ds.size(); ++i) s.insert(ds.image(i)[0]);
  return s;
}

}  // namespace

TEST_CASE("empty synthetic dataset") {
  const auto ds = data::generate_synth_fundus({}, 0, 0);
  CHECK(ds.empty());
  CHECK(ds.class_counts() == data::ClassCounts{0, 0});
  CHECK(ds.height() == 16);
}

TEST_CASE("synthetic pool mirrors the published training minority share") {
  data::SynthFundusConfig cfg;
  cfg.image_size = 8;
  const auto ds = data::generate_synth_fundus(cfg, 5000, 463);
  CHECK(ds.class_counts().positive_fraction() * 100 == doctest::Approx(8.47).epsilon(0.001));
  for (double v : ds.images().data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("synthetic images are reproducible from the seed") {
  data::SynthFundusConfig cfg;
  cfg.seed = 99;
  const auto a = data::generate_synth_fundus(cfg, 10, 10);
  const auto b = data::generate_synth_fundus(cfg, 10, 10);
  CHECK(std::equal(a.images().data().begin(), a.images().data().end(), b.images().data().begin()));
  cfg.seed = 100;
  const auto c = data::generate_synth_fundus(cfg, 10, 10);
  CHECK_FALSE(std::equal(a.images().data().begin(), a.images().data().end(), c.images().data().begin()));
}

TEST_CASE("measured cup ratio tracks the rendered one") {
  data::SynthFundusConfig cfg;
  cfg.noise_sd = 0.0;
  const auto ds = data::generate_synth_fundus(cfg, 100, 100);
  REQUIRE(ds.truth().size() == 200);
  double err = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    err += std::abs(data::measure_cup_ratio(ds.image(i), 16, 16, cfg) - ds.truth()[i].cup_ratio);
  }
  CHECK(err / ds.size() < 0.06);
}

TEST_CASE("a cup-ratio threshold separates the classes at low noise") {
  data::SynthFundusConfig cfg;
  cfg.noise_sd = 0.02;
  cfg.seed = 5;
  const auto ds = data::generate_synth_fundus(cfg, 400, 400);
  std::vector<std::pair<double, int>> scored;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    scored.emplace_back(data::measure_cup_ratio(ds.image(i), 16, 16, cfg), ds.labels()[i]);
  }
  // Best single threshold over the measured values.
  std::sort(scored.begin(), scored.end());
  std::size_t pos_above = 400, neg_below = 0, best = 0;
  for (std::size_t k = 0; k <= scored.size(); ++k) {
    best = std::max(best, pos_above + neg_below);
    if (k == scored.size()) break;
    if (scored[k].second == 1) --pos_above;
    else ++neg_below;
  }
  CHECK(static_cast<double>(best) / scored.size() >= 0.95);
}

TEST_CASE("invalid synthetic configuration is rejected") {
  data::SynthFundusConfig cfg;
  cfg.disc_radius_min = 0.4;
  cfg.disc_radius_max = 0.3;
  CHECK_THROWS_AS(cfg.validate(), data::DatasetError);
}

TEST_CASE("split fractions (1, 0, 0) keep everything in train") {
  const auto ds = tagged(40, 10);
  const auto s = data::stratified_split(ds, {1.0, 0.0, 0.0}, 0.0, 3);
  CHECK(ids(s.train) == ids(ds));
  CHECK(s.val.empty());
  CHECK(s.test.empty());
}

TEST_CASE("splits partition the input for random configurations") {
  RngStream rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_neg = 50 + rng.below(200), n_pos = 20 + rng.below(60);
    const auto ds = tagged(n_neg, n_pos);
    const double val = rng.uniform(0.05, 0.3), test = rng.uniform(0.05, 0.3);
    const auto s = data::stratified_split(ds, {1 - val - test, val, test}, rng.uniform(0.1, 0.4), rng.next_u64());
    auto all = ids(s.train);
    for (double v : ids(s.val)) all.insert(v);
    for (double v : ids(s.test)) all.insert(v);
    CHECK(all == ids(ds));
    CHECK(std::set<double>(all.begin(), all.end()).size() == ds.size());
  }
}

TEST_CASE("paper-shaped split ratios") {
  // Pool sized so the three splits land on the target minority shares.
  const auto ds = tagged(1887, 313);
  const auto s = data::stratified_split(ds, {0.545, 0.182, 0.273}, 0.2797, 1, 0.1085);
  CHECK(s.test.class_counts().positive_fraction() == doctest::Approx(0.2797).epsilon(0.02));
  CHECK(s.val.class_counts().positive_fraction() == doctest::Approx(0.1085).epsilon(0.03));
  CHECK(s.train.class_counts().positive_fraction() == doctest::Approx(0.0847).epsilon(0.03));
}

TEST_CASE("inverse-frequency class weights") {
  const auto balanced = data::class_weights(data::ClassCounts{10, 10});
  CHECK(balanced.negative == 1.0);
  CHECK(balanced.positive == 1.0);
  const data::ClassCounts paper{28418, 2629};
  const auto w = data::class_weights(paper);
  CHECK(w.negative == doctest::Approx(31047.0 / (2 * 28418)).epsilon(1e-12));
  CHECK(std::abs(w.negative - 0.5462) < 1e-3);
  CHECK(std::abs(w.positive - 5.9044) < 1e-3);
  const double mean = (paper.negative * w.negative + paper.positive * w.positive) / paper.total();
  CHECK(mean == doctest::Approx(1.0));
}

TEST_CASE("uniform sampler preserves the class mix") {
  const auto ds = tagged(915, 85);
  auto sampler = data::make_sampler({}, ds, RngStream(3));
  std::size_t pos = 0;
  for (int i = 0; i < 10000; ++i) pos += ds.labels()[sampler.next()];
  CHECK(std::abs(pos / 10000.0 - 0.085) < 0.01);
}

TEST_CASE("class-weighted sampler balances the classes") {
  const auto ds = tagged(915, 85);
  auto sampler = data::make_sampler({data::SamplerKind::kClassWeighted, std::nullopt}, ds, RngStream(4));
  std::size_t pos = 0;
  for (int i = 0; i < 10000; ++i) pos += ds.labels()[sampler.next()];
  CHECK(std::abs(pos / 10000.0 - 0.5) < 0.02);
  CHECK(sampler.positive_probability() == doctest::Approx(0.5));
}

TEST_CASE("single-class dataset samples valid indices") {
  const auto ds = tagged(12, 0);
  for (auto kind : {data::SamplerKind::kUniform, data::SamplerKind::kClassWeighted}) {
    auto sampler = data::make_sampler({kind, std::nullopt}, ds, RngStream(5));
    for (int i = 0; i < 200; ++i) CHECK(sampler.next() < ds.size());
  }
}

TEST_CASE("smote endpoints and midpoint") {
  Tensor minority({2, 1, 1, 2}, std::vector<double>{0, 0, 2, 2});
  RngStream rng(6);
  const auto at0 = data::smote_oversample(minority, 1, 4, rng, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto [p, nn] = at0.parents[i];
    CHECK(at0.images[i * 2] == minority[p * 2]);
  }
  const auto mid = data::smote_oversample(minority, 1, 3, rng, 0.5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(mid.images[i] == 1.0);
}

TEST_CASE("smote samples lie on the segment to their neighbour") {
  RngStream rng(7);
  Tensor minority({30, 1, 3, 3});
  for (double& v : minority.data()) v = rng.uniform();
  const auto r = data::smote_oversample(minority, 5, 100, rng);
  for (std::size_t s = 0; s < 100; ++s) {
    const auto [i, j] = r.parents[s];
    CHECK(i != j);
    const double lambda = r.lambdas[s];
    CHECK(lambda >= 0.0);
    CHECK(lambda <= 1.0);
    for (std::size_t k = 0; k < 9; ++k) {
      const double xi = minority[i * 9 + k], xj = minority[j * 9 + k];
      CHECK(r.images[s * 9 + k] == doctest::Approx(xi + lambda * (xj - xi)).epsilon(1e-12));
    }
  }
}

TEST_CASE("smote neighbours are the nearest ones") {
  // Points on a line: the single nearest neighbour of 0 is 1, of 10 is 9.
  Tensor minority({4, 1, 1, 1}, std::vector<double>{0, 1, 9, 10});
  RngStream rng(8);
  const auto r = data::smote_oversample(minority, 1, 40, rng);
  const std::map<std::size_t, std::size_t> nearest{{0, 1}, {1, 0}, {2, 3}, {3, 2}};
  for (const auto& [i, j] : r.parents) CHECK(nearest.at(i) == j);
}

TEST_CASE("dataset files round-trip and reject corruption") {
  data::SynthFundusConfig cfg;
  const auto ds = data::generate_synth_fundus(cfg, 5, 3);
  const auto dir = std::filesystem::temp_directory_path() / "diffupt_data_test";
  std::filesystem::create_directories(dir);
  data::write_dataset(ds, dir / "a.dptd");
  const auto back = data::read_dataset(dir / "a.dptd");
  CHECK(back.labels() == ds.labels());
  CHECK(back.provenance() == ds.provenance());
  CHECK(std::equal(back.images().data().begin(), back.images().data().end(), ds.images().data().begin()));
  {
    std::ofstream bad(dir / "b.dptd", std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS(data::read_dataset(dir / "b.dptd"));
  data::write_pgm_grid(ds.images(), 8, 4, dir / "grid.pgm");
  std::ifstream pgm(dir / "grid.pgm", std::ios::binary);
  std::string magic;
  pgm >> magic;
  CHECK(magic == "P5");
  std::filesystem::remove_all(dir);
}

TEST_CASE("subset and concat keep labels and provenance") {
  const auto a = tagged(3, 2);
  const std::vector<std::size_t> pick{4, 0};
  const auto s = a.subset(pick);
  CHECK(s.labels() == std::vector<std::uint8_t>{1, 0});
  CHECK(s.image(0)[0] == 4.0 / 4096.0);
  const auto syn = LabeledDataset::uniform_label(Tensor({2, 1, 1, 1}), 1, data::Provenance::kSynthetic);
  const auto c = LabeledDataset::concat(a, syn);
  CHECK(c.size() == 7);
  CHECK(c.class_counts() == data::ClassCounts{3, 4});
  CHECK(c.provenance().back() == data::Provenance::kSynthetic);
  CHECK_THROWS(LabeledDataset::concat(a, LabeledDataset::uniform_label(Tensor({1, 1, 2, 2}), 0, data::Provenance::kReal)));
}
