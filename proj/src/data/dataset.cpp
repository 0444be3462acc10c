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

#include "diffupt/data.hpp"

namespace diffupt::data {

LabeledDataset::LabeledDataset(Tensor images, std::vector<std::uint8_t> labels,
                               std::vector<Provenance> provenance, std::vector<FundusTruth> truth)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      provenance_(std::move(provenance)),
      truth_(std::move(truth)) {
  if (images_.rank() != 4) {
    throw DatasetError("dataset images must be (N, C, H, W), got " +
                       num::to_string(images_.shape()));
  }
  const std::size_t n = images_.dim(0);
  if (labels_.size() != n || provenance_.size() != n) {
    throw DatasetError("dataset has " + std::to_string(n) + " images but " +
                       std::to_string(labels_.size()) + " labels and " +
                       std::to_string(provenance_.size()) + " provenance flags");
  }
  if (!truth_.empty() && truth_.size() != n) {
    throw DatasetError("ground-truth record count does not match image count");
  }
  geometry_ = {images_.dim(1), images_.dim(2), images_.dim(3)};
  for (double v : images_.data()) {
    if (v < 0.0 || v > 1.0) throw DatasetError("dataset pixel outside [0, 1]");
  }
  for (auto y : labels_) {
    if (y > 1) throw DatasetError("dataset label must be 0 or 1");
    (y == kPositive ? counts_.positive : counts_.negative) += 1;
  }
  images_.set_requires_grad(false);
}

LabeledDataset LabeledDataset::empty(std::size_t channels, std::size_t height, std::size_t width) {
  return LabeledDataset(Tensor(num::Shape{0, channels, height, width}), {}, {});
}

std::span<const double> LabeledDataset::image(std::size_t i) const {
  const std::size_t stride = pixels_per_image();
  return images_.data().subspan(i * stride, stride);
}

std::vector<std::size_t> LabeledDataset::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.push_back(i);
  }
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t stride = pixels_per_image();
  std::vector<double> values(indices.size() * stride);
  std::vector<std::uint8_t> labels(indices.size());
  std::vector<Provenance> prov(indices.size());
  std::vector<FundusTruth> truth;
  if (!truth_.empty()) truth.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw DatasetError("subset index out of range");
    std::copy_n(images_.data().begin() + i * stride, stride, values.begin() + k * stride);
    labels[k] = labels_[i];
    prov[k] = provenance_[i];
    if (!truth_.empty()) truth[k] = truth_[i];
  }
  return LabeledDataset(
      Tensor(num::Shape{indices.size(), channels(), height(), width()}, std::move(values)),
      std::move(labels), std::move(prov), std::move(truth));
}

Tensor LabeledDataset::class_images(int label) const {
  return subset(indices_of(label)).images();
}

LabeledDataset LabeledDataset::concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    throw DatasetError("cannot concatenate datasets with different image geometry");
  }
  std::vector<double> values(a.images().data().begin(), a.images().data().end());
  values.insert(values.end(), b.images().data().begin(), b.images().data().end());
  auto labels = a.labels_;
  labels.insert(labels.end(), b.labels_.begin(), b.labels_.end());
  auto prov = a.provenance_;
  prov.insert(prov.end(), b.provenance_.begin(), b.provenance_.end());
  std::vector<FundusTruth> truth;
  if (!a.truth_.empty() && !b.truth_.empty()) {
    truth = a.truth_;
    truth.insert(truth.end(), b.truth_.begin(), b.truth_.end());
  }
  return LabeledDataset(
      Tensor(num::Shape{a.size() + b.size(), a.channels(), a.height(), a.width()},
             std::move(values)),
      std::move(labels), std::move(prov), std::move(truth));
}

LabeledDataset LabeledDataset::uniform_label(Tensor images, int label, Provenance provenance) {
  const std::size_t n = images.rank() == 4 ? images.dim(0) : 0;
  return LabeledDataset(std::move(images), std::vector<std::uint8_t>(n, static_cast<std::uint8_t>(label)),
                        std::vector<Provenance>(n, provenance));
}

}  // namespace diffupt::data
