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

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/data.hpp"
#include "diffupt/metrics.hpp"
#include "diffupt/optim.hpp"

namespace diffupt::cls {

using num::RngStream;
using num::Tensor;

class ClassifierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassifierConfig {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  /// Output channels of each 3x3 conv stage. The last width is the feature
  /// dimension D. A 2x average pool follows every stage but the last while
  /// the spatial size allows.
  std::vector<std::size_t> widths{8, 16, 32};
  std::uint64_t init_seed = 0;
};

/// Conv stack -> global mean pool -> D features -> linear head -> one logit.
class ClassifierModel {
 public:
  explicit ClassifierModel(ClassifierConfig cfg);

  const ClassifierConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return cfg_.widths.back(); }

  /// Tracked forward passes for training.
  Tensor features(const Tensor& images);
  Tensor logits(const Tensor& images);

  /// Untracked inference, batched internally.
  std::vector<double> predict_proba(const Tensor& images);
  metrics::Features extract_features(const Tensor& images);

  num::ParameterSet& parameters() { return params_; }
  const num::ParameterSet& parameters() const { return params_; }
  const std::vector<std::size_t>& feature_parameters() const { return feature_idx_; }
  const std::vector<std::size_t>& head_parameters() const { return head_idx_; }
  /// Draws fresh head weights from `rng`.
  void reinitialize_head(RngStream& rng);

  /// Optimizer steps applied so far (0 for an untrained model).
  std::size_t trained_steps() const { return trained_steps_; }
  void add_trained_steps(std::size_t n) { trained_steps_ += n; }

 private:
  void check_images(const Tensor& x) const;

  ClassifierConfig cfg_;
  num::ParameterSet params_;
  std::vector<std::size_t> conv_w_, conv_b_;
  std::vector<bool> pool_after_;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::vector<std::size_t> feature_idx_, head_idx_;
  std::size_t trained_steps_ = 0;
};

/// Mean of -w_y [y log p + (1 - y) log(1 - p)], computed from logits with the
/// log-sum-exp form. Without weights every w_y is 1.
Tensor bce_loss(const Tensor& logits, std::span<const std::uint8_t> labels,
                std::optional<data::ClassWeights> weights = std::nullopt);

enum class LossKind { kBce, kWeightedBce };
enum class Trainable { kAll, kHeadOnly };

struct TrainRegime {
  LossKind loss = LossKind::kBce;
  /// Used by kWeightedBce; defaults to inverse-frequency weights of the
  /// training set.
  std::optional<data::ClassWeights> loss_weights;
  data::SamplerSpec sampler;
  double lr = 1e-3;
  std::size_t iterations = 1500;
  std::size_t batch = 32;
  /// Validation cadence for the history and checkpoint selection.
  std::size_t eval_interval = 100;
  Trainable trainable = Trainable::kAll;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double loss = 0.0;  // mean training loss since the previous row
  metrics::Percent val_sens, val_spec, val_hm, val_auc;
};

inline constexpr const char* kHistoryHeader = "iteration,loss,val_sens,val_spec,val_hm,val_auc";

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::size_t best_iteration = 0;
  std::optional<double> best_val_hm;
  std::vector<std::string> warnings;
};

std::string to_csv(const HistoryRow& row);

/// Adam on the regime's loss. Training starts from the model's current
/// weights, so a pretrained model is passed in as is. With a validation set
/// the model is evaluated at iteration 0, every eval_interval steps and at
/// the end; the weights with the highest validation harmonic mean (earliest
/// on ties) are restored before returning. Throws ClassifierError on
/// divergence.
TrainHistory train_classifier(ClassifierModel& model, const data::LabeledDataset& train,
                              const data::LabeledDataset* val, const TrainRegime& regime,
                              RngStream rng);

/// Decoupled second stage: freezes the feature extractor, re-initializes the
/// head and retrains only the head with a class-balanced sampler. Warns (in
/// the history) and proceeds when the model has never been trained.
TrainHistory multi_stage_retrain(ClassifierModel& model, const data::LabeledDataset& train,
                                 const data::LabeledDataset* val, TrainRegime stage2,
                                 RngStream rng);

/// Evaluates model on a labelled set: one metric row at threshold 0.5.
metrics::MetricRow evaluate_model(ClassifierModel& model, const data::LabeledDataset& ds,
                                  std::string method, std::string split);

/// Per-class spread and class overlap of penultimate features.
struct EmbeddingStats {
  double trace_cov_negative = 0.0;
  double trace_cov_positive = 0.0;
  /// Bhattacharyya distance between the per-class Gaussian fits.
  double bhattacharyya = 0.0;
  /// Mean distance between samples of different classes, and within a class.
  double between_mean_distance = 0.0;
  double within_mean_distance = 0.0;
};

inline constexpr const char* kEmbeddingHeader =
    "trace_cov_negative,trace_cov_positive,bhattacharyya,between_mean_distance,within_mean_distance";

EmbeddingStats embedding_stats(const metrics::Features& feats, std::span<const std::uint8_t> labels);
std::string to_csv(const EmbeddingStats& s);

}  // namespace diffupt::cls
