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

#include "diffupt/classifier.hpp"
#include "diffupt/parallel.hpp"

namespace diffupt::cls {

using namespace diffupt::num;

namespace {

constexpr std::size_t kInferenceBatch = 256;

Tensor rows_of(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t stride = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  const auto src = x.data().subspan(begin * stride, count * stride);
  return Tensor(std::move(shape), std::vector<double>(src.begin(), src.end()));
}

}  // namespace

ClassifierModel::ClassifierModel(ClassifierConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.widths.empty()) throw ClassifierError("classifier needs at least one conv stage");
  if (cfg_.channels == 0 || cfg_.height == 0 || cfg_.width == 0) {
    throw ClassifierError("classifier input dimensions must be positive");
  }
  RngStream rng(cfg_.init_seed);
  std::size_t in = cfg_.channels, h = cfg_.height, w = cfg_.width;
  for (std::size_t s = 0; s < cfg_.widths.size(); ++s) {
    const std::size_t out = cfg_.widths[s];
    if (out == 0) throw ClassifierError("classifier stage widths must be positive");
    const std::string name = "conv" + std::to_string(s);
    conv_w_.push_back(params_.add_uniform(name + ".w", {out, in, 3, 3}, in * 9, rng));
    conv_b_.push_back(params_.add_zeros(name + ".b", {out}));
    feature_idx_.push_back(conv_w_.back());
    feature_idx_.push_back(conv_b_.back());
    const bool pool = s + 1 < cfg_.widths.size() && h % 2 == 0 && w % 2 == 0 && h >= 2 && w >= 2;
    pool_after_.push_back(pool);
    if (pool) {
      h /= 2;
      w /= 2;
    }
    in = out;
  }
  head_w_ = params_.add_uniform("head.w", {1, in}, in, rng, 1.0);
  head_b_ = params_.add_zeros("head.b", {1});
  head_idx_ = {head_w_, head_b_};
}

void ClassifierModel::check_images(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.height ||
      x.dim(3) != cfg_.width) {
    throw ShapeError("classifier: expected (N, " + std::to_string(cfg_.channels) + ", " +
                     std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                     ") images, got " + to_string(x.shape()));
  }
}

Tensor ClassifierModel::features(const Tensor& images) {
  check_images(images);
  Tensor h = images;
  for (std::size_t s = 0; s < conv_w_.size(); ++s) {
    h = relu(conv2d(h, params_[conv_w_[s]], params_[conv_b_[s]], {1, 1}));
    if (pool_after_[s]) h = avg_pool2d(h, 2);
  }
  return mean_spatial(h);
}

Tensor ClassifierModel::logits(const Tensor& images) {
  return reshape(linear(features(images), params_[head_w_], params_[head_b_]), {images.dim(0)});
}

std::vector<double> ClassifierModel::predict_proba(const Tensor& images) {
  check_images(images);
  const std::size_t n = images.dim(0);
  std::vector<double> out(n);
  const std::size_t chunks = (n + kInferenceBatch - 1) / kInferenceBatch;
  parallel_for(chunks, [&](std::size_t c) {
    NoGradGuard no_grad;
    const std::size_t first = c * kInferenceBatch;
    const std::size_t count = std::min(kInferenceBatch, n - first);
    const Tensor p = sigmoid(logits(rows_of(images, first, count)));
    std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<long>(first));
  });
  return out;
}

metrics::Features ClassifierModel::extract_features(const Tensor& images) {
  check_images(images);
  const std::size_t n = images.dim(0);
  const std::size_t d = feature_dim();
  metrics::Features f{n, d, std::vector<double>(n * d)};
  const std::size_t chunks = (n + kInferenceBatch - 1) / kInferenceBatch;
  parallel_for(chunks, [&](std::size_t c) {
    NoGradGuard no_grad;
    const std::size_t first = c * kInferenceBatch;
    const std::size_t count = std::min(kInferenceBatch, n - first);
    const Tensor z = features(rows_of(images, first, count));
    std::copy(z.data().begin(), z.data().end(), f.values.begin() + static_cast<long>(first * d));
  });
  return f;
}

void ClassifierModel::reinitialize_head(RngStream& rng) {
  const std::size_t d = feature_dim();
  const double bound = std::sqrt(3.0 / static_cast<double>(d));
  for (double& v : params_[head_w_].data()) v = rng.uniform(-bound, bound);
  for (double& v : params_[head_b_].data()) v = 0.0;
  for (std::size_t i : head_idx_) {
    auto& p = params_.at(i);
    std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
    std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
    p.step_count = 0;
  }
}

Tensor bce_loss(const Tensor& logits, std::span<const std::uint8_t> labels,
                std::optional<data::ClassWeights> weights) {
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> w;
  if (weights) {
    if (!(weights->negative > 0.0 && weights->positive > 0.0)) {
      throw ClassifierError("class weights must be positive");
    }
    w.reserve(labels.size());
    for (auto l : labels) w.push_back(weights->for_label(l));
  }
  return bce_with_logits(logits, y, w);
}

metrics::MetricRow evaluate_model(ClassifierModel& model, const data::LabeledDataset& ds,
                                  std::string method, std::string split) {
  const auto probs = model.predict_proba(ds.images());
  return metrics::evaluate(std::move(method), std::move(split), probs, ds.labels());
}

// ---- training -----------------------------------------------------------------------

namespace {

HistoryRow validation_row(ClassifierModel& model, const data::LabeledDataset* val,
                          std::size_t iteration, double loss) {
  HistoryRow row;
  row.iteration = iteration;
  row.loss = loss;
  if (val != nullptr && !val->empty()) {
    const auto m = evaluate_model(model, *val, "", "val");
    row.val_sens = m.sensitivity;
    row.val_spec = m.specificity;
    row.val_hm = m.harmonic_mean;
    row.val_auc = m.auc;
  }
  return row;
}

}  // namespace

TrainHistory train_classifier(ClassifierModel& model, const data::LabeledDataset& train,
                              const data::LabeledDataset* val, const TrainRegime& regime,
                              RngStream rng) {
  TrainHistory history;
  if (regime.iterations == 0) return history;
  if (train.empty()) throw ClassifierError("train_classifier: empty training set");
  if (regime.batch == 0) throw ClassifierError("train_classifier: batch size must be positive");
  std::optional<data::ClassWeights> weights;
  if (regime.loss == LossKind::kWeightedBce) {
    weights = regime.loss_weights ? *regime.loss_weights : data::class_weights(train);
  }

  auto& params = model.parameters();
  std::vector<std::size_t> active;
  if (regime.trainable == Trainable::kAll) {
    for (std::size_t i = 0; i < params.size(); ++i) active.push_back(i);
  } else {
    active = model.head_parameters();
  }
  params.set_requires_grad(false);
  std::vector<Parameter*> active_ptrs;
  for (std::size_t i : active) {
    params[i].set_requires_grad(true);
    // Each run gets a fresh optimizer.
    auto& p = params.at(i);
    std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
    std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
    p.step_count = 0;
    active_ptrs.push_back(&p);
  }

  AdamOptions adam;
  adam.lr = regime.lr;
  data::IndexSampler sampler = data::make_sampler(regime.sampler, train, rng.split("sampler"));
  const std::size_t per = train.pixels_per_image();
  const bool validating = val != nullptr && !val->empty();

  std::optional<ParameterSet> best;
  auto consider = [&](const HistoryRow& row) {
    history.rows.push_back(row);
    if (!validating) return;
    const double hm = row.val_hm.value_or(-1.0);
    if (!history.best_val_hm || hm > *history.best_val_hm) {
      history.best_val_hm = hm;
      history.best_iteration = row.iteration;
      best = params;
    }
  };
  consider(validation_row(model, val, 0, 0.0));

  double loss_acc = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t it = 1; it <= regime.iterations; ++it) {
    const auto idx = sampler.batch(regime.batch);
    Shape shape = train.images().shape();
    shape[0] = regime.batch;
    std::vector<double> xb(regime.batch * per);
    std::vector<std::uint8_t> yb(regime.batch);
    for (std::size_t b = 0; b < regime.batch; ++b) {
      const auto img = train.image(idx[b]);
      std::copy(img.begin(), img.end(), xb.begin() + static_cast<long>(b * per));
      yb[b] = train.labels()[idx[b]];
    }
    try {
      const Tensor loss = bce_loss(model.logits(Tensor(shape, std::move(xb))), yb, weights);
      loss_acc += loss.item();
      ++loss_count;
      backward(loss);
      adam_step(active_ptrs, adam);
    } catch (const NumericError& e) {
      clear_tape();
      params.set_requires_grad(true);
      throw ClassifierError("classifier training diverged at iteration " + std::to_string(it) +
                            ": " + e.what());
    }
    model.add_trained_steps(1);
    if (it % regime.eval_interval == 0 || it == regime.iterations) {
      consider(validation_row(model, val, it, loss_acc / static_cast<double>(loss_count)));
      loss_acc = 0.0;
      loss_count = 0;
    }
  }
  params.set_requires_grad(true);
  if (best) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto src = (*best)[i].data();
      std::copy(src.begin(), src.end(), params[i].data().begin());
    }
  }
  return history;
}

TrainHistory multi_stage_retrain(ClassifierModel& model, const data::LabeledDataset& train,
                                 const data::LabeledDataset* val, TrainRegime stage2,
                                 RngStream rng) {
  std::vector<std::string> warnings;
  if (model.trained_steps() == 0) {
    warnings.emplace_back("multi_stage_retrain: model has not been trained; features are random");
  }
  RngStream head_rng = rng.split("head");
  model.reinitialize_head(head_rng);
  stage2.trainable = Trainable::kHeadOnly;
  stage2.sampler.kind = data::SamplerKind::kClassWeighted;
  TrainHistory h = train_classifier(model, train, val, stage2, rng.split("stage2"));
  h.warnings.insert(h.warnings.begin(), warnings.begin(), warnings.end());
  return h;
}

std::string to_csv(const HistoryRow& row) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu,%.6f", row.iteration, row.loss);
  return std::string(buf) + "," + metrics::format_percent(row.val_sens) + "," +
         metrics::format_percent(row.val_spec) + "," + metrics::format_percent(row.val_hm) + "," +
         metrics::format_percent(row.val_auc);
}

}  // namespace diffupt::cls
