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
#include <chrono>
#include <cmath>

#include "diffupt/pipeline.hpp"

namespace diffupt::pipeline {

namespace {

std::uint64_t draw_seed(const RngStream& rng, std::string_view label) {
  RngStream s = rng.split(label);
  return s.next_u64();
}

std::unique_ptr<cls::ClassifierModel> fresh_classifier(const Context& ctx, const RngStream& rng) {
  cls::ClassifierConfig c = ctx.config.classifier;
  c.channels = ctx.splits.train.channels();
  c.height = ctx.splits.train.height();
  c.width = ctx.splits.train.width();
  c.init_seed = draw_seed(rng, "init");
  return std::make_unique<cls::ClassifierModel>(std::move(c));
}

StageResult evaluate_stage(cls::ClassifierModel& model, const Context& ctx, const std::string& method,
                           cls::TrainHistory history) {
  StageResult r;
  r.val = cls::evaluate_model(model, ctx.splits.val, method, "val");
  r.test = cls::evaluate_model(model, ctx.splits.test, method, "test");
  r.history = std::move(history);
  return r;
}

double mean_bce(cls::ClassifierModel& model, const data::LabeledDataset& ds) {
  num::NoGradGuard no_grad;
  return cls::bce_loss(model.logits(ds.images()), ds.labels()).item();
}

cls::TrainRegime with(cls::TrainRegime base, cls::LossKind loss, data::SamplerKind sampler) {
  base.loss = loss;
  base.loss_weights.reset();
  base.sampler = data::SamplerSpec{sampler, std::nullopt};
  base.trainable = cls::Trainable::kAll;
  return base;
}

// Candidate pool matching the plan, reusing the context's when it fits.
CandidatePool& pool_for(Context& ctx, const GenerationPlan& plan, std::unique_ptr<CandidatePool>& local) {
  if (ctx.pool && ctx.pool->guidance().w == plan.guidance.w &&
      ctx.pool->sampler().label() == plan.sampler.label()) {
    return *ctx.pool;
  }
  local = std::make_unique<CandidatePool>(*ctx.generator, plan.guidance, plan.sampler,
                                          ctx.rng().split("candidates"));
  return *local;
}

// The first `count` minority candidates that pass the filter (or simply the
// first `count` when filtering is off), as a synthetic positive dataset.
data::LabeledDataset synthetic_minority(Context& ctx, std::size_t count) {
  GenerationPlan plan = ctx.config.diffupt.generation;
  plan.n_negative = 0;
  plan.n_positive = count;
  std::unique_ptr<CandidatePool> local;
  CandidatePool& pool = pool_for(ctx, plan, local);
  return generate_balanced_dataset(pool, plan, ctx.baseline.get(), true).dataset;
}

data::LabeledDataset with_extra(const data::LabeledDataset& real, const data::LabeledDataset& extra,
                                std::size_t count) {
  if (count == 0 || extra.empty()) return real;
  std::vector<std::size_t> idx(std::min(count, extra.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return data::LabeledDataset::concat(real, extra.subset(idx));
}

}  // namespace

// ---- configuration ------------------------------------------------------------------

void DiffuPTConfig::validate() const {
  generation.validate();
  if (!(pretrain.lr > 0.0) || !(finetune.lr > 0.0)) {
    throw PipelineError("learning rates must be positive");
  }
  if (!(finetune.lr < pretrain.lr)) {
    throw PipelineError("finetune learning rate must be smaller than the pretrain learning rate");
  }
}

WorkbenchConfig::WorkbenchConfig() {
  generator.autoencoder_train.iterations = 1000;
  generator.diffusion_train.iterations = 2000;
  generator.diffusion_train.batch = 64;

  baseline = with(cls::TrainRegime{}, cls::LossKind::kBce, data::SamplerKind::kClassWeighted);

  diffupt.pretrain = with(cls::TrainRegime{}, cls::LossKind::kBce, data::SamplerKind::kUniform);
  diffupt.pretrain.lr = 3e-3;
  diffupt.finetune = diffupt.pretrain;
  diffupt.finetune.lr = 3e-4;
  diffupt.generation.n_negative = 1000;
  diffupt.generation.n_positive = 1000;
  diffupt.generation.distribution = "50-50";
  // w = 3 overshoots the class cup ratios on 16x16 synthetic discs
  diffupt.generation.guidance.w = 1.0;
}

void WorkbenchConfig::validate() const {
  dataset.synth.validate();
  if (dataset.pool_negative == 0 || dataset.pool_positive == 0) {
    throw PipelineError("dataset pool needs both classes");
  }
  diffupt.validate();
  if (seeds.empty()) throw PipelineError("at least one seed is required");
  for (const auto& m : methods) parse_method(m);
  for (double p : distributions) {
    if (!(p >= 0.0 && p <= 100.0)) throw PipelineError("distribution percentages must lie in [0, 100]");
  }
}

data::SplitResult make_splits(const DatasetSpec& spec, std::uint64_t seed) {
  const RngStream root = RngStream(spec.synth.seed).split(seed);
  data::SynthFundusConfig synth = spec.synth;
  synth.seed = draw_seed(root, "images");
  const auto pool = data::generate_synth_fundus(synth, spec.pool_negative, spec.pool_positive);
  return data::stratified_split(pool, spec.fractions, spec.test_minority, draw_seed(root, "split"),
                                spec.val_minority);
}

Context prepare_context(const WorkbenchConfig& cfg, std::uint64_t seed) {
  return prepare_context(cfg, seed, make_splits(cfg.dataset, seed));
}

GeneratorConfig seeded_generator_config(const WorkbenchConfig& cfg, std::uint64_t seed) {
  const RngStream rng(seed);
  GeneratorConfig gc = cfg.generator;
  gc.autoencoder.init_seed = draw_seed(rng, "autoencoder_init");
  gc.denoiser.init_seed = draw_seed(rng, "denoiser_init");
  return gc;
}

RngStream generator_stream(std::uint64_t seed) { return RngStream(seed).split("generator"); }

RngStream methods_stream(std::uint64_t seed) { return RngStream(seed).split("methods"); }

std::unique_ptr<cls::ClassifierModel> train_baseline(const WorkbenchConfig& cfg, std::uint64_t seed,
                                                     const data::SplitResult& splits, cls::TrainHistory* history) {
  const RngStream rng = RngStream(seed).split("baseline");
  cls::ClassifierConfig c = cfg.classifier;
  c.channels = splits.train.channels();
  c.height = splits.train.height();
  c.width = splits.train.width();
  c.init_seed = draw_seed(rng, "init");
  auto model = std::make_unique<cls::ClassifierModel>(std::move(c));
  auto h = cls::train_classifier(*model, splits.train, &splits.val, cfg.baseline, rng.split("train"));
  if (history) *history = std::move(h);
  return model;
}

Context prepare_context(const WorkbenchConfig& cfg, std::uint64_t seed, data::SplitResult splits) {
  cfg.validate();
  Context ctx;
  ctx.config = cfg;
  ctx.seed = seed;
  ctx.splits = std::move(splits);

  ctx.generator = std::make_unique<Generator>(seeded_generator_config(cfg, seed), ctx.splits.train.channels(),
                                              ctx.splits.train.height(), ctx.splits.train.width());
  ctx.generator->train(ctx.splits.train, generator_stream(seed));
  ctx.baseline = train_baseline(cfg, seed, ctx.splits, &ctx.baseline_history);

  const auto& plan = cfg.diffupt.generation;
  ctx.pool = std::make_unique<CandidatePool>(*ctx.generator, plan.guidance, plan.sampler,
                                             ctx.rng().split("candidates"));
  return ctx;
}

// ---- DiffuPT ------------------------------------------------------------------------

DiffuPTResult diffupt_run(Context& ctx, const DiffuPTConfig& cfg, RngStream rng) {
  cfg.validate();
  DiffuPTResult r;
  {
    std::unique_ptr<CandidatePool> local;
    CandidatePool& pool = pool_for(ctx, cfg.generation, local);
    r.generation = generate_balanced_dataset(pool, cfg.generation, ctx.baseline.get(), true);
  }
  if (r.generation.shortfall) r.warnings.push_back(*r.generation.shortfall);
  if (r.generation.dataset.empty() && cfg.pretrain.iterations > 0) {
    throw PipelineError("pretraining requested but the synthetic set is empty");
  }

  r.model = fresh_classifier(ctx, rng);
  auto pre_hist = cls::train_classifier(*r.model, r.generation.dataset, &ctx.splits.val, cfg.pretrain,
                                        rng.split("pretrain"));
  r.pretrain = evaluate_stage(*r.model, ctx, "diffupt_pretrain", std::move(pre_hist));
  r.pretrained_embedding = embedding_of(*r.model, ctx.splits.test);

  const num::ParameterSet pretrained = r.model->parameters();
  r.pretrained_loss_on_real = mean_bce(*r.model, ctx.splits.train);
  r.handoff_bitwise = r.model->parameters().bitwise_equal(pretrained);
  r.finetune_initial_loss = mean_bce(*r.model, ctx.splits.train);

  auto ft_hist = cls::train_classifier(*r.model, ctx.splits.train, &ctx.splits.val, cfg.finetune,
                                       rng.split("finetune"));
  r.finetune = evaluate_stage(*r.model, ctx, "diffupt", std::move(ft_hist));
  r.finetuned_embedding = embedding_of(*r.model, ctx.splits.test);
  return r;
}

// ---- comparison ---------------------------------------------------------------------

std::string MethodSpec::label() const {
  return count ? name + "(" + std::to_string(*count) + ")" : name;
}

MethodSpec parse_method(const std::string& label) {
  static const std::vector<std::string> known{
      "normal",         "weighted_ce",   "weighted_sampler", "weighted_ce+sampler",
      "multi_stage+sampler", "smote_augment", "gen_augment",      "diffupt"};
  MethodSpec m;
  const auto open = label.find('(');
  m.name = label.substr(0, open);
  if (std::find(known.begin(), known.end(), m.name) == known.end()) {
    throw PipelineError("unknown method '" + label + "'");
  }
  if (open != std::string::npos) {
    const bool counted = m.name == "smote_augment" || m.name == "gen_augment";
    if (!counted || label.back() != ')' || label.size() < open + 3) {
      throw PipelineError("malformed method label '" + label + "'");
    }
    const std::string digits = label.substr(open + 1, label.size() - open - 2);
    if (digits.find_first_not_of("0123456789") != std::string::npos) {
      throw PipelineError("malformed method count in '" + label + "'");
    }
    m.count = std::stoull(digits);
  }
  return m;
}

ComparisonTable run_comparison(Context& ctx, const std::vector<std::string>& methods, RngStream rng) {
  ComparisonTable table;
  const cls::TrainRegime base = ctx.config.baseline;
  const auto& train = ctx.splits.train;
  const auto* val = &ctx.splits.val;
  for (const auto& label : methods) {
    const MethodSpec spec = parse_method(label);
    const RngStream mrng = rng.split(spec.name);
    const std::string name = spec.name == "smote_augment" || spec.name == "gen_augment"
                                 ? MethodSpec{spec.name, spec.count.value_or(ctx.config.augment_count)}.label()
                                 : spec.name;
    StageResult res;
    if (spec.name == "diffupt") {
      auto d = diffupt_run(ctx, ctx.config.diffupt, mrng);
      res = std::move(d.finetune);
    } else {
      auto model = fresh_classifier(ctx, mrng);
      cls::TrainHistory hist;
      if (spec.name == "normal") {
        hist = cls::train_classifier(*model, train, val, with(base, cls::LossKind::kBce, data::SamplerKind::kUniform),
                                     mrng.split("train"));
      } else if (spec.name == "weighted_ce") {
        hist = cls::train_classifier(*model, train, val,
                                     with(base, cls::LossKind::kWeightedBce, data::SamplerKind::kUniform),
                                     mrng.split("train"));
      } else if (spec.name == "weighted_sampler") {
        hist = cls::train_classifier(*model, train, val,
                                     with(base, cls::LossKind::kBce, data::SamplerKind::kClassWeighted),
                                     mrng.split("train"));
      } else if (spec.name == "weighted_ce+sampler") {
        hist = cls::train_classifier(*model, train, val,
                                     with(base, cls::LossKind::kWeightedBce, data::SamplerKind::kClassWeighted),
                                     mrng.split("train"));
      } else if (spec.name == "multi_stage+sampler") {
        cls::train_classifier(*model, train, val, with(base, cls::LossKind::kBce, data::SamplerKind::kUniform),
                              mrng.split("train"));
        hist = cls::multi_stage_retrain(*model, train, val, with(base, cls::LossKind::kBce, data::SamplerKind::kClassWeighted),
                                        mrng.split("retrain"));
      } else {
        const std::size_t count = spec.count.value_or(ctx.config.augment_count);
        data::LabeledDataset extra;
        if (spec.name == "smote_augment") {
          RngStream srng = mrng.split("smote");
          auto smote = data::smote_oversample(train.class_images(data::kPositive), ctx.config.smote_neighbors,
                                              count, srng);
          extra = data::LabeledDataset::uniform_label(std::move(smote.images), data::kPositive,
                                                      data::Provenance::kSynthetic);
        } else {
          extra = synthetic_minority(ctx, count);
        }
        hist = cls::train_classifier(*model, with_extra(train, extra, count), val,
                                     with(base, cls::LossKind::kBce, data::SamplerKind::kClassWeighted),
                                     mrng.split("train"));
      }
      res = evaluate_stage(*model, ctx, name, std::move(hist));
    }
    res.val.method = name;
    res.test.method = name;
    table.rows.push_back(res.val);
    table.rows.push_back(res.test);
  }
  return table;
}

std::vector<SweepPoint> augmentation_sweep(Context& ctx, const std::vector<std::size_t>& counts, RngStream rng) {
  std::vector<SweepPoint> points;
  if (counts.empty()) return points;
  const std::size_t most = *std::max_element(counts.begin(), counts.end());
  const data::LabeledDataset extra = most > 0 ? synthetic_minority(ctx, most) : data::LabeledDataset{};
  // Same stream as the weighted-sampler comparison row, so count 0 reproduces it.
  const RngStream mrng = rng.split("weighted_sampler");
  const auto regime = with(ctx.config.baseline, cls::LossKind::kBce, data::SamplerKind::kClassWeighted);
  for (std::size_t c : counts) {
    auto model = fresh_classifier(ctx, mrng);
    auto hist = cls::train_classifier(*model, with_extra(ctx.splits.train, extra, c), &ctx.splits.val, regime,
                                      mrng.split("train"));
    auto res = evaluate_stage(*model, ctx, "gen_augment(" + std::to_string(c) + ")", std::move(hist));
    points.push_back({c, std::move(res.val), std::move(res.test)});
  }
  return points;
}

std::vector<DistributionRow> distribution_ablation(Context& ctx, const std::vector<double>& positive_percents,
                                                   const DiffuPTConfig& cfg, RngStream rng) {
  cfg.validate();
  const std::size_t total = cfg.generation.n_negative + cfg.generation.n_positive;
  std::vector<DistributionRow> rows;
  for (double pct : positive_percents) {
    GenerationPlan plan = GenerationPlan::from_distribution(total, pct);
    plan.guidance = cfg.generation.guidance;
    plan.sampler = cfg.generation.sampler;
    plan.filter = cfg.generation.filter;
    plan.max_attempts_factor = cfg.generation.max_attempts_factor;
    std::unique_ptr<CandidatePool> local;
    CandidatePool& pool = pool_for(ctx, plan, local);
    const auto gen = generate_balanced_dataset(pool, plan, ctx.baseline.get(), true);

    // Identical initialisation and batch stream for every distribution.
    auto model = fresh_classifier(ctx, rng);
    auto hist = cls::train_classifier(*model, gen.dataset, &ctx.splits.val, cfg.pretrain, rng.split("pretrain"));
    auto res = evaluate_stage(*model, ctx, "pretrain_" + plan.distribution, std::move(hist));
    DistributionRow row;
    row.distribution = plan.distribution;
    row.target_positive_fraction = pct / 100.0;
    row.achieved_positive_fraction = gen.dataset.empty() ? 0.0 : gen.dataset.class_counts().positive_fraction();
    row.val = std::move(res.val);
    row.test = std::move(res.test);
    row.embedding = embedding_of(*model, ctx.splits.test);
    rows.push_back(std::move(row));
  }
  return rows;
}

FilteringAblation filtering_ablation(Context& ctx, const DiffuPTConfig& cfg, RngStream rng) {
  FilteringAblation a;
  DiffuPTConfig off = cfg;
  off.generation.filter.enabled = false;
  DiffuPTConfig on = cfg;
  on.generation.filter.enabled = true;

  auto r_off = diffupt_run(ctx, off, rng);
  a.all_samples_val = r_off.finetune.val;
  a.all_samples_test = r_off.finetune.test;
  a.all_samples_val.method = a.all_samples_test.method = "all_samples";
  a.purity_unfiltered = label_purity(*ctx.baseline, r_off.generation.dataset);
  a.handoff_bitwise = r_off.handoff_bitwise;
  a.unfiltered = std::move(r_off.generation);

  auto r_on = diffupt_run(ctx, on, rng);
  a.filtered_val = r_on.finetune.val;
  a.filtered_test = r_on.finetune.test;
  a.filtered_val.method = a.filtered_test.method = "filtered";
  a.purity_filtered = label_purity(*ctx.baseline, r_on.generation.dataset);
  a.handoff_bitwise = a.handoff_bitwise && r_on.handoff_bitwise;
  a.filtered = std::move(r_on.generation);
  return a;
}

cls::EmbeddingStats embedding_of(cls::ClassifierModel& model, const data::LabeledDataset& ds) {
  return cls::embedding_stats(model.extract_features(ds.images()), ds.labels());
}

metrics::GenerationRow generation_metrics(Context& ctx, std::size_t n_per_class, const std::string& model_label,
                                          std::optional<diffusion::SamplerChoice> sampler) {
  if (n_per_class < 2) throw PipelineError("generation metrics need at least two samples per class");
  const diffusion::SamplerChoice choice = sampler.value_or(ctx.config.diffupt.generation.sampler);
  const auto& guidance = ctx.config.diffupt.generation.guidance;
  const RngStream rng = ctx.rng().split("generation_metrics");

  const auto start = std::chrono::steady_clock::now();
  data::LabeledDataset synth;
  for (std::size_t y = 0; y < 2; ++y) {
    auto part = data::LabeledDataset::uniform_label(
        ctx.generator->sample(n_per_class, y, guidance, choice, rng.split(y)), static_cast<int>(y),
        data::Provenance::kSynthetic);
    synth = y == 0 ? std::move(part) : data::LabeledDataset::concat(synth, part);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto real = ctx.baseline->extract_features(ctx.splits.test.images());
  const auto fake = ctx.baseline->extract_features(synth.images());
  metrics::GenerationRow row;
  row.model = model_label;
  row.nfe = 2 * choice.step_count(ctx.generator->schedule().T);
  row.fid = metrics::frechet_feature_distance(real, fake);
  row.kid = metrics::kernel_feature_distance(real, fake);
  row.is = metrics::inception_score_analog(ctx.baseline->predict_proba(synth.images()));
  row.sampling_time_s = seconds / static_cast<double>(synth.size());
  return row;
}

}  // namespace diffupt::pipeline
