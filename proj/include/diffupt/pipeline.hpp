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

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/classifier.hpp"
#include "diffupt/data.hpp"
#include "diffupt/diffusion.hpp"
#include "diffupt/latentae.hpp"
#include "diffupt/metrics.hpp"

namespace diffupt::pipeline {

using num::RngStream;
using num::Tensor;

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- generator ------------------------------------------------------------------

struct GeneratorConfig {
  /// Diffuse in the autoencoder latent space (true) or directly on pixels.
  bool latent = true;
  latent::AutoencoderConfig autoencoder;
  latent::AutoencoderTrainConfig autoencoder_train;
  /// channels/height/width are derived from the data or latent shape.
  diffusion::DenoiserConfig denoiser{0, 0, 0, 32, 1, 32, 0};
  diffusion::DiffusionTrainConfig diffusion_train;
  std::size_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

/// Conditional generator: optional autoencoder plus class-conditional
/// denoiser sharing one noise schedule.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::size_t channels, std::size_t height, std::size_t width);

  /// Trains the autoencoder (when latent) and then the denoiser on `train`.
  void train(const data::LabeledDataset& train, RngStream rng);

  /// Images in [0, 1] of class y.
  Tensor sample(std::size_t n, std::size_t y, const diffusion::GuidanceSpec& guidance,
                const diffusion::SamplerChoice& sampler, const RngStream& rng);

  const GeneratorConfig& config() const { return cfg_; }
  diffusion::DenoiserModel& denoiser() { return *denoiser_; }
  latent::Autoencoder* autoencoder() { return ae_.get(); }
  const diffusion::NoiseSchedule& schedule() const { return sched_; }
  const latent::AutoencoderReport& autoencoder_report() const { return ae_report_; }
  const diffusion::TrainCurve& diffusion_curve() const { return curve_; }

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  GeneratorConfig cfg_;
  num::Shape image_shape_;
  std::unique_ptr<latent::Autoencoder> ae_;
  std::unique_ptr<diffusion::DenoiserModel> denoiser_;
  diffusion::NoiseSchedule sched_;
  latent::AutoencoderReport ae_report_;
  diffusion::TrainCurve curve_;
};

/// Deterministic, lazily extended stream of generated candidates per class.
/// Round r of class y always uses rng.split(y).split(r) with a fixed round
/// size, so candidate i is the same image however far the stream has been
/// extended. Baseline probabilities are cached alongside.
class CandidatePool {
 public:
  CandidatePool(Generator& generator, diffusion::GuidanceSpec guidance,
                diffusion::SamplerChoice sampler, RngStream rng, std::size_t round = 64);

  /// Makes at least n candidates of class y available.
  void ensure(std::size_t y, std::size_t n);
  std::size_t available(std::size_t y) const { return counts_[y]; }
  std::span<const double> image(std::size_t y, std::size_t i) const;
  /// First n candidates of class y as an (n, C, H, W) tensor.
  Tensor images(std::size_t y, std::span<const std::size_t> indices) const;
  /// Baseline probability that candidate i belongs to class y.
  double target_probability(std::size_t y, std::size_t i, cls::ClassifierModel& baseline);

  const diffusion::GuidanceSpec& guidance() const { return guidance_; }
  const diffusion::SamplerChoice& sampler() const { return sampler_; }
  /// Wall-clock seconds spent sampling so far.
  double sampling_seconds() const { return seconds_; }
  std::size_t model_evaluations() const { return evaluations_; }

 private:
  Generator& gen_;
  diffusion::GuidanceSpec guidance_;
  diffusion::SamplerChoice sampler_;
  RngStream rng_;
  std::size_t round_;
  std::size_t pixels_;
  num::Shape item_shape_;
  std::array<std::vector<double>, 2> data_;
  std::array<std::size_t, 2> counts_{0, 0};
  std::array<std::vector<double>, 2> probs_;
  const cls::ClassifierModel* scored_by_ = nullptr;
  double seconds_ = 0.0;
  std::size_t evaluations_ = 0;
};

// ---- filtering and balanced generation -----------------------------------------------

struct FilterSpec {
  bool enabled = true;
  double threshold = 0.5;
};

struct GenerationPlan {
  std::size_t n_negative = 0;
  std::size_t n_positive = 0;
  std::string distribution = "50-50";
  diffusion::GuidanceSpec guidance;
  diffusion::SamplerChoice sampler = diffusion::SamplerChoice::ddim(50);
  FilterSpec filter;
  double max_attempts_factor = 5.0;

  /// Plan with `total` samples of which `positive_percent` are positive.
  static GenerationPlan from_distribution(std::size_t total, double positive_percent);
  void validate() const;
};

struct FilterStats {
  std::size_t kept = 0;
  std::size_t rejected = 0;
  double rejection_rate() const {
    const std::size_t n = kept + rejected;
    return n == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(n);
  }
};

struct FilterResult {
  Tensor kept;
  std::vector<std::size_t> kept_indices;
  FilterStats stats;
};

/// Keeps sample i iff the baseline's probability of `target_class` is at
/// least `threshold`.
FilterResult filter_samples(const Tensor& samples, int target_class, cls::ClassifierModel& baseline,
                            double threshold);

struct ClassGeneration {
  std::size_t target = 0;
  std::size_t attempts = 0;
  FilterStats filter;
  /// Candidate-stream indices of the samples that were kept.
  std::vector<std::size_t> indices;
};

struct GenerationResult {
  data::LabeledDataset dataset;  // provenance all synthetic
  std::array<ClassGeneration, 2> per_class;
  std::optional<std::string> shortfall;
};

class GenerationShortfall : public PipelineError {
 public:
  GenerationShortfall(const std::string& what, GenerationResult partial)
      : PipelineError(what), partial_(std::move(partial)) {}
  const GenerationResult& partial() const { return partial_; }

 private:
  GenerationResult partial_;
};

/// Draws candidates of each class until the plan's count is kept or the
/// attempt budget (max_attempts_factor x target) is spent. Labels come from
/// the conditioning class. On a shortfall, throws GenerationShortfall carrying
/// the partial dataset unless `allow_partial`, in which case the message is
/// stored in the result.
GenerationResult generate_balanced_dataset(CandidatePool& pool, const GenerationPlan& plan,
                                           cls::ClassifierModel* baseline,
                                           bool allow_partial = false);
GenerationResult generate_balanced_dataset(Generator& generator, const GenerationPlan& plan,
                                           cls::ClassifierModel* baseline, const RngStream& rng,
                                           bool allow_partial = false);

// ---- experiment configuration ------------------------------------------------------

struct DatasetSpec {
  data::SynthFundusConfig synth;
  std::size_t pool_negative = 1887;
  std::size_t pool_positive = 313;
  data::SplitFractions fractions{0.545, 0.182, 0.273};
  double train_minority = 0.0847;  // reported target; the train split absorbs the remainder
  double val_minority = 0.1085;
  double test_minority = 0.2797;
};

struct DiffuPTConfig {
  cls::TrainRegime pretrain;
  cls::TrainRegime finetune;
  GenerationPlan generation;
  void validate() const;
};

struct WorkbenchConfig {
  DatasetSpec dataset;
  GeneratorConfig generator;
  cls::ClassifierConfig classifier;
  /// Regime of the baseline classifier used for filtering and scoring.
  cls::TrainRegime baseline;
  DiffuPTConfig diffupt;
  std::size_t smote_neighbors = 5;
  /// Synthetic or SMOTE minority samples added by the augmentation methods.
  std::size_t augment_count = 200;
  std::vector<std::size_t> sweep_counts{0, 250, 500, 1000, 2000};
  std::vector<double> distributions{30, 40, 50, 60, 70};  // positive percent
  std::vector<std::string> methods{"normal",      "weighted_ce",         "weighted_sampler",
                                   "weighted_ce+sampler", "multi_stage+sampler",
                                   "smote_augment", "gen_augment",       "diffupt"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  WorkbenchConfig();
  void validate() const;
};

/// Real data and trained models shared by every experiment of one seed.
struct Context {
  WorkbenchConfig config;
  std::uint64_t seed = 0;
  data::SplitResult splits;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<cls::ClassifierModel> baseline;
  cls::TrainHistory baseline_history;
  std::unique_ptr<CandidatePool> pool;

  RngStream rng() const { return RngStream(seed); }
};

data::SplitResult make_splits(const DatasetSpec& spec, std::uint64_t seed);

/// Generator configuration with the initialisation seeds used for `seed`.
GeneratorConfig seeded_generator_config(const WorkbenchConfig& cfg, std::uint64_t seed);
/// Stream the generator of `seed` is trained with.
RngStream generator_stream(std::uint64_t seed);

/// The baseline classifier of `seed`: initialised and trained exactly as
/// prepare_context does.
std::unique_ptr<cls::ClassifierModel> train_baseline(const WorkbenchConfig& cfg, std::uint64_t seed,
                                                     const data::SplitResult& splits,
                                                     cls::TrainHistory* history = nullptr);

/// Stream handed to run_comparison and augmentation_sweep by the workbench;
/// its split("diffupt") is the stream of the standalone DiffuPT run.
RngStream methods_stream(std::uint64_t seed);

/// Builds splits, trains the generator and the baseline classifier.
Context prepare_context(const WorkbenchConfig& cfg, std::uint64_t seed);
/// Same, with real splits supplied by the caller (generator and baseline
/// still trained).
Context prepare_context(const WorkbenchConfig& cfg, std::uint64_t seed, data::SplitResult splits);

// ---- DiffuPT and experiments ------------------------------------------------------------

struct StageResult {
  metrics::MetricRow val;
  metrics::MetricRow test;
  cls::TrainHistory history;
};

struct DiffuPTResult {
  std::unique_ptr<cls::ClassifierModel> model;
  GenerationResult generation;
  StageResult pretrain;
  StageResult finetune;
  /// Mean BCE on the real training set of the pretrained weights and of the
  /// weights the finetune stage started from.
  double pretrained_loss_on_real = 0.0;
  double finetune_initial_loss = 0.0;
  bool handoff_bitwise = false;
  cls::EmbeddingStats pretrained_embedding;
  cls::EmbeddingStats finetuned_embedding;
  std::vector<std::string> warnings;
};

/// Pretrains a fresh classifier on the balanced synthetic set (validated on
/// the real validation set), then finetunes it on the real training set at
/// the finetune learning rate.
DiffuPTResult diffupt_run(Context& ctx, const DiffuPTConfig& cfg, RngStream rng);

struct ComparisonTable {
  std::vector<metrics::MetricRow> rows;  // val and test row per method
};

/// Parses "gen_augment(n)" style labels; throws PipelineError for unknown ones.
struct MethodSpec {
  std::string name;
  std::optional<std::size_t> count;
  std::string label() const;
};
MethodSpec parse_method(const std::string& label);

ComparisonTable run_comparison(Context& ctx, const std::vector<std::string>& methods,
                               RngStream rng);

struct SweepPoint {
  std::size_t count = 0;
  metrics::MetricRow val;
  metrics::MetricRow test;
};

inline constexpr const char* kSweepHeader = "count,split,sens,spec,auc,hm";

/// Trains with real data plus the first `count` filtered synthetic minority
/// candidates, weighted sampler on. Count 0 is the weighted-sampler baseline.
std::vector<SweepPoint> augmentation_sweep(Context& ctx, const std::vector<std::size_t>& counts,
                                           RngStream rng);

struct DistributionRow {
  std::string distribution;
  double target_positive_fraction = 0.0;
  double achieved_positive_fraction = 0.0;
  metrics::MetricRow val;
  metrics::MetricRow test;
  cls::EmbeddingStats embedding;
};

inline constexpr const char* kDistributionHeader =
    "distribution,target_pos,achieved_pos,split,sens,spec,auc,hm";

/// Pretrain-only models, one per positive percentage, from one shared
/// candidate pool.
std::vector<DistributionRow> distribution_ablation(Context& ctx, const std::vector<double>& positive_percents,
                                                   const DiffuPTConfig& cfg, RngStream rng);

struct FilteringAblation {
  metrics::MetricRow all_samples_val, all_samples_test;
  metrics::MetricRow filtered_val, filtered_test;
  GenerationResult unfiltered, filtered;
  /// Baseline-assessed label purity of each synthetic set.
  double purity_unfiltered = 0.0;
  double purity_filtered = 0.0;
  /// Both finetune stages started from their pretrained weights bit for bit.
  bool handoff_bitwise = false;
};

/// diffupt_run twice with the same seeds, filter off then on.
FilteringAblation filtering_ablation(Context& ctx, const DiffuPTConfig& cfg, RngStream rng);

/// Fraction of `ds` whose label the baseline reproduces at threshold 0.5.
double label_purity(cls::ClassifierModel& baseline, const data::LabeledDataset& ds);

/// Embedding statistics of one model's features on a labelled set.
cls::EmbeddingStats embedding_of(cls::ClassifierModel& model, const data::LabeledDataset& ds);

/// Generation-quality row: Fréchet / kernel distance and inception-score
/// analogs over the baseline's features against real test images, using n
/// freshly drawn samples per class. Defaults to the pool's sampler.
/// sampling_time_s is wall-clock seconds per image.
metrics::GenerationRow generation_metrics(Context& ctx, std::size_t n_per_class,
                                          const std::string& model_label,
                                          std::optional<diffusion::SamplerChoice> sampler = std::nullopt);

}  // namespace diffupt::pipeline
