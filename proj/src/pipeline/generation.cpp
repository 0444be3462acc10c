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

#include <cmath>
#include <cstdio>

#include "diffupt/pipeline.hpp"

namespace diffupt::pipeline {

GenerationPlan GenerationPlan::from_distribution(std::size_t total, double positive_percent) {
  if (!(positive_percent >= 0.0 && positive_percent <= 100.0)) {
    throw PipelineError("positive percentage must lie in [0, 100]");
  }
  GenerationPlan plan;
  plan.n_positive = static_cast<std::size_t>(std::llround(static_cast<double>(total) * positive_percent / 100.0));
  plan.n_negative = total - plan.n_positive;
  char label[32];
  std::snprintf(label, sizeof label, "%g-%g", positive_percent, 100.0 - positive_percent);
  plan.distribution = label;
  return plan;
}

void GenerationPlan::validate() const {
  if (filter.enabled && !(filter.threshold > 0.0 && filter.threshold < 1.0)) {
    throw PipelineError("filter threshold must lie in (0, 1)");
  }
  if (!(max_attempts_factor >= 1.0)) throw PipelineError("max_attempts_factor must be >= 1");
  if (guidance.w < 0.0) throw PipelineError("guidance scale must be non-negative");
}

FilterResult filter_samples(const Tensor& samples, int target_class, cls::ClassifierModel& baseline,
                            double threshold) {
  if (target_class != 0 && target_class != 1) throw PipelineError("target class must be 0 or 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw PipelineError("filter threshold must lie in (0, 1)");
  FilterResult r;
  const std::size_t n = samples.rank() == 0 ? 0 : samples.dim(0);
  num::Shape shape = samples.shape();
  if (n == 0) {
    r.kept = Tensor(shape);
    return r;
  }
  const auto p = baseline.predict_proba(samples);
  const std::size_t per = samples.size() / n;
  std::vector<double> kept;
  for (std::size_t i = 0; i < n; ++i) {
    const double pt = target_class == 1 ? p[i] : 1.0 - p[i];
    if (pt >= threshold) {
      r.kept_indices.push_back(i);
      const auto src = samples.data().subspan(i * per, per);
      kept.insert(kept.end(), src.begin(), src.end());
    }
  }
  r.stats.kept = r.kept_indices.size();
  r.stats.rejected = n - r.stats.kept;
  shape[0] = r.stats.kept;
  r.kept = Tensor(std::move(shape), std::move(kept));
  return r;
}

GenerationResult generate_balanced_dataset(CandidatePool& pool, const GenerationPlan& plan,
                                           cls::ClassifierModel* baseline, bool allow_partial) {
  plan.validate();
  if (plan.guidance.w != pool.guidance().w || plan.sampler.label() != pool.sampler().label()) {
    throw PipelineError("generation plan guidance/sampler differ from the candidate pool's");
  }
  if (plan.filter.enabled && baseline == nullptr) {
    throw PipelineError("filtering requires a baseline classifier");
  }
  GenerationResult result;
  const std::array<std::size_t, 2> targets{plan.n_negative, plan.n_positive};
  std::string shortfall;
  for (std::size_t y = 0; y < 2; ++y) {
    ClassGeneration& g = result.per_class[y];
    g.target = targets[y];
    if (g.target == 0) continue;
    if (!plan.filter.enabled) {
      pool.ensure(y, g.target);
      for (std::size_t i = 0; i < g.target; ++i) g.indices.push_back(i);
      g.attempts = g.target;
      g.filter.kept = g.target;
      continue;
    }
    const auto budget = static_cast<std::size_t>(std::ceil(plan.max_attempts_factor * static_cast<double>(g.target)));
    for (std::size_t i = 0; i < budget && g.indices.size() < g.target; ++i) {
      ++g.attempts;
      if (pool.target_probability(y, i, *baseline) >= plan.filter.threshold) {
        g.indices.push_back(i);
        ++g.filter.kept;
      } else {
        ++g.filter.rejected;
      }
    }
    if (g.indices.size() < g.target) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%sclass %zu: kept %zu of %zu after %zu attempts (shortfall %zu)",
                    shortfall.empty() ? "" : "; ", y, g.indices.size(), g.target, g.attempts,
                    g.target - g.indices.size());
      shortfall += buf;
    }
  }

  data::LabeledDataset ds;
  bool first = true;
  for (std::size_t y = 0; y < 2; ++y) {
    const auto& idx = result.per_class[y].indices;
    if (idx.empty()) continue;
    auto part = data::LabeledDataset::uniform_label(pool.images(y, idx), static_cast<int>(y),
                                                    data::Provenance::kSynthetic);
    ds = first ? std::move(part) : data::LabeledDataset::concat(ds, part);
    first = false;
  }
  if (first) {
    const auto probe = pool.images(0, {});
    ds = data::LabeledDataset::empty(probe.dim(1), probe.dim(2), probe.dim(3));
  }
  result.dataset = std::move(ds);
  if (!shortfall.empty()) {
    result.shortfall = "generation budget exhausted: " + shortfall;
    if (!allow_partial) {
      const std::string message = *result.shortfall;  // result is moved below
      throw GenerationShortfall(message, std::move(result));
    }
  }
  return result;
}

GenerationResult generate_balanced_dataset(Generator& generator, const GenerationPlan& plan,
                                           cls::ClassifierModel* baseline, const RngStream& rng,
                                           bool allow_partial) {
  CandidatePool pool(generator, plan.guidance, plan.sampler, rng);
  return generate_balanced_dataset(pool, plan, baseline, allow_partial);
}

double label_purity(cls::ClassifierModel& baseline, const data::LabeledDataset& ds) {
  if (ds.empty()) return 1.0;
  const auto p = baseline.predict_proba(ds.images());
  std::size_t agree = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    agree += static_cast<std::size_t>((p[i] >= 0.5) == (ds.labels()[i] == 1));
  }
  return static_cast<double>(agree) / static_cast<double>(p.size());
}

}  // namespace diffupt::pipeline
