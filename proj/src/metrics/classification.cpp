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
#include <cstdio>
#include <numeric>

#include "diffupt/metrics.hpp"

namespace diffupt::metrics {

ConfusionCounts confusion(std::span<const double> probs, std::span<const std::uint8_t> labels,
                          double threshold) {
  if (probs.size() != labels.size()) {
    throw MetricError("confusion: " + std::to_string(probs.size()) + " scores vs " +
                      std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (labels[i]) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

Percent sensitivity(const ConfusionCounts& c) {
  if (c.positives() == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.positives());
}

Percent specificity(const ConfusionCounts& c) {
  if (c.negatives() == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.negatives());
}

double harmonic_mean(double sens, double spec) {
  if (sens + spec == 0.0) return 0.0;
  return 2.0 * sens * spec / (sens + spec);
}

Percent harmonic_mean(Percent sens, Percent spec) {
  if (!sens || !spec) return std::nullopt;
  return harmonic_mean(*sens, *spec);
}

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: score/label length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::uint64_t pos = 0, neg = 0;
  for (auto y : labels) (y ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return std::nullopt;

  // Twice the trapezoid area in units of (1/P)(1/N): each group of tied
  // scores adds fp_g * (2 tp_before + tp_g).
  std::uint64_t twice_area = 0;
  std::uint64_t tp_before = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::uint64_t tp_g = 0, fp_g = 0;
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp_g : fp_g) += 1;
      ++i;
    }
    twice_area += fp_g * (2 * tp_before + tp_g);
    tp_before += tp_g;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

MetricRow evaluate(std::string method, std::string split, std::span<const double> probs,
                   std::span<const std::uint8_t> labels) {
  MetricRow row;
  row.method = std::move(method);
  row.split = std::move(split);
  row.confusion = confusion(probs, labels, 0.5);
  row.sensitivity = sensitivity(row.confusion);
  row.specificity = specificity(row.confusion);
  row.harmonic_mean = harmonic_mean(row.sensitivity, row.specificity);
  if (auto a = auc(probs, labels)) row.auc = 100.0 * *a;
  return row;
}

std::string format_percent(Percent p) {
  if (!p) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *p);
  return buf;
}

std::string to_csv(const MetricRow& row) {
  return row.method + "," + row.split + "," + format_percent(row.sensitivity) + "," +
         format_percent(row.specificity) + "," + format_percent(row.auc) + "," +
         format_percent(row.harmonic_mean);
}

std::string to_csv(const GenerationRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f,%.6f,%.3f", row.nfe, row.fid, row.kid, row.is,
                row.sampling_time_s);
  return row.model + buf;
}

std::string confusion_csv(const MetricRow& row) {
  const auto& c = row.confusion;
  return row.method + "," + row.split + "," + (c.subgroup.empty() ? "all" : c.subgroup) + "," +
         std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
         std::to_string(c.fn);
}

}  // namespace diffupt::metrics
