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

// Acceptance harness. Runs criteria 1-9 (or one of them with --criterion N)
// and prints one PASS/FAIL line per criterion; detail lines are indented.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffupt/config.hpp"
#include "diffupt/diffusion.hpp"
#include "diffupt/metrics.hpp"
#include "diffupt/pipeline.hpp"
#include "diffupt/tensor.hpp"
#include "diffupt/workbench.hpp"
#include "oracles.hpp"

using namespace diffupt;
using num::RngStream;
using num::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::printf("    ");
  std::vprintf(fmt, args);
  std::printf("\n");
  std::fflush(stdout);
  va_end(args);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

// One trained context per seed, shared by criteria 4-7 within a process.
pipeline::Context& context(std::uint64_t seed) {
  static std::map<std::uint64_t, std::unique_ptr<pipeline::Context>> cache;
  auto& slot = cache[seed];
  if (!slot) {
    const auto t0 = std::chrono::steady_clock::now();
    slot = std::make_unique<pipeline::Context>(pipeline::prepare_context(pipeline::WorkbenchConfig{}, seed));
    detail("seed %llu: data, generator and baseline ready in %.0f s", static_cast<unsigned long long>(seed),
           seconds_since(t0));
  }
  return *slot;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor random_tensor(num::Shape shape, RngStream& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// ---- 1: published rate pairs ------------------------------------------------------

std::string strip_markup(std::string cell) {
  static const std::regex cite(R"(\\cite\{[^}]*\})");
  static const std::regex bold(R"(\\textbf\{([^}]*)\})");
  cell = std::regex_replace(cell, cite, "");
  cell = std::regex_replace(cell, bold, "$1");
  const auto b = cell.find_first_not_of(" \t");
  const auto e = cell.find_last_not_of(" \t");
  return b == std::string::npos ? "" : cell.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct TableRow {
  std::string name;
  double sens, spec, hm;
};

// Rows of the tabular that precedes \label{table:<label>}.
std::vector<TableRow> read_table(const std::string& text, const std::string& label) {
  const auto at = text.find("\\label{table:" + label + "}");
  if (at == std::string::npos) throw std::runtime_error("table " + label + " not found");
  const auto begin = text.rfind("\\begin{tabular}", at);
  const auto end = text.find("\\end{tabular}", begin);
  std::istringstream body(text.substr(begin, end - begin));
  std::vector<TableRow> rows;
  int si = -1, pi = -1, hi = -1;
  std::string line;
  while (std::getline(body, line)) {
    if (line.find('&') == std::string::npos) continue;
    line = line.substr(0, line.find("\\\\"));
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '&');) cells.push_back(strip_markup(c));
    if (si < 0) {
      for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        const auto c = lower(cells[i]);
        if (c == "sensitivity") si = i;
        if (c == "specificity") pi = i;
        if (c == "harmonic mean") hi = i;
      }
      continue;
    }
    rows.push_back({cells[0], std::stod(cells[si]), std::stod(cells[pi]), std::stod(cells[hi])});
  }
  if (si < 0 || pi < 0 || hi < 0) throw std::runtime_error("table " + label + " lacks rate columns");
  return rows;
}

Outcome criterion_published_pairs() {
  std::ifstream in(DIFFUPT_PAPER);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t checked = 0, bad = 0;
  for (const char* label : {"standalone_Test", "Final_Validation", "Final_Test", "Filtering", "AIROGs_Test"}) {
    for (const auto& r : read_table(text, label)) {
      const double hm = metrics::harmonic_mean(r.sens, r.spec);
      ++checked;
      if (std::abs(hm - r.hm) > 0.01 + 1e-9) {
        ++bad;
        detail("%s / %s: (%.2f, %.2f) gives %.4f, printed %.2f", label, r.name.c_str(), r.sens, r.spec, hm, r.hm);
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu/%zu printed pairs recompute within 0.01", checked - bad, checked);
  return {bad == 0 && checked > 0, buf};
}

// ---- 2: numeric core --------------------------------------------------------------

// Relative error of reverse-mode gradients against central differences on one
// randomly shaped network.
double random_net_error(RngStream rng) {
  const bool conv = rng.below(2) == 1;
  const std::size_t n = 1 + rng.below(3);
  std::vector<Tensor> params;
  Tensor x;
  std::size_t width = 0;
  if (conv) {
    const std::size_t c = 1 + rng.below(2), hw = 3 + rng.below(4), co = 1 + rng.below(3);
    x = random_tensor({n, c, hw, hw}, rng);
    params.push_back(random_tensor({co, c, 3, 3}, rng));
    params.push_back(random_tensor({co}, rng));
    width = co;
  } else {
    width = 1 + rng.below(5);
    x = random_tensor({n, width}, rng);
  }
  const std::size_t depth = 1 + rng.below(3);
  const std::size_t first_linear = params.size();
  std::size_t in = width;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t out = l + 1 == depth ? 1 : 1 + rng.below(6);
    params.push_back(random_tensor({out, in}, rng));
    params.push_back(random_tensor({out}, rng));
    in = out;
  }
  const std::size_t stride = 1 + rng.below(2);
  const bool squash = rng.below(2) == 1;
  auto loss_fn = [&] {
    Tensor h = x;
    if (conv) h = num::mean_spatial(num::silu(num::conv2d(x, params[0], params[1], {stride, 1})));
    for (std::size_t l = 0; l < depth; ++l) {
      h = num::linear(h, params[first_linear + 2 * l], params[first_linear + 2 * l + 1]);
      if (l + 1 < depth) h = squash ? num::sigmoid(h) : num::silu(h);
    }
    return num::mean(num::square(h));
  };
  std::vector<Tensor*> leaves{&x};
  for (auto& p : params) leaves.push_back(&p);
  for (Tensor* t : leaves) t->set_requires_grad(true);
  num::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (Tensor* t : leaves) analytic.emplace_back(t->grad().begin(), t->grad().end());
  num::NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto numeric = oracle::central_difference([&] { return loss_fn().item(); }, leaves[k]->data(), 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double denom = std::max({std::abs(numeric[i]), std::abs(analytic[k][i]), 1e-6});
      worst = std::max(worst, std::abs(numeric[i] - analytic[k][i]) / denom);
    }
  }
  return worst;
}

Outcome criterion_numeric_core() {
  double worst = 0.0;
  for (std::uint64_t net = 0; net < 20; ++net) worst = std::max(worst, random_net_error(RngStream(2024).split(net)));
  detail("worst relative gradient error over 20 random nets: %.2e", worst);

  // Small-integer operands keep every partial sum exact, so any summation
  // order must reproduce the oracle bit for bit.
  RngStream rng(77);
  auto small_ints = [&](num::Shape s) {
    Tensor t(s);
    for (double& v : t.data()) v = static_cast<double>(rng.below(7)) - 3.0;
    return t;
  };
  std::size_t cases = 0, mismatched = 0;
  for (std::size_t h = 1; h <= 8; ++h)
    for (std::size_t w = 1; w <= 8; ++w)
      for (std::size_t k : {1, 2, 3})
        for (std::size_t stride : {1, 2})
          for (std::size_t pad : {0, 1}) {
            if (k > h + 2 * pad || k > w + 2 * pad) continue;
            const std::size_t cin = 1 + (h + w) % 2;
            const Tensor x = small_ints({2, cin, h, w});
            const Tensor wt = small_ints({2, cin, k, k});
            const Tensor b = small_ints({2});
            const Tensor got = num::conv2d(x, wt, b, {stride, pad});
            const auto want = oracle::conv2d(x, wt, b, stride, pad);
            ++cases;
            if (got.size() != want.size() || !std::equal(want.begin(), want.end(), got.data().begin())) ++mismatched;
          }
  detail("convolution: %zu/%zu input shapes up to 8x8 equal the brute-force sum exactly", cases - mismatched, cases);
  char buf[128];
  std::snprintf(buf, sizeof buf, "gradient rel. err %.1e (< 1e-4), conv exact on %zu/%zu shapes", worst,
                cases - mismatched, cases);
  return {worst < 1e-4 && mismatched == 0, buf};
}

// ---- 3: diffusion invariants -------------------------------------------------------

Outcome criterion_diffusion() {
  bool schedules = true;
  for (std::size_t T = 2; T <= 1000; ++T) {
    const auto s = diffusion::linear_schedule(T, 1e-4, 0.02);
    double prod = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
      prod *= 1.0 - s.beta[t - 1];
      schedules = schedules && s.alpha_bar_at(t) == prod && s.alpha_bar_at(t) < s.alpha_bar_at(t - 1);
    }
  }
  detail("alpha-bar strictly decreasing and equal to the running product for T = 2..1000: %s",
         schedules ? "yes" : "no");

  const auto s = diffusion::linear_schedule(1000, 1e-4, 0.02);
  RngStream rng(3);
  const std::size_t n = 10000;
  Tensor x0({n}), eps({n});
  for (double& v : x0.data()) v = rng.normal();
  for (double& v : eps.data()) v = rng.normal();
  double worst_var = 0.0;
  for (std::size_t t : {1, 50, 250, 500, 750, 1000}) {
    const Tensor xt = diffusion::q_sample(x0, t, eps, s);
    double m = 0, v = 0;
    for (double z : xt.data()) m += z / n;
    for (double z : xt.data()) v += (z - m) * (z - m) / (n - 1);
    worst_var = std::max(worst_var, std::abs(v - 1.0));
  }
  detail("forward noising of unit-variance data: worst variance deviation %.3f over 10k draws", worst_var);

  diffusion::DenoiserModel model({1, 4, 4, 8, 1, 8, 5});
  const auto draw = [&](std::uint64_t seed) {
    return diffusion::sample_raw(model, 6, 1, {3.0}, diffusion::SamplerChoice::ddim(20, 0.0), s, RngStream(seed),
                                 {1, 4, 4});
  };
  const Tensor a = draw(9), b = draw(9);
  const Tensor x = Tensor::from({0.3, -1.2, 0.8}), e = Tensor::from({0.5, 0.1, -0.7});
  RngStream r1(1), r2(2);
  const Tensor step1 = diffusion::ddim_step(diffusion::q_sample(x, 500, e, s), 500, 450, e, s, 0.0, r1);
  const Tensor step2 = diffusion::ddim_step(diffusion::q_sample(x, 500, e, s), 500, 450, e, s, 0.0, r2);
  const bool deterministic = std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0 &&
                             std::memcmp(step1.data().data(), step2.data().data(), 3 * sizeof(double)) == 0;
  detail("DDIM eta 0 repeat and noise-stream independence bitwise: %s", deterministic ? "yes" : "no");

  const Tensor c = Tensor::from({0.7, -1.5, 2.25}), u = Tensor::from({-0.1, 0.4, 9.0});
  const Tensor w0 = diffusion::cfg_epsilon(c, u, 0.0);
  const bool identity = std::memcmp(w0.data().data(), c.data().data(), 3 * sizeof(double)) == 0;
  const double direct = diffusion::cfg_epsilon(Tensor::from({1.0}), Tensor::from({0.0}), 3.0)[0];
  detail("guidance w = 0 returns the conditional estimate: %s; (1, 0, w = 3) gives %g", identity ? "yes" : "no",
         direct);
  const bool pass = schedules && worst_var < 0.05 && deterministic && identity && direct == 4.0;
  return {pass, "schedule, forward-noising, DDIM determinism and guidance invariants"};
}

// ---- 4: generative fidelity --------------------------------------------------------

bool two_gaussian_toy() {
  const double mu[2] = {0.6, -0.4};
  RngStream rng(14);
  const std::size_t n = 512;
  Tensor data({n, 2, 1, 1});
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2;
    const double sign = y[i] ? 1.0 : -1.0;
    for (std::size_t c = 0; c < 2; ++c) data.data()[i * 2 + c] = sign * mu[c] + 0.1 * rng.normal();
  }
  const auto s = diffusion::linear_schedule(200, 1e-4, 0.05);
  diffusion::DenoiserModel model({2, 1, 1, 32, 0, 32, 15});
  diffusion::DiffusionTrainConfig cfg;
  cfg.iterations = 3000;
  cfg.batch = 64;
  cfg.lr = 2e-3;
  diffusion::train_diffusion(model, data, y, cfg, s, RngStream(16));
  const double norm = std::hypot(mu[0], mu[1]);
  bool ok = true;
  for (std::size_t cls : {0, 1}) {
    const Tensor out = diffusion::sample_raw(model, 400, cls, {1.0}, diffusion::SamplerChoice::ddim(50), s,
                                             RngStream(17).split(cls), {2, 1, 1});
    double m[2] = {0, 0};
    for (std::size_t i = 0; i < 400; ++i)
      for (std::size_t c = 0; c < 2; ++c) m[c] += out[i * 2 + c] / 400;
    const double sign = cls ? 1.0 : -1.0;
    const double err = std::hypot(m[0] - sign * mu[0], m[1] - sign * mu[1]);
    detail("toy class %zu: sample mean (%.3f, %.3f), error %.3f of allowed %.3f", cls, m[0], m[1], err, 0.15 * norm);
    ok = ok && err < 0.15 * norm;
  }
  return ok;
}

Outcome criterion_generative_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const bool toy = two_gaussian_toy();
  int wins = 0;
  for (auto seed : kSeeds) {
    auto& ctx = context(seed);
    const auto& gen = ctx.config.diffupt.generation;
    const auto& synth = ctx.config.dataset.synth;
    const std::size_t n = 200, h = synth.image_size, w = synth.image_size;
    double mean[2] = {0, 0};
    for (std::size_t y : {0, 1}) {
      const Tensor x = ctx.generator->sample(n, y, gen.guidance, gen.sampler, RngStream(seed).split("fidelity").split(y));
      for (std::size_t i = 0; i < n; ++i) {
        mean[y] += data::measure_cup_ratio(std::span<const double>(x.data().data() + i * h * w, h * w), h, w, synth) / n;
      }
    }
    detail("seed %llu: measured cup ratio class 0 %.3f, class 1 %.3f", static_cast<unsigned long long>(seed), mean[0],
           mean[1]);
    wins += mean[1] > mean[0];
  }
  const double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "toy means %s; class-1 cup ratio larger in %d/5 seeds (need 4); %.0f s (limit 600)",
                toy ? "within tolerance" : "off target", wins, elapsed);
  return {toy && wins >= 4 && elapsed < 600, buf};
}

// ---- 5: pipeline contracts ---------------------------------------------------------

Outcome criterion_pipeline_contracts() {
  const auto t0 = std::chrono::steady_clock::now();
  bool idempotent = true, purity = true, handoff = true;
  int wins = 0;
  for (auto seed : kSeeds) {
    auto& ctx = context(seed);
    const auto& gen = ctx.config.diffupt.generation;
    for (std::size_t y : {0, 1}) {
      const Tensor cand = ctx.generator->sample(100, y, gen.guidance, gen.sampler, RngStream(seed).split("idem").split(y));
      const auto once = pipeline::filter_samples(cand, static_cast<int>(y), *ctx.baseline, gen.filter.threshold);
      const auto twice = pipeline::filter_samples(once.kept, static_cast<int>(y), *ctx.baseline, gen.filter.threshold);
      idempotent = idempotent && twice.stats.kept == once.stats.kept && twice.stats.rejected == 0;
    }
    const auto a = pipeline::filtering_ablation(ctx, ctx.config.diffupt, pipeline::methods_stream(seed).split("filtering"));
    detail("seed %llu: purity filtered %.3f vs all %.3f; test hm filtered %.2f vs all %.2f",
           static_cast<unsigned long long>(seed), a.purity_filtered, a.purity_unfiltered,
           a.filtered_test.harmonic_mean.value_or(0.0), a.all_samples_test.harmonic_mean.value_or(0.0));
    purity = purity && a.purity_filtered >= a.purity_unfiltered;
    handoff = handoff && a.handoff_bitwise;
    wins += a.filtered_test.harmonic_mean.value_or(0.0) >= a.all_samples_test.harmonic_mean.value_or(0.0);
  }
  const double elapsed = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "idempotent %s, purity %s, filtered hm >= all in %d/5 (need 3), handoff bitwise %s; %.0f s (limit 900)",
                idempotent ? "yes" : "no", purity ? "ok" : "violated", wins, handoff ? "yes" : "no", elapsed);
  return {idempotent && purity && wins >= 3 && handoff && elapsed < 900, buf};
}

// ---- 6: headline ordering ----------------------------------------------------------

Outcome criterion_headline() {
  const auto t0 = std::chrono::steady_clock::now();
  int hm_wins = 0, auc_wins = 0;
  std::vector<double> gains;
  for (auto seed : kSeeds) {
    auto& ctx = context(seed);
    const auto table = pipeline::run_comparison(ctx, {"normal", "diffupt"}, pipeline::methods_stream(seed));
    const metrics::MetricRow* normal = nullptr;
    const metrics::MetricRow* diffupt = nullptr;
    for (const auto& r : table.rows) {
      if (r.split != "test") continue;
      (r.method == "normal" ? normal : diffupt) = &r;
    }
    const double gain = diffupt->harmonic_mean.value_or(0.0) - normal->harmonic_mean.value_or(0.0);
    gains.push_back(gain);
    hm_wins += gain >= 0.0;
    auc_wins += diffupt->auc.value_or(0.0) >= normal->auc.value_or(0.0);
    detail("seed %llu: train minority %.2f%%; test hm normal %.2f, DiffuPT %.2f; auc normal %.2f, DiffuPT %.2f",
           static_cast<unsigned long long>(seed), 100.0 * ctx.splits.train.class_counts().positive_fraction(),
           normal->harmonic_mean.value_or(0.0), diffupt->harmonic_mean.value_or(0.0), normal->auc.value_or(0.0),
           diffupt->auc.value_or(0.0));
  }
  const double med = median(gains);
  const double elapsed = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "hm >= normal in %d/5 (need 4), median gain %.2f (need 1.0), auc >= normal in %d/5 (need 4); %.0f s",
                hm_wins, med, auc_wins, elapsed);
  return {hm_wins >= 4 && med >= 1.0 && auc_wins >= 4 && elapsed < 1800, buf};
}

// ---- 7: augmentation sweep shape ---------------------------------------------------

Outcome criterion_sweep_shape() {
  int interior = 0;
  for (auto seed : kSeeds) {
    auto& ctx = context(seed);
    const auto points = pipeline::augmentation_sweep(ctx, ctx.config.sweep_counts, pipeline::methods_stream(seed));
    std::size_t best = 0;
    std::string curve;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double hm = points[i].test.harmonic_mean.value_or(0.0);
      if (hm > points[best].test.harmonic_mean.value_or(0.0)) best = i;
      char cell[48];
      std::snprintf(cell, sizeof cell, " %zu:%.2f", points[i].count, hm);
      curve += cell;
    }
    const bool inside = best > 0 && best + 1 < points.size();
    interior += inside;
    detail("seed %llu: test hm by count%s; maximum at %zu (%s)", static_cast<unsigned long long>(seed), curve.c_str(),
           points[best].count, inside ? "interior" : "endpoint");
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "maximum at an interior count in %d/5 seeds (need 3)", interior);
  return {interior >= 3, buf};
}

// ---- 8: metric oracles -------------------------------------------------------------

Outcome criterion_metric_oracles() {
  RngStream rng(88);
  std::size_t auc_cases = 0, auc_exact = 0;
  for (std::size_t n = 2; n <= 200; n += 3) {
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 1 ? 0 : i < 2 ? 1 : rng.uniform() < 0.4;
      s[i] = std::round((rng.normal() + y[i]) * (1 + n % 5)) / (1 + n % 5);  // coarse: many ties
    }
    ++auc_cases;
    auc_exact += *metrics::auc(s, y) == oracle::pairwise_auc(s, y);
  }
  detail("auc: trapezoid equals pairwise estimate exactly in %zu/%zu cases", auc_exact, auc_cases);

  metrics::Features f{60, 4, std::vector<double>(240)};
  for (double& v : f.values) v = rng.normal();
  const double self = metrics::frechet_feature_distance(f, f);
  const std::vector<double> m0{0.0}, m1{1.0}, one{1.0};
  const double unit = metrics::frechet_from_moments(m0, one, m1, one);
  detail("frechet: self %.2e, N(0,1) vs N(1,1) %.12f", self, unit);

  const double lo = metrics::inception_score_analog(std::vector<double>(10, 0.5));
  std::vector<double> confident(10, 1.0);
  std::fill(confident.begin(), confident.begin() + 5, 0.0);
  const double hi = metrics::inception_score_analog(confident);
  bool bounded = true;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(1 + rng.below(40));
    for (auto& v : p) v = rng.uniform();
    const double is = metrics::inception_score_analog(p);
    bounded = bounded && is >= 1.0 - 1e-12 && is <= 2.0 + 1e-12;
  }
  detail("inception-score analog: uninformative %.12f, confident balanced %.12f, random in [1, 2]: %s", lo, hi,
         bounded ? "yes" : "no");
  const bool pass = auc_exact == auc_cases && std::abs(self) < 1e-9 && std::abs(unit - 1.0) < 1e-12 &&
                    std::abs(lo - 1.0) < 1e-12 && std::abs(hi - 2.0) < 1e-12 && bounded;
  return {pass, "auc, frechet and inception-score analog oracles"};
}

// ---- 9: manifest reruns ------------------------------------------------------------

pipeline::WorkbenchConfig rerun_config() {
  return config::parse_config(
      "[dataset]\npool_negative = 400\npool_positive = 80\n"
      "[autoencoder]\niterations = 150\n"
      "[diffusion]\niterations = 150\nsampler_steps = 8\n"
      "[classifier]\niterations = 100\neval_interval = 30\n"
      "[pipeline]\npretrain_iterations = 60\nfinetune_iterations = 60\n"
      "generate_negative = 40\ngenerate_positive = 40\nmax_attempts_factor = 20\n"
      "augment_count = 20\nsweep_counts = 0, 10, 20\ndistributions = 40, 60\n"
      "[run]\nseeds = 3, 8\n");
}

Outcome criterion_reproducibility() {
  const fs::path root = fs::temp_directory_path() / "diffupt_acceptance_rerun";
  fs::remove_all(root);
  std::size_t files = 0, identical = 0;
  for (const auto& command : workbench::commands()) {
    if (command == "report") continue;
    workbench::RunRequest req;
    req.command = command;
    req.config = rerun_config();
    req.out = root / command / "first";
    const auto manifest = workbench::run(req);
    const auto again = workbench::request_from_manifest(workbench::RunManifest::load(req.out / "manifest.json"),
                                                        root / command / "second");
    const auto second = workbench::run(again);
    std::size_t here = 0, same = 0;
    const auto it = manifest.artifacts.find("reports");
    if (it != manifest.artifacts.end()) {
      for (const auto& rel : it->second) {
        auto slurp = [](const fs::path& p) {
          std::ifstream in(p, std::ios::binary);
          std::stringstream ss;
          ss << in.rdbuf();
          return ss.str();
        };
        ++here;
        same += fs::exists(again.out / rel) && slurp(req.out / rel) == slurp(again.out / rel);
      }
    }
    const bool listed = second.artifacts.count("reports") ? second.artifacts.at("reports") == it->second : here == 0;
    detail("%s: %zu/%zu report files byte-identical%s", command.c_str(), same, here, listed ? "" : ", listing differs");
    files += here;
    identical += listed ? same : 0;
  }
  if (identical == files) fs::remove_all(root);  // kept for inspection otherwise
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu/%zu report files identical after manifest rerun", identical, files);
  return {files > 0 && identical == files, buf};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria of the DiffuPT workbench"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number (1-9); repeatable; default all")
      ->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"published rate pairs", criterion_published_pairs}},
      {2, {"numeric core", criterion_numeric_core}},
      {3, {"diffusion invariants", criterion_diffusion}},
      {4, {"generative fidelity", criterion_generative_fidelity}},
      {5, {"pipeline contracts", criterion_pipeline_contracts}},
      {6, {"headline ordering", criterion_headline}},
      {7, {"augmentation sweep shape", criterion_sweep_shape}},
      {8, {"metric oracles", criterion_metric_oracles}},
      {9, {"manifest reproducibility", criterion_reproducibility}},
  };
  int failed = 0;
  for (int id : selected) {
    const auto& [name, fn] = criteria.at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s - %s [%.1f s]\n", id, name, o.pass ? "PASS" : "FAIL", o.summary.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
