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

#include "diffupt/workbench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include "diffupt/config.hpp"
#include "json.hpp"

namespace diffupt::workbench {

using nlohmann::json;
using num::RngStream;
using num::Tensor;
using pipeline::WorkbenchConfig;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Collects artifacts relative to the run directory.
class Artifacts {
 public:
  explicit Artifacts(fs::path root) : root_(std::move(root)) {}
  void add(const std::string& kind, const fs::path& p) {
    artifacts_[kind].push_back(fs::relative(p, root_).generic_string());
  }
  std::map<std::string, std::vector<std::string>> take() {
    for (auto& [k, v] : artifacts_) std::sort(v.begin(), v.end());
    return std::move(artifacts_);
  }

 private:
  fs::path root_;
  std::map<std::string, std::vector<std::string>> artifacts_;
};

struct SeedRun {
  const RunRequest& req;
  std::uint64_t seed;
  fs::path dir;
  Artifacts& artifacts;

  fs::path sub(const std::string& name) const {
    fs::path p = dir / name;
    fs::create_directories(p);
    return p;
  }
  void report(const Report& r) const { artifacts.add("reports", emit_report(r, sub("reports"))); }
  void measurement(const Report& r) const { artifacts.add("measurements", emit_report(r, sub("measurements"))); }
  void grid(const Tensor& images, const std::string& name) const {
    if (images.dim(0) == 0) return;
    const fs::path p = sub("samples") / (name + ".pgm");
    const std::size_t n = std::min<std::size_t>(images.dim(0), 64);
    data::write_pgm_grid(images, n, 8, p);
    artifacts.add("samples", p);
  }
  void log(const std::string& msg) const {
    if (req.log) req.log("[seed " + std::to_string(seed) + "] " + msg);
  }
};

// ---- row helpers --------------------------------------------------------------------

Report metric_report(std::string name, const std::vector<metrics::MetricRow>& rows) {
  Report r{std::move(name), metrics::kMetricHeader, {}};
  for (const auto& m : rows) r.rows.push_back(metrics::to_csv(m));
  return r;
}

Report confusion_report(std::string name, const std::vector<metrics::MetricRow>& rows) {
  Report r{std::move(name), metrics::kConfusionHeader, {}};
  for (const auto& m : rows) {
    std::istringstream lines(metrics::confusion_csv(m));
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty()) r.rows.push_back(line);
    }
  }
  return r;
}

Report history_report(std::string name, const cls::TrainHistory& h) {
  Report r{std::move(name), cls::kHistoryHeader, {}};
  for (const auto& row : h.rows) r.rows.push_back(cls::to_csv(row));
  return r;
}

Report dataset_report(const data::SplitResult& s) {
  Report r{"dataset", "split,negative,positive,positive_fraction", {}};
  auto add = [&](const char* name, const data::LabeledDataset& ds) {
    const auto c = ds.class_counts();
    r.rows.push_back(std::string(name) + "," + std::to_string(c.negative) + "," + std::to_string(c.positive) + "," +
                     fmt6(c.positive_fraction()));
  };
  add("train", s.train);
  add("val", s.val);
  add("test", s.test);
  return r;
}

Report loss_curve_report(std::string name, const std::vector<double>& loss, const std::vector<double>* smoothed,
                         std::size_t stride) {
  Report r{std::move(name), smoothed ? "iteration,loss,smoothed" : "iteration,loss", {}};
  for (std::size_t i = 0; i < loss.size(); ++i) {
    if ((i + 1) % stride != 0 && i + 1 != loss.size()) continue;
    std::string row = std::to_string(i + 1) + "," + fmt6(loss[i]);
    if (smoothed) row += "," + fmt6((*smoothed)[i]);
    r.rows.push_back(std::move(row));
  }
  return r;
}

Report generation_counts_report(const pipeline::GenerationResult& g) {
  Report r{"generation_counts", "class,target,attempts,kept,rejected,rejection_rate", {}};
  for (std::size_t y = 0; y < 2; ++y) {
    const auto& c = g.per_class[y];
    r.rows.push_back(std::to_string(y) + "," + std::to_string(c.target) + "," + std::to_string(c.attempts) + "," +
                     std::to_string(c.filter.kept) + "," + std::to_string(c.filter.rejected) + "," +
                     fmt6(c.filter.rejection_rate()));
  }
  return r;
}

Tensor class_slice(const data::LabeledDataset& ds, int label) { return ds.class_images(label); }

// ---- commands -----------------------------------------------------------------------

void cmd_synth_data(const SeedRun& run) {
  run.log("writing synthetic splits");
  const auto splits = pipeline::make_splits(run.req.config.dataset, run.seed);
  const fs::path dd = run.sub("data");
  for (const auto& [name, ds] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
    const fs::path p = dd / (std::string(name) + ".dptd");
    data::write_dataset(*ds, p);
    run.artifacts.add("datasets", p);
  }
  run.report(dataset_report(splits));
  run.grid(class_slice(splits.train, 0), "real_class0");
  run.grid(class_slice(splits.train, 1), "real_class1");
}

void cmd_train_ae(const SeedRun& run) {
  const auto& cfg = run.req.config;
  const auto splits = pipeline::make_splits(cfg.dataset, run.seed);
  const auto gc = pipeline::seeded_generator_config(cfg, run.seed);
  latent::AutoencoderConfig ac = gc.autoencoder;
  ac.channels = splits.train.channels();
  ac.height = splits.train.height();
  ac.width = splits.train.width();
  latent::Autoencoder ae(ac);
  run.log("training autoencoder");
  const auto rep = latent::train_autoencoder(ae, splits.train, gc.autoencoder_train,
                                             pipeline::generator_stream(run.seed).split("autoencoder"));
  const fs::path w = run.sub("weights") / "autoencoder.dptw";
  ae.save(w);
  run.artifacts.add("weights", w);

  Report recon{"reconstruction", latent::kReconstructionHeader, {}};
  for (const auto& row : rep.rows) recon.rows.push_back(latent::to_csv(row));
  recon.rows.push_back(latent::to_csv(latent::reconstruction_metrics(ae, splits.test.images(), "test")));
  run.report(recon);
  run.report(loss_curve_report("autoencoder_loss", rep.loss, nullptr, 10));

  std::vector<std::size_t> idx(std::min<std::size_t>(32, splits.test.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto originals = splits.test.subset(idx);
  Tensor rec;
  {
    num::NoGradGuard no_grad;
    rec = ae.reconstruct(originals.images());
  }
  for (double& v : rec.data()) v = std::clamp(v, 0.0, 1.0);
  run.grid(data::LabeledDataset::concat(originals, data::LabeledDataset::uniform_label(rec, 0, data::Provenance::kSynthetic))
               .images(),
           "reconstructions");
}

std::unique_ptr<pipeline::Generator> trained_generator(const SeedRun& run, const data::SplitResult& splits) {
  const auto& cfg = run.req.config;
  auto gen = std::make_unique<pipeline::Generator>(pipeline::seeded_generator_config(cfg, run.seed),
                                                   splits.train.channels(), splits.train.height(),
                                                   splits.train.width());
  run.log("training generator");
  gen->train(splits.train, pipeline::generator_stream(run.seed));
  return gen;
}

void save_generator(const SeedRun& run, const pipeline::Generator& gen) {
  const fs::path w = run.sub("weights") / "generator";
  gen.save(w);
  for (const auto& e : fs::directory_iterator(w)) run.artifacts.add("weights", e.path());
}

void cmd_train_diffusion(const SeedRun& run) {
  const auto splits = pipeline::make_splits(run.req.config.dataset, run.seed);
  auto gen = trained_generator(run, splits);
  save_generator(run, *gen);
  const auto& curve = gen->diffusion_curve();
  run.report(loss_curve_report("diffusion_loss", curve.loss, &curve.smoothed, 20));
  if (gen->autoencoder()) {
    Report recon{"reconstruction", latent::kReconstructionHeader, {}};
    for (const auto& row : gen->autoencoder_report().rows) recon.rows.push_back(latent::to_csv(row));
    run.report(recon);
  }
}

Report cup_ratio_report(const std::vector<std::pair<std::string, const data::LabeledDataset*>>& sets,
                        const data::SynthFundusConfig& synth) {
  Report r{"cup_ratio", "set,class,count,mean_cup_ratio,sd_cup_ratio", {}};
  for (const auto& [name, ds] : sets) {
    for (int y = 0; y < 2; ++y) {
      std::vector<double> v;
      for (std::size_t i = 0; i < ds->size(); ++i) {
        if (ds->labels()[i] == y) v.push_back(data::measure_cup_ratio(ds->image(i), ds->height(), ds->width(), synth));
      }
      double mean = 0.0, var = 0.0;
      for (double x : v) mean += x;
      mean /= v.empty() ? 1.0 : static_cast<double>(v.size());
      for (double x : v) var += (x - mean) * (x - mean);
      var /= v.size() > 1 ? static_cast<double>(v.size() - 1) : 1.0;
      r.rows.push_back(name + "," + std::to_string(y) + "," + std::to_string(v.size()) + "," + fmt6(mean) + "," +
                       fmt6(std::sqrt(var)));
    }
  }
  return r;
}

void cmd_sample(const SeedRun& run) {
  const auto& cfg = run.req.config;
  const auto splits = pipeline::make_splits(cfg.dataset, run.seed);
  auto gen = trained_generator(run, splits);
  save_generator(run, *gen);
  const auto& plan = cfg.diffupt.generation;
  const RngStream rng = RngStream(run.seed).split("samples");
  data::LabeledDataset synth;
  for (std::size_t y = 0; y < 2; ++y) {
    const Tensor imgs = gen->sample(64, y, plan.guidance, plan.sampler, rng.split(y));
    run.grid(imgs, "generated_class" + std::to_string(y));
    auto part = data::LabeledDataset::uniform_label(imgs, static_cast<int>(y), data::Provenance::kSynthetic);
    synth = y == 0 ? std::move(part) : data::LabeledDataset::concat(synth, part);
  }
  run.report(cup_ratio_report({{"generated", &synth}, {"real_train", &splits.train}}, cfg.dataset.synth));
}

void cmd_train_classifier(const SeedRun& run) {
  const auto& cfg = run.req.config;
  const auto splits = pipeline::make_splits(cfg.dataset, run.seed);
  cls::TrainHistory hist;
  run.log("training baseline classifier");
  auto model = pipeline::train_baseline(cfg, run.seed, splits, &hist);
  const fs::path w = run.sub("weights") / "classifier.dptw";
  num::save_parameters(model->parameters(), w);
  run.artifacts.add("weights", w);
  const std::vector<metrics::MetricRow> rows{cls::evaluate_model(*model, splits.val, "baseline", "val"),
                                             cls::evaluate_model(*model, splits.test, "baseline", "test")};
  run.report(metric_report("baseline", rows));
  run.report(confusion_report("baseline_confusion", rows));
  run.report(history_report("baseline_history", hist));
}

pipeline::Context context(const SeedRun& run) {
  run.log("preparing data, generator and baseline");
  return pipeline::prepare_context(run.req.config, run.seed);
}

Report embedding_report(const std::vector<std::pair<std::string, cls::EmbeddingStats>>& rows) {
  Report r{"embedding", std::string("model,") + cls::kEmbeddingHeader, {}};
  for (const auto& [name, s] : rows) r.rows.push_back(name + "," + cls::to_csv(s));
  return r;
}

void cmd_diffupt(const SeedRun& run) {
  auto ctx = context(run);
  run.log("running DiffuPT");
  auto r = pipeline::diffupt_run(ctx, run.req.config.diffupt, pipeline::methods_stream(run.seed).split("diffupt"));
  const std::vector<metrics::MetricRow> rows{r.pretrain.val, r.pretrain.test, r.finetune.val, r.finetune.test};
  run.report(metric_report("diffupt", rows));
  run.report(confusion_report("diffupt_confusion", rows));
  run.report(history_report("pretrain_history", r.pretrain.history));
  run.report(history_report("finetune_history", r.finetune.history));
  run.report(generation_counts_report(r.generation));
  run.report(embedding_report({{"baseline", pipeline::embedding_of(*ctx.baseline, ctx.splits.test)},
                               {"pretrained", r.pretrained_embedding},
                               {"finetuned", r.finetuned_embedding}}));
  Report handoff{"handoff", "pretrained_loss_on_real,finetune_initial_loss,bitwise", {}};
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s", r.pretrained_loss_on_real, r.finetune_initial_loss,
                r.handoff_bitwise ? "true" : "false");
  handoff.rows.push_back(buf);
  run.report(handoff);
  Report warn{"warnings", "warning", r.warnings};
  run.report(warn);
  run.grid(r.generation.dataset.class_images(0), "synthetic_class0");
  run.grid(r.generation.dataset.class_images(1), "synthetic_class1");
  const fs::path w = run.sub("weights") / "diffupt_classifier.dptw";
  num::save_parameters(r.model->parameters(), w);
  run.artifacts.add("weights", w);
}

void cmd_compare(const SeedRun& run) {
  auto ctx = context(run);
  run.log("running method comparison");
  const auto table = pipeline::run_comparison(ctx, run.req.config.methods, pipeline::methods_stream(run.seed));
  run.report(metric_report("comparison", table.rows));
  run.report(confusion_report("comparison_confusion", table.rows));
}

void cmd_sweep(const SeedRun& run) {
  auto ctx = context(run);
  run.log("running augmentation sweep");
  const auto points = pipeline::augmentation_sweep(ctx, run.req.config.sweep_counts, pipeline::methods_stream(run.seed));
  Report r{"sweep", pipeline::kSweepHeader, {}};
  for (const auto& p : points) {
    for (const auto* m : {&p.val, &p.test}) {
      r.rows.push_back(std::to_string(p.count) + "," + m->split + "," + metrics::format_percent(m->sensitivity) + "," +
                       metrics::format_percent(m->specificity) + "," + metrics::format_percent(m->auc) + "," +
                       metrics::format_percent(m->harmonic_mean));
    }
  }
  run.report(r);
}

void cmd_ablate_distribution(const SeedRun& run) {
  auto ctx = context(run);
  run.log("running distribution ablation");
  const auto rows = pipeline::distribution_ablation(ctx, run.req.config.distributions, run.req.config.diffupt,
                                                    RngStream(run.seed).split("distribution"));
  Report r{"distribution", pipeline::kDistributionHeader, {}};
  std::vector<std::pair<std::string, cls::EmbeddingStats>> emb;
  for (const auto& d : rows) {
    for (const auto* m : {&d.val, &d.test}) {
      r.rows.push_back(d.distribution + "," + fmt6(d.target_positive_fraction) + "," +
                       fmt6(d.achieved_positive_fraction) + "," + m->split + "," +
                       metrics::format_percent(m->sensitivity) + "," + metrics::format_percent(m->specificity) + "," +
                       metrics::format_percent(m->auc) + "," + metrics::format_percent(m->harmonic_mean));
    }
    emb.emplace_back(d.distribution, d.embedding);
  }
  run.report(r);
  Report e = embedding_report(emb);
  e.name = "distribution_embedding";
  run.report(e);
}

void cmd_ablate_filter(const SeedRun& run) {
  auto ctx = context(run);
  run.log("running filtering ablation");
  const auto a = pipeline::filtering_ablation(ctx, run.req.config.diffupt, RngStream(run.seed).split("filtering"));
  run.report(metric_report("filtering", {a.all_samples_val, a.all_samples_test, a.filtered_val, a.filtered_test}));
  Report p{"filter_purity", "set,size,purity,rejection_rate_negative,rejection_rate_positive", {}};
  auto add = [&](const char* name, const pipeline::GenerationResult& g, double purity) {
    p.rows.push_back(std::string(name) + "," + std::to_string(g.dataset.size()) + "," + fmt6(purity) + "," +
                     fmt6(g.per_class[0].filter.rejection_rate()) + "," + fmt6(g.per_class[1].filter.rejection_rate()));
  };
  add("all_samples", a.unfiltered, a.purity_unfiltered);
  add("filtered", a.filtered, a.purity_filtered);
  run.report(p);
}

void cmd_eval(const SeedRun& run) {
  auto ctx = context(run);
  const std::vector<metrics::MetricRow> rows{cls::evaluate_model(*ctx.baseline, ctx.splits.val, "baseline", "val"),
                                             cls::evaluate_model(*ctx.baseline, ctx.splits.test, "baseline", "test")};
  run.report(metric_report("baseline", rows));
  run.report(confusion_report("baseline_confusion", rows));
  run.log("measuring generation quality");
  Report g{"generation", metrics::kGenerationHeader, {}};
  const std::string kind = ctx.config.generator.latent ? "latent" : "pixel";
  for (const auto& s : {diffusion::SamplerChoice::ddpm(), diffusion::SamplerChoice::ddim(50),
                        ctx.config.diffupt.generation.sampler}) {
    g.rows.push_back(metrics::to_csv(pipeline::generation_metrics(ctx, 64, kind + "_" + s.label(), s)));
  }
  // Wall-clock timing makes this file non-reproducible by nature.
  run.measurement(g);
}

// ---- cross-seed aggregation ---------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> as_number(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void cmd_report(const RunRequest& req, Artifacts& artifacts) {
  // name -> header, rows across seeds
  std::map<std::string, std::pair<std::string, std::vector<std::vector<std::string>>>> files;
  for (std::uint64_t seed : req.seeds) {
    const fs::path dir = req.out / ("seed_" + std::to_string(seed)) / "reports";
    if (!fs::exists(dir)) throw WorkbenchError("no reports for seed " + std::to_string(seed) + " under " + req.out.string());
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".csv") paths.push_back(e.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      std::ifstream in(p);
      std::string header, line;
      std::getline(in, header);
      auto& entry = files[p.stem().string()];
      if (entry.first.empty()) entry.first = header;
      if (entry.first != header) throw WorkbenchError("header mismatch across seeds in " + p.filename().string());
      while (std::getline(in, line)) {
        if (!line.empty()) entry.second.push_back(split_csv(line));
      }
    }
  }
  const fs::path out = req.out / "summary";
  fs::create_directories(out);
  for (const auto& [name, entry] : files) {
    const auto cols = split_csv(entry.first);
    std::vector<bool> numeric(cols.size(), !entry.second.empty());
    for (const auto& row : entry.second) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        numeric[c] = numeric[c] && c < row.size() && (as_number(row[c]) || row[c] == "NA");
      }
    }
    std::string header;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!numeric[c]) header += cols[c] + ",";
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (numeric[c]) header += cols[c] + "_mean," + cols[c] + "_sd,";
    }
    header += "n";
    // Group by the non-numeric key columns in first-seen order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<const std::vector<std::string>*>> groups;
    for (const auto& row : entry.second) {
      std::string key;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (!numeric[c]) key += (c < row.size() ? row[c] : "") + ",";
      }
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(&row);
    }
    Report r{name + "_summary", header, {}};
    for (const auto& key : order) {
      const auto& g = groups[key];
      std::string line = key;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (!numeric[c]) continue;
        std::vector<double> v;
        for (const auto* row : g) {
          if (auto x = as_number((*row)[c])) v.push_back(*x);
        }
        if (v.empty()) {
          line += "NA,NA,";
          continue;
        }
        double mean = 0.0, var = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        line += fmt6(mean) + "," + fmt6(sd) + ",";
      }
      line += std::to_string(g.size());
      r.rows.push_back(std::move(line));
    }
    artifacts.add("reports", emit_report(r, out));
  }
}

using SeedCommand = void (*)(const SeedRun&);

const std::vector<std::pair<std::string, SeedCommand>>& table() {
  static const std::vector<std::pair<std::string, SeedCommand>> t{
      {"synth-data", cmd_synth_data},       {"train-ae", cmd_train_ae},
      {"train-diffusion", cmd_train_diffusion}, {"sample", cmd_sample},
      {"train-classifier", cmd_train_classifier}, {"diffupt", cmd_diffupt},
      {"compare", cmd_compare},             {"sweep-augment", cmd_sweep},
      {"ablate-distribution", cmd_ablate_distribution}, {"ablate-filter", cmd_ablate_filter},
      {"eval", cmd_eval},                   {"report", nullptr}};
  return t;
}

}  // namespace

// ---- public -------------------------------------------------------------------------

void write_atomic(const fs::path& path, const std::string& content, const std::function<void()>& before_rename) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw WorkbenchError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw WorkbenchError("write failed for " + tmp.string());
  }
  try {
    if (before_rename) before_rename();
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw WorkbenchError("cannot replace " + path.string());
  }
}

fs::path emit_report(const Report& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw WorkbenchError("cannot create report directory " + dir.string());
  std::string content = report.header + "\n";
  for (const auto& row : report.rows) content += row + "\n";
  const fs::path path = dir / (report.name + ".csv");
  write_atomic(path, content);
  return path;
}

std::string RunManifest::to_json() const {
  json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["config"] = config_text;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["artifacts"] = artifacts;
  j["timestamps"] = {{"started", started_utc}, {"finished", finished_utc}};
  j["version"] = version;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.run_id = j.at("run_id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::vector<std::string>>>();
    m.started_utc = j.at("timestamps").at("started").get<std::string>();
    m.finished_utc = j.at("timestamps").at("finished").get<std::string>();
    m.version = j.value("version", "");
  } catch (const json::exception& e) {
    throw WorkbenchError(std::string("malformed manifest: ") + e.what());
  }
  if (config::content_hash(m.config_text) != m.config_hash) {
    throw WorkbenchError("manifest config does not match its content hash");
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WorkbenchError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : table()) v.push_back(name);
    return v;
  }();
  return names;
}

bool is_command(const std::string& name) {
  const auto& c = commands();
  return std::find(c.begin(), c.end(), name) != c.end();
}

RunManifest run(const RunRequest& request) {
  if (!is_command(request.command)) throw WorkbenchError("unknown command '" + request.command + "'");
  RunRequest req = request;
  const fs::path previous = req.out / "manifest.json";
  if (req.seeds.empty() && req.command == "report" && fs::exists(previous)) {
    // Aggregate the seeds of the run that produced this directory.
    req.seeds = RunManifest::load(previous).seeds;
  }
  if (req.seeds.empty()) req.seeds = req.config.seeds;
  if (req.seeds.empty()) throw WorkbenchError("no seeds to run");
  req.config.validate();

  RunManifest m;
  m.command = req.command;
  m.config_text = config::serialize_config(req.config);
  // Run exactly what the manifest records: settings the file format cannot
  // express take the values a rerun would derive from the text.
  req.config = config::parse_config(m.config_text);
  m.config_hash = config::content_hash(m.config_text);
  m.seeds = req.seeds;
  m.version = kVersion;
  std::string id_source = m.command + "\n" + m.config_hash;
  for (auto s : m.seeds) id_source += "\n" + std::to_string(s);
  m.run_id = config::content_hash(id_source).substr(0, 12);
  m.started_utc = utc_now();

  std::error_code ec;
  fs::create_directories(req.out, ec);
  if (ec || !fs::is_directory(req.out)) throw WorkbenchError("cannot create output directory " + req.out.string());
  Artifacts artifacts(req.out);
  if (req.command == "report") {
    if (req.log) req.log("aggregating " + std::to_string(req.seeds.size()) + " seed(s)");
    cmd_report(req, artifacts);
  } else {
    SeedCommand fn = nullptr;
    for (const auto& [name, f] : table()) {
      if (name == req.command) fn = f;
    }
    for (std::uint64_t seed : req.seeds) {
      SeedRun sr{req, seed, req.out / ("seed_" + std::to_string(seed)), artifacts};
      fs::create_directories(sr.dir);
      fn(sr);
    }
  }
  m.artifacts = artifacts.take();
  m.finished_utc = utc_now();
  // A report must not replace the manifest of the run it summarizes.
  write_atomic(req.command == "report" ? req.out / "summary" / "manifest.json" : previous, m.to_json());
  return m;
}

RunRequest request_from_manifest(const RunManifest& manifest, const fs::path& out) {
  RunRequest r;
  r.command = manifest.command;
  r.config = config::parse_config(manifest.config_text);
  r.seeds = manifest.seeds;
  r.out = out;
  return r;
}

}  // namespace diffupt::workbench
