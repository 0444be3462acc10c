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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "diffupt/config.hpp"
#include "diffupt/workbench.hpp"

using namespace diffupt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t error_line(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const config::ConfigError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("empty configuration is the default configuration") {
  const auto c = config::parse_config("");
  CHECK(config::serialize_config(c) == config::serialize_config(pipeline::WorkbenchConfig{}));
  CHECK_NOTHROW(c.validate());
  CHECK(config::parse_config("# only a comment\n\n").seeds == c.seeds);
}

TEST_CASE("serialize then parse reproduces the configuration") {
  const std::string text =
      "[dataset]\nnoise_sd = 0.031\ncup_ratio_minority_mean = 0.62\n"
      "[diffusion]\nsampler = ddpm\nguidance = 1.5\n"
      "[classifier]\nwidths = 4, 8\nbaseline_loss = weighted_bce\n"
      "[pipeline]\nsweep_counts = 0, 5, 10\nmethods = normal, gen_augment(7)\nfilter = false\n"
      "[run]\nseeds = 3, 9\n";
  const auto a = config::parse_config(text);
  const std::string once = config::serialize_config(a);
  const auto b = config::parse_config(once);
  CHECK(config::serialize_config(b) == once);
  CHECK(a.dataset.synth.noise_sd == 0.031);
  CHECK(a.classifier.widths == std::vector<std::size_t>{4, 8});
  CHECK(a.seeds == std::vector<std::uint64_t>{3, 9});
  CHECK_FALSE(a.diffupt.generation.filter.enabled);
  CHECK(a.diffupt.generation.sampler.kind == diffusion::SamplerChoice::Kind::kDdpm);
  CHECK(a.methods.back() == "gen_augment(7)");
}

TEST_CASE("every schema key appears in the serialized form") {
  const std::string text = config::serialize_config(pipeline::WorkbenchConfig{});
  for (const auto& k : config::schema()) CHECK(text.find("\n" + k.key + " = ") != std::string::npos);
}

TEST_CASE("errors name the offending line") {
  CHECK(error_line("[dataset]\nnoise_sd = 0.02\nbogus = 1\n") == 3);
  CHECK(error_line("[nowhere]\n") == 1);
  CHECK(error_line("[run]\nseeds = 1\nseeds = 2\n") == 3);
  CHECK(error_line("[dataset]\nimage_size = sixteen\n") == 2);
  CHECK(error_line("noise_sd = 0.02\n") == 1);
  CHECK(error_line("[pipeline]\npretrain_lr = 1e-3\nfinetune_lr = 1e-3\n") == 3);
  CHECK(error_line("[pipeline]\nmethods = normal, teleport\n") == 2);
  try {
    config::parse_config("[dataset]\n\nbogus = 1\n");
  } catch (const config::ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
}

TEST_CASE("content hash is the git blob hash") {
  // git hash-object of "hello\n"
  CHECK(config::content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(config::content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("atomic write leaves the old file when interrupted") {
  TempDir dir("diffupt_atomic_test");
  const fs::path target = dir.path / "report.csv";
  workbench::write_atomic(target, "old\n");
  CHECK_THROWS(workbench::write_atomic(target, "new\n", [] { throw std::runtime_error("crash"); }));
  CHECK(slurp(target) == "old\n");
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) entries += e.is_regular_file();
  CHECK(entries == 1);  // no temporary left behind
  workbench::write_atomic(target, "new\n");
  CHECK(slurp(target) == "new\n");
}

TEST_CASE("empty report is header only and columns keep their order") {
  TempDir dir("diffupt_report_test");
  const auto p = workbench::emit_report({"comparison", metrics::kMetricHeader, {}}, dir.path);
  CHECK(p.filename() == "comparison.csv");
  CHECK(slurp(p) == std::string(metrics::kMetricHeader) + "\n");
  CHECK(std::string(metrics::kMetricHeader) == "method,split,sens,spec,auc,hm");
  CHECK(std::string(metrics::kGenerationHeader) == "model,nfe,fid_analog,kid_analog,is_analog,sampling_time_s");
}

TEST_CASE("manifest round trip and tamper check") {
  workbench::RunManifest m;
  m.run_id = "abc";
  m.command = "compare";
  m.config_text = config::serialize_config(pipeline::WorkbenchConfig{});
  m.config_hash = config::content_hash(m.config_text);
  m.seeds = {1, 2};
  m.artifacts["reports"] = {"seed_1/reports/comparison.csv"};
  m.started_utc = m.finished_utc = "2026-01-01T00:00:00Z";
  m.version = "0.1.0";
  const auto back = workbench::RunManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  auto tampered = m;
  tampered.config_text += "\n";
  CHECK_THROWS_AS(workbench::RunManifest::from_json(tampered.to_json()), workbench::WorkbenchError);
  CHECK_THROWS_AS(workbench::RunManifest::from_json("{"), workbench::WorkbenchError);
}

TEST_CASE("synth-data run, manifest rerun and cross-seed report") {
  TempDir dir("diffupt_run_test");
  workbench::RunRequest req;
  req.command = "synth-data";
  req.config.dataset.pool_negative = 200;
  req.config.dataset.pool_positive = 40;
  req.seeds = {1, 2};
  req.out = dir.path / "a";
  const auto m = workbench::run(req);
  CHECK(fs::exists(req.out / "manifest.json"));
  CHECK(fs::exists(req.out / "seed_1" / "reports" / "dataset.csv"));
  CHECK(fs::exists(req.out / "seed_2" / "data"));

  const auto again = workbench::request_from_manifest(workbench::RunManifest::load(req.out / "manifest.json"),
                                                      dir.path / "b");
  workbench::run(again);
  for (const auto& rel : m.artifacts.at("reports")) CHECK(slurp(req.out / rel) == slurp(dir.path / "b" / rel));

  workbench::RunRequest rep = req;
  rep.command = "report";
  workbench::run(rep);
  const auto summary = slurp(req.out / "summary" / "dataset_summary.csv");
  CHECK(summary.find("_mean") != std::string::npos);
  CHECK(summary.find(",n\n") != std::string::npos);

  workbench::RunRequest bad = req;
  bad.command = "teleport";
  CHECK_THROWS_AS(workbench::run(bad), workbench::WorkbenchError);
}
