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

// diffupt: command-line front end of the workbench. Talks to the library
// only through the C interface.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffupt/diffupt.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string manifest;
  bool quiet = false;
};

const char* describe(const std::string& cmd) {
  if (cmd == "synth-data") return "Generate the synthetic disc-image splits and write them as datasets";
  if (cmd == "train-ae") return "Train the latent autoencoder and report reconstruction quality";
  if (cmd == "train-diffusion") return "Train the autoencoder and the class-conditional denoiser";
  if (cmd == "sample") return "Train the generator and dump class-conditional sample grids";
  if (cmd == "train-classifier") return "Train the baseline classifier used for filtering";
  if (cmd == "diffupt") return "Pretrain on filtered balanced synthetic data, finetune on real data";
  if (cmd == "compare") return "Compare imbalance-handling methods on shared splits";
  if (cmd == "sweep-augment") return "Sweep the number of synthetic minority samples added to training";
  if (cmd == "ablate-distribution") return "Pretrain-only models over synthetic class distributions";
  if (cmd == "ablate-filter") return "DiffuPT with all generated samples versus filtered samples";
  if (cmd == "eval") return "Baseline metrics and generation-quality measurements";
  if (cmd == "report") return "Aggregate per-seed reports of an output directory across seeds";
  return "";
}

void log_line(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

int fail(dpt_status s) {
  std::fprintf(stderr, "error (%s): %s\n", dpt_status_name(s), dpt_last_error());
  return kExitFailure;
}

int execute(const std::string& command, const Options& opt) {
  const std::string out = opt.out.empty() ? "runs/" + command : opt.out;
  dpt_log_fn log = opt.quiet ? nullptr : log_line;
  if (!opt.manifest.empty()) {
    const dpt_status s = dpt_rerun_manifest(opt.manifest.c_str(), out.c_str(), log, nullptr);
    return s == DPT_OK ? 0 : fail(s);
  }
  dpt_config* cfg = nullptr;
  dpt_status s = opt.config.empty() ? dpt_config_default(&cfg) : dpt_config_load(opt.config.c_str(), &cfg);
  if (s != DPT_OK) return fail(s);
  s = dpt_run(command.c_str(), cfg, opt.seeds.data(), opt.seeds.size(), out.c_str(), log, nullptr);
  dpt_config_free(cfg);
  if (s != DPT_OK) return fail(s);
  if (!opt.quiet) std::fprintf(stderr, "wrote %s/manifest.json\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffuPT workbench: diffusion-based pretraining for imbalanced binary classification"};
  app.name("diffupt");
  app.require_subcommand(1);
  app.set_version_flag("--version", dpt_version());

  Options opt;
  for (std::size_t i = 0; i < dpt_command_count(); ++i) {
    const std::string name = dpt_command_name(i);
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", opt.config, "Experiment configuration file (defaults when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seeds, "Seed to run; repeatable (default: the config's seed list)");
    sub->add_option("--out", opt.out, "Run directory (default: runs/<command>)");
    sub->add_option("--manifest", opt.manifest, "Repeat the run recorded in this manifest")
        ->check(CLI::ExistingFile)
        ->excludes("--config")
        ->excludes("--seed");
    sub->add_flag("--quiet", opt.quiet, "Suppress progress messages");
  }

  if (argc <= 1) {
    std::fprintf(stderr, "%s", app.help().c_str());
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help or --version
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  return execute(app.get_subcommands().front()->get_name(), opt);
}
