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

#include "diffupt/diffupt.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "diffupt/config.hpp"
#include "diffupt/workbench.hpp"

struct dpt_config {
  diffupt::pipeline::WorkbenchConfig cfg;
};

struct dpt_dataset {
  diffupt::data::LabeledDataset ds;
};

namespace {

using namespace diffupt;

thread_local std::string g_error;
thread_local std::size_t g_error_line = 0;

dpt_status fail(dpt_status s, std::string msg, std::size_t line = 0) {
  g_error = std::move(msg);
  g_error_line = line;
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
dpt_status guarded(F&& body) {
  g_error.clear();
  g_error_line = 0;
  try {
    body();
    return DPT_OK;
  } catch (const config::ConfigError& e) {
    return fail(DPT_ERR_CONFIG, e.what(), e.line());
  } catch (const pipeline::GenerationShortfall& e) {
    return fail(DPT_ERR_GENERATION, e.what());
  } catch (const num::NumericError& e) {
    return fail(DPT_ERR_NUMERIC, e.what());
  } catch (const diffusion::DiffusionError& e) {
    return fail(DPT_ERR_NUMERIC, e.what());
  } catch (const cls::ClassifierError& e) {
    return fail(DPT_ERR_NUMERIC, e.what());
  } catch (const latent::AutoencoderError& e) {
    return fail(DPT_ERR_NUMERIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DPT_ERR_IO, e.what());
  } catch (const workbench::WorkbenchError& e) {
    return fail(DPT_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(DPT_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(DPT_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(DPT_ERR_RUNTIME, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::function<void(const std::string&)> logger(dpt_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const std::string& m) { log(m.c_str(), user); };
}

}  // namespace

extern "C" {

const char* dpt_version(void) { return "0.1.0"; }

const char* dpt_status_name(dpt_status status) {
  switch (status) {
    case DPT_OK: return "ok";
    case DPT_ERR_ARGUMENT: return "invalid argument";
    case DPT_ERR_CONFIG: return "configuration error";
    case DPT_ERR_IO: return "i/o error";
    case DPT_ERR_NUMERIC: return "numeric error";
    case DPT_ERR_GENERATION: return "generation shortfall";
    case DPT_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

const char* dpt_last_error(void) { return g_error.c_str(); }
size_t dpt_last_error_line(void) { return g_error_line; }
void dpt_string_free(char* s) { delete[] s; }

dpt_status dpt_config_default(dpt_config** out) {
  if (out == nullptr) return fail(DPT_ERR_ARGUMENT, "null output pointer");
  return guarded([&] { *out = new dpt_config{}; });
}

dpt_status dpt_config_load(const char* path, dpt_config** out) {
  if (path == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  if (!std::filesystem::exists(path)) return fail(DPT_ERR_IO, std::string("config file not found: ") + path);
  return guarded([&] { *out = new dpt_config{config::load_config(path)}; });
}

dpt_status dpt_config_parse(const char* text, dpt_config** out) {
  if (text == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  return guarded([&] { *out = new dpt_config{config::parse_config(text)}; });
}

dpt_status dpt_config_serialize(const dpt_config* cfg, char** out) {
  if (cfg == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  return guarded([&] { *out = dup_string(config::serialize_config(cfg->cfg)); });
}

dpt_status dpt_config_hash(const dpt_config* cfg, char out[41]) {
  if (cfg == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const std::string h = config::content_hash(config::serialize_config(cfg->cfg));
    std::memcpy(out, h.c_str(), 41);
  });
}

size_t dpt_config_seed_count(const dpt_config* cfg) { return cfg ? cfg->cfg.seeds.size() : 0; }

dpt_status dpt_config_seeds(const dpt_config* cfg, uint64_t* out, size_t capacity) {
  if (cfg == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  if (capacity < cfg->cfg.seeds.size()) return fail(DPT_ERR_ARGUMENT, "seed buffer too small");
  std::copy(cfg->cfg.seeds.begin(), cfg->cfg.seeds.end(), out);
  return DPT_OK;
}

void dpt_config_free(dpt_config* cfg) { delete cfg; }

size_t dpt_command_count(void) { return workbench::commands().size(); }

const char* dpt_command_name(size_t i) {
  const auto& c = workbench::commands();
  return i < c.size() ? c[i].c_str() : nullptr;
}

int dpt_is_command(const char* name) { return name != nullptr && workbench::is_command(name) ? 1 : 0; }

dpt_status dpt_run(const char* command, const dpt_config* cfg, const uint64_t* seeds, size_t n_seeds,
                   const char* out_dir, dpt_log_fn log, void* user) {
  if (command == nullptr || cfg == nullptr || out_dir == nullptr || (n_seeds > 0 && seeds == nullptr)) {
    return fail(DPT_ERR_ARGUMENT, "null argument");
  }
  if (!workbench::is_command(command)) return fail(DPT_ERR_ARGUMENT, std::string("unknown command: ") + command);
  return guarded([&] {
    workbench::RunRequest req;
    req.command = command;
    req.config = cfg->cfg;
    req.seeds.assign(seeds, seeds + n_seeds);
    req.out = out_dir;
    req.log = logger(log, user);
    workbench::run(req);
  });
}

dpt_status dpt_rerun_manifest(const char* manifest_path, const char* out_dir, dpt_log_fn log, void* user) {
  if (manifest_path == nullptr || out_dir == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    auto req = workbench::request_from_manifest(workbench::RunManifest::load(manifest_path), out_dir);
    req.log = logger(log, user);
    workbench::run(req);
  });
}

dpt_status dpt_dataset_synth(const dpt_config* cfg, uint64_t seed, const char* split, dpt_dataset** out) {
  if (cfg == nullptr || split == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  const std::string s = split;
  if (s != "train" && s != "val" && s != "test") return fail(DPT_ERR_ARGUMENT, "split must be train, val or test");
  return guarded([&] {
    auto splits = pipeline::make_splits(cfg->cfg.dataset, seed);
    auto& pick = s == "train" ? splits.train : s == "val" ? splits.val : splits.test;
    *out = new dpt_dataset{std::move(pick)};
  });
}

dpt_status dpt_dataset_load(const char* path, dpt_dataset** out) {
  if (path == nullptr || out == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  if (!std::filesystem::exists(path)) return fail(DPT_ERR_IO, std::string("dataset file not found: ") + path);
  return guarded([&] { *out = new dpt_dataset{data::read_dataset(path)}; });
}

dpt_status dpt_dataset_save(const dpt_dataset* ds, const char* path) {
  if (ds == nullptr || path == nullptr) return fail(DPT_ERR_ARGUMENT, "null argument");
  return guarded([&] { data::write_dataset(ds->ds, path); });
}

dpt_status dpt_dataset_shape(const dpt_dataset* ds, size_t* n, size_t* channels, size_t* height, size_t* width) {
  if (ds == nullptr) return fail(DPT_ERR_ARGUMENT, "null dataset");
  if (n) *n = ds->ds.size();
  if (channels) *channels = ds->ds.channels();
  if (height) *height = ds->ds.height();
  if (width) *width = ds->ds.width();
  return DPT_OK;
}

dpt_status dpt_dataset_labels(const dpt_dataset* ds, uint8_t* out, size_t capacity) {
  if (ds == nullptr || (out == nullptr && ds->ds.size() > 0)) return fail(DPT_ERR_ARGUMENT, "null argument");
  if (capacity < ds->ds.size()) return fail(DPT_ERR_ARGUMENT, "label buffer too small");
  std::copy(ds->ds.labels().begin(), ds->ds.labels().end(), out);
  return DPT_OK;
}

dpt_status dpt_dataset_pixels(const dpt_dataset* ds, double* out, size_t capacity) {
  if (ds == nullptr) return fail(DPT_ERR_ARGUMENT, "null dataset");
  const auto px = ds->ds.images().data();
  if (out == nullptr && !px.empty()) return fail(DPT_ERR_ARGUMENT, "null output buffer");
  if (capacity < px.size()) return fail(DPT_ERR_ARGUMENT, "pixel buffer too small");
  std::copy(px.begin(), px.end(), out);
  return DPT_OK;
}

void dpt_dataset_free(dpt_dataset* ds) { delete ds; }

}  // extern "C"
