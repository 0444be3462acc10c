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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/pipeline.hpp"

namespace diffupt::workbench {

namespace fs = std::filesystem;

class WorkbenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One comma-separated report: a fixed header line and preformatted rows.
struct Report {
  std::string name;  // file stem
  std::string header;
  std::vector<std::string> rows;
};

/// Writes `content` to a sibling temporary file and renames it over `path`,
/// so readers see either the old or the new file. `before_rename` runs
/// between the two steps (a test seam for interrupted writes).
void write_atomic(const fs::path& path, const std::string& content,
                  const std::function<void()>& before_rename = {});

/// Writes dir/<name>.csv (header-only for an empty report) and returns its path.
fs::path emit_report(const Report& report, const fs::path& dir);

/// Run layout under the output directory:
///   manifest.json
///   seed_<n>/reports/*.csv       deterministic metric files
///   seed_<n>/measurements/*.csv  wall-clock measurements
///   seed_<n>/samples/*.pgm       image grids
///   seed_<n>/weights/, data/     serialized models and datasets
///   summary/*.csv                cross-seed aggregates (report command)
///   summary/manifest.json        manifest of the report run itself
struct RunManifest {
  std::string run_id;
  std::string command;
  std::string config_text;  // fully defaulted, canonical
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<std::string>> artifacts;  // kind -> paths relative to the run dir
  std::string started_utc;
  std::string finished_utc;
  std::string version;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  static RunManifest load(const fs::path& path);
};

struct RunRequest {
  std::string command;
  pipeline::WorkbenchConfig config;
  std::vector<std::uint64_t> seeds;  // empty: the config's seed list
  fs::path out;
  /// Progress messages; may be empty.
  std::function<void(const std::string&)> log;
};

/// Subcommands in the order they are documented.
const std::vector<std::string>& commands();
bool is_command(const std::string& name);

/// Runs one subcommand for every seed and writes the manifest last. The
/// configuration is first passed through its text form, so the run matches
/// what the manifest records.
RunManifest run(const RunRequest& request);

/// Request that reproduces a manifest's run into `out`.
RunRequest request_from_manifest(const RunManifest& manifest, const fs::path& out);

}  // namespace diffupt::workbench
