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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffupt/pipeline.hpp"

namespace diffupt::config {

/// Parse or validation failure. line() is 0 when no single line is at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Sectioned key-value text:
///
///   # comment
///   [section]
///   key = value
///
/// Sections: dataset, autoencoder, diffusion, classifier, pipeline, run.
/// Lists are comma-separated. Unknown sections or keys, duplicates and
/// malformed values are rejected with the offending key and line. Keys that
/// are absent keep their defaults.
pipeline::WorkbenchConfig parse_config(const std::string& text);
pipeline::WorkbenchConfig load_config(const std::filesystem::path& path);

/// Every key in canonical order, doubles in shortest round-trip form, so
/// parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const pipeline::WorkbenchConfig& cfg);

/// Git-style content hash: hex SHA-1 of "blob <size>\0<text>".
std::string content_hash(const std::string& text);

struct KeyInfo {
  std::string section;
  std::string key;
  std::string default_value;
};
/// The documented schema with default values.
std::vector<KeyInfo> schema();

}  // namespace diffupt::config
