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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diffupt/rng.hpp"
#include "diffupt/tensor.hpp"

namespace diffupt::num {

/// A trainable tensor plus its Adam moment estimates.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
};

/// Named parameters of one model. Copying deep-copies values and moments, so
/// models holding a ParameterSet behave as values.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  /// Registers a parameter and returns its index.
  std::size_t add(std::string name, Tensor value);
  /// He-uniform init: U(-gain*sqrt(3/fan_in), +gain*sqrt(3/fan_in)).
  std::size_t add_uniform(std::string name, Shape shape, std::size_t fan_in, RngStream& rng,
                          double gain = std::sqrt(2.0));
  std::size_t add_zeros(std::string name, Shape shape);

  Tensor& operator[](std::size_t i) { return params_[i].value; }
  const Tensor& operator[](std::size_t i) const { return params_[i].value; }
  Parameter& at(std::size_t i) { return params_[i]; }
  const Parameter& at(std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }

  const Parameter* find(const std::string& name) const;
  void zero_grad();
  void set_requires_grad(bool on);
  /// Flat copy of every parameter value, in registration order.
  std::vector<double> flatten() const;
  /// True when names, shapes and values are bitwise identical.
  bool bitwise_equal(const ParameterSet& other) const;

 private:
  std::vector<Parameter> params_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over `params`, then zeroes their grads.
/// Every parameter must carry a gradient.
void adam_step(std::span<Parameter* const> params, const AdamOptions& opts);
void adam_step(ParameterSet& params, const AdamOptions& opts);

/// Largest absolute gradient entry across `params`.
double max_abs_grad(const ParameterSet& params);

// Weight files: "DPTW" magic, u32 version, u64 count; then per parameter
// u32 name length, name bytes, u32 rank, u64 dims, f64 values. All
// little-endian.
inline constexpr std::uint32_t kWeightsVersion = 1;

void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
/// Loads values into an existing set; names and shapes must match exactly.
void load_parameters(ParameterSet& params, const std::filesystem::path& path);
/// Reads a weight file without a template set.
ParameterSet read_parameters(const std::filesystem::path& path);

}  // namespace diffupt::num
