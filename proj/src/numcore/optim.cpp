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

#include "diffupt/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace diffupt::num {

ParameterSet::ParameterSet(const ParameterSet& other) { *this = other; }

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this == &other) return *this;
  params_.clear();
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    Parameter copy = p;
    copy.value = p.value.clone();
    params_.push_back(std::move(copy));
  }
  return *this;
}

std::size_t ParameterSet::add(std::string name, Tensor value) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  value.set_requires_grad(true);
  Parameter p;
  p.name = std::move(name);
  p.first_moment.assign(value.size(), 0.0);
  p.second_moment.assign(value.size(), 0.0);
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::add_uniform(std::string name, Shape shape, std::size_t fan_in,
                                      RngStream& rng, double gain) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(std::move(name), Tensor(std::move(shape), std::move(v)));
}

std::size_t ParameterSet::add_zeros(std::string name, Shape shape) {
  return add(std::move(name), Tensor(std::move(shape), 0.0));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

bool ParameterSet::bitwise_equal(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
    if (std::memcmp(a.value.data().data(), b.value.data().data(),
                    a.value.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

void adam_step(std::span<Parameter* const> params, const AdamOptions& opts) {
  for (Parameter* p : params) {
    if (!p->value.has_grad()) {
      throw NumericError("adam_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    auto values = p->value.data();
    auto grad = p->value.mutable_grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      p->first_moment[i] = opts.beta1 * p->first_moment[i] + (1.0 - opts.beta1) * g;
      p->second_moment[i] = opts.beta2 * p->second_moment[i] + (1.0 - opts.beta2) * g * g;
      const double m_hat = p->first_moment[i] / c1;
      const double v_hat = p->second_moment[i] / c2;
      values[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
      if (!std::isfinite(values[i])) {
        throw NumericError("adam_step: parameter '" + p->name + "' diverged");
      }
      grad[i] = 0.0;
    }
  }
}

void adam_step(ParameterSet& params, const AdamOptions& opts) {
  std::vector<Parameter*> ptrs;
  for (auto& p : params.entries()) ptrs.push_back(&p);
  adam_step(ptrs, opts);
}

double max_abs_grad(const ParameterSet& params) {
  double m = 0.0;
  for (const auto& p : params.entries()) {
    for (double g : p.value.grad()) m = std::max(m, std::abs(g));
  }
  return m;
}

// ---- serialization ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', 'W'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("truncated weight file: " + path.string());
  }
  return to_little(v);
}

}  // namespace

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write weight file: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kWeightsVersion);
  put<std::uint64_t>(os, params.size());
  for (const auto& p : params.entries()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(os, d);
    for (double v : p.value.data()) put<double>(os, v);
  }
  if (!os) throw std::runtime_error("failed writing weight file: " + path.string());
}

ParameterSet read_parameters(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open weight file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a weight file (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kWeightsVersion) {
    throw std::runtime_error("unsupported weight file version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(is, path);
  ParameterSet out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated weight file");
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    std::vector<double> values(numel(shape));
    for (double& v : values) v = get<double>(is, path);
    out.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void load_parameters(ParameterSet& params, const std::filesystem::path& path) {
  ParameterSet loaded = read_parameters(path);
  if (loaded.size() != params.size()) {
    throw std::runtime_error("weight file " + path.string() + " holds " +
                             std::to_string(loaded.size()) + " parameters, model expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = loaded.at(i);
    auto& dst = params.at(i);
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw std::runtime_error("weight file parameter '" + src.name + "' " +
                               to_string(src.value.shape()) + " does not match '" + dst.name +
                               "' " + to_string(dst.value.shape()));
    }
    std::copy(src.value.data().begin(), src.value.data().end(), dst.value.data().begin());
  }
}

}  // namespace diffupt::num
