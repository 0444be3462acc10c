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

#include "diffupt/rng.hpp"

#include <cmath>
#include <numbers>

namespace diffupt::num {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ 0x6a09e667f3bcc909ULL);
  return mix64(key ^ mix64(counter_++));
}

double RngStream::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::below(std::size_t n) {
  if (n <= 1) {
    ++counter_;
    return 0;
  }
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

void RngStream::fill_normal(std::vector<double>& out) {
  for (double& v : out) v = normal();
}

RngStream RngStream::split(std::uint64_t index) const {
  return RngStream(mix64(mix64(seed_) + 0x5851f42d4c957f2dULL * (index + 1)), 0);
}

RngStream RngStream::split(std::string_view label) const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return split(h);
}

}  // namespace diffupt::num
