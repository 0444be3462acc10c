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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "diffupt/data.hpp"

namespace diffupt::data {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "dataset files are written in host order; add byte swapping for big-endian hosts");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DatasetError("truncated dataset file");
  return v;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write dataset file: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  for (std::size_t v : {ds.size(), ds.channels(), ds.height(), ds.width()}) {
    put<std::uint64_t>(os, v);
  }
  os.write(reinterpret_cast<const char*>(ds.labels().data()),
           static_cast<std::streamsize>(ds.size()));
  for (auto p : ds.provenance()) put<std::uint8_t>(os, static_cast<std::uint8_t>(p));
  os.write(reinterpret_cast<const char*>(ds.images().data().data()),
           static_cast<std::streamsize>(ds.images().size() * sizeof(double)));
  if (!os) throw DatasetError("failed writing dataset file: " + path.string());
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DatasetError("not a dataset file (bad magic): " + path.string());
  }
  if (get<std::uint32_t>(is) != kVersion) throw DatasetError("unsupported dataset file version");
  const auto n = get<std::uint64_t>(is);
  const auto c = get<std::uint64_t>(is);
  const auto h = get<std::uint64_t>(is);
  const auto w = get<std::uint64_t>(is);
  std::vector<std::uint8_t> labels(n);
  if (!is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n))) {
    throw DatasetError("truncated dataset file");
  }
  std::vector<Provenance> prov(n);
  for (auto& p : prov) {
    const auto b = get<std::uint8_t>(is);
    if (b > 1) throw DatasetError("bad provenance flag in dataset file");
    p = static_cast<Provenance>(b);
  }
  std::vector<double> values(n * c * h * w);
  if (!is.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)))) {
    throw DatasetError("truncated dataset file");
  }
  return LabeledDataset(Tensor(num::Shape{n, c, h, w}, std::move(values)), std::move(labels),
                        std::move(prov));
}

void write_pgm(std::span<const double> image, std::size_t height, std::size_t width,
               const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write image: " + path.string());
  os << "P5\n" << width << ' ' << height << "\n255\n";
  for (std::size_t i = 0; i < height * width; ++i) os.put(static_cast<char>(to_byte(image[i])));
}

void write_pgm_grid(const Tensor& images, std::size_t count, std::size_t columns,
                    const std::filesystem::path& path) {
  if (images.rank() != 4) throw DatasetError("write_pgm_grid expects (N, C, H, W)");
  count = std::min(count, images.dim(0));
  columns = std::max<std::size_t>(1, std::min(columns, std::max<std::size_t>(count, 1)));
  const std::size_t rows = (count + columns - 1) / columns;
  const std::size_t h = images.dim(2), w = images.dim(3);
  const std::size_t stride = images.size() / std::max<std::size_t>(images.dim(0), 1);
  const std::size_t gh = rows * (h + 1) + 1, gw = columns * (w + 1) + 1;
  std::vector<double> grid(gh * gw, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t r = k / columns, c = k % columns;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        grid[(r * (h + 1) + 1 + y) * gw + c * (w + 1) + 1 + x] = images.data()[k * stride + y * w + x];
      }
    }
  }
  write_pgm(grid, gh, gw, path);
}

}  // namespace diffupt::data
