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

#include <Eigen/Core>
#include <cstddef>

// Row-major kernels, C += op(A) * op(B) (or C = ... when `assign`), backed by Eigen's
// blocked product. Single-threaded Eigen picks its blocking from the operand
// sizes alone, so results are bitwise reproducible for a given build.
namespace diffupt::num {

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }
}  // namespace detail

// A (m x k), B (k x n), C (m x n)
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool assign = false) {
  using namespace detail;
  if (m == 0 || n == 0) return;
  auto out = MMap(c, ix(m), ix(n));
  if (k == 0) {
    if (assign) out.setZero();
    return;
  }
  if (assign) {
    out.noalias() = CMap(a, ix(m), ix(k)) * CMap(b, ix(k), ix(n));
  } else {
    out.noalias() += CMap(a, ix(m), ix(k)) * CMap(b, ix(k), ix(n));
  }
}

// A (m x k), B (n x k), C (m x n)
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool assign = false) {
  using namespace detail;
  if (m == 0 || n == 0) return;
  auto out = MMap(c, ix(m), ix(n));
  if (k == 0) {
    if (assign) out.setZero();
    return;
  }
  if (assign) {
    out.noalias() = CMap(a, ix(m), ix(k)) * CMap(b, ix(n), ix(k)).transpose();
  } else {
    out.noalias() += CMap(a, ix(m), ix(k)) * CMap(b, ix(n), ix(k)).transpose();
  }
}

// A (k x m), B (k x n), C (m x n)
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool assign = false) {
  using namespace detail;
  if (m == 0 || n == 0) return;
  auto out = MMap(c, ix(m), ix(n));
  if (k == 0) {
    if (assign) out.setZero();
    return;
  }
  if (assign) {
    out.noalias() = CMap(a, ix(k), ix(m)).transpose() * CMap(b, ix(k), ix(n));
  } else {
    out.noalias() += CMap(a, ix(k), ix(m)).transpose() * CMap(b, ix(k), ix(n));
  }
}

}  // namespace diffupt::num
