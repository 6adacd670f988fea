// Copyright 2026 The codi-iqa Authors. All rights reserved.
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
#include <cstdint>

namespace codi::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

/// C[m x n] (+)= op(A) * op(B), all row-major and densely packed.
/// op(A) is m x k; A is stored k x m when trans_a.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  MutMap<T> C(c, m, n);
  if (!accumulate) C.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  if (!trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, m, k) * ConstMap<T>(b, k, n);
  } else if (trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, k, m).transpose() * ConstMap<T>(b, k, n);
  } else if (!trans_a && trans_b) {
    C.noalias() += ConstMap<T>(a, m, k) * ConstMap<T>(b, n, k).transpose();
  } else {
    C.noalias() += ConstMap<T>(a, k, m).transpose() * ConstMap<T>(b, n, k).transpose();
  }
}

}  // namespace codi::detail
