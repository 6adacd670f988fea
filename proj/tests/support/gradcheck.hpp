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

// Central finite-difference oracle for scalar functions of Var<double> leaves.
// Independent of the backward closures it checks: it only ever calls the
// forward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "codi/autograd/variable.hpp"

namespace codi::testing {

struct GradCheckResult {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

inline std::vector<GradCheckResult> gradcheck(const std::function<Var<double>()>& f,
                                              std::vector<std::pair<std::string, Var<double>>> leaves,
                                              double step = 1e-4, int64_t max_entries = 0) {
  for (auto& [_, v] : leaves) v.zero_grad();
  Var<double> loss = f();
  backward(loss);
  std::vector<GradCheckResult> out;
  for (auto& [name, v] : leaves) {
    Tensor<double> analytic = v.has_grad() ? v.grad() : Tensor<double>(v.shape());
    NoGradGuard ng;
    double diff2 = 0, a2 = 0, n2 = 0;
    // With max_entries set, probe an evenly strided subset of each leaf.
    const int64_t stride = max_entries > 0 ? std::max<int64_t>(1, v.numel() / max_entries) : 1;
    for (int64_t i = 0; i < v.numel(); i += stride) {
      double& x = v.mutable_value()[i];
      const double orig = x;
      x = orig + step;
      const double fp = f().value()[0];
      x = orig - step;
      const double fm = f().value()[0];
      x = orig;
      const double num = (fp - fm) / (2 * step);
      diff2 += (num - analytic[i]) * (num - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += num * num;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    out.push_back({name, std::sqrt(diff2) / denom, std::sqrt(a2), std::sqrt(n2)});
  }
  return out;
}

}  // namespace codi::testing
