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

// Five conv3x3/stride-2 + BN + ReLU stages with the CNN downscale schedule.
// Used for fast tests and smoke runs.

#include <memory>
#include <string>

#include "codi/encoders/backbone.hpp"

namespace codi {

template <typename T>
class TinyBackbone : public Backbone<T> {
 public:
  TinyBackbone() {
    auto& stages = this->add_child("stages", std::make_unique<nn::Container<T>>());
    int64_t in = 3;
    for (const StageSpec& s : stage_table(BackboneKind::kTiny)) {
      auto& st = stages.template add<nn::Container<T>>(std::to_string(s.index));
      convs_.push_back(&st.template add<nn::Conv2d<T>>(
          "conv", nn::ConvOptions{in, s.channels, 3, 2, 1, 1, false, true}));
      bns_.push_back(&st.template add<nn::BatchNorm2d<T>>("bn", s.channels));
      in = s.channels;
    }
  }

  BackboneKind kind() const override { return BackboneKind::kTiny; }

  std::vector<Var<T>> forward_taps(const Var<T>& x) const override {
    std::vector<Var<T>> taps;
    Var<T> y = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
      y = relu(bns_[i]->forward(convs_[i]->forward(y)));
      taps.push_back(y);
    }
    return taps;
  }

  nn::Conv2d<T>& conv(size_t stage) { return *convs_.at(stage); }

 private:
  std::vector<nn::Conv2d<T>*> convs_;
  std::vector<nn::BatchNorm2d<T>*> bns_;
};

}  // namespace codi
