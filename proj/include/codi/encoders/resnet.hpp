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

// Bottleneck ResNet-50 (stride on the 3x3 conv). Parameter names follow the
// torchvision layout so converted state dicts load by name.

#include <array>
#include <memory>
#include <string>

#include "codi/encoders/backbone.hpp"

namespace codi {

template <typename T>
class Bottleneck : public nn::Module<T> {
 public:
  Bottleneck(int64_t in, int64_t width, int64_t stride, bool downsample) {
    using nn::ConvOptions;
    const int64_t out = width * 4;
    conv1_ = &this->add_child("conv1", std::make_unique<nn::Conv2d<T>>(ConvOptions{in, width, 1, 1, 0, 1, false, true}));
    bn1_ = &this->add_child("bn1", std::make_unique<nn::BatchNorm2d<T>>(width));
    conv2_ = &this->add_child("conv2", std::make_unique<nn::Conv2d<T>>(ConvOptions{width, width, 3, stride, 1, 1, false, true}));
    bn2_ = &this->add_child("bn2", std::make_unique<nn::BatchNorm2d<T>>(width));
    conv3_ = &this->add_child("conv3", std::make_unique<nn::Conv2d<T>>(ConvOptions{width, out, 1, 1, 0, 1, false, true}));
    bn3_ = &this->add_child("bn3", std::make_unique<nn::BatchNorm2d<T>>(out));
    if (downsample) {
      auto& seq = this->add_child("downsample", std::make_unique<nn::Container<T>>());
      down_conv_ = &seq.template add<nn::Conv2d<T>>("0", nn::ConvOptions{in, out, 1, stride, 0, 1, false, true});
      down_bn_ = &seq.template add<nn::BatchNorm2d<T>>("1", out);
    }
  }

  Var<T> forward(const Var<T>& x) const {
    auto y = relu(bn1_->forward(conv1_->forward(x)));
    y = relu(bn2_->forward(conv2_->forward(y)));
    y = bn3_->forward(conv3_->forward(y));
    Var<T> identity = down_conv_ ? down_bn_->forward(down_conv_->forward(x)) : x;
    return relu(add(y, identity));
  }

 private:
  nn::Conv2d<T>*conv1_, *conv2_, *conv3_;
  nn::BatchNorm2d<T>*bn1_, *bn2_, *bn3_;
  nn::Conv2d<T>* down_conv_ = nullptr;
  nn::BatchNorm2d<T>* down_bn_ = nullptr;
};

template <typename T>
class ResNet50 : public Backbone<T> {
 public:
  ResNet50() {
    using nn::ConvOptions;
    conv1_ = &this->add_child("conv1", std::make_unique<nn::Conv2d<T>>(ConvOptions{3, 64, 7, 2, 3, 1, false, true}));
    bn1_ = &this->add_child("bn1", std::make_unique<nn::BatchNorm2d<T>>(64));
    constexpr std::array<int, 4> depth{3, 4, 6, 3};
    int64_t in = 64;
    for (int s = 0; s < 4; ++s) {
      auto& layer = this->add_child("layer" + std::to_string(s + 1), std::make_unique<Layer>());
      const int64_t width = int64_t{64} << s;
      for (int b = 0; b < depth[s]; ++b) {
        const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
        layer.blocks.push_back(layer.add(std::to_string(b), in, width, stride, b == 0));
        in = width * 4;
      }
      layers_[s] = &layer;
    }
  }

  BackboneKind kind() const override { return BackboneKind::kResNet50; }

  std::vector<Var<T>> forward_taps(const Var<T>& x) const override {
    std::vector<Var<T>> taps;
    auto y = relu(bn1_->forward(conv1_->forward(x)));
    taps.push_back(y);
    y = max_pool2d(y, 3, 2, 1);
    for (const Layer* layer : layers_) {
      for (const auto* b : layer->blocks) y = b->forward(y);
      taps.push_back(y);
    }
    return taps;
  }

 private:
  class Layer : public nn::Module<T> {
   public:
    Bottleneck<T>* add(const std::string& name, int64_t in, int64_t width, int64_t stride, bool down) {
      return &this->add_child(name, std::make_unique<Bottleneck<T>>(in, width, stride, down));
    }
    std::vector<Bottleneck<T>*> blocks;
  };

  nn::Conv2d<T>* conv1_;
  nn::BatchNorm2d<T>* bn1_;
  std::array<Layer*, 4> layers_{};
};

}  // namespace codi
