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

// Shared tiny-model fixtures for trainer, harness and acceptance tests.

#include <memory>

#include "codi/data/synthetic.hpp"
#include "codi/model/model.hpp"

namespace codi::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.content_backbone = BackboneKind::kTiny;
  c.distortion_backbone = BackboneKind::kTiny;
  c.dim = 8;
  c.squeeze = 2;
  return c;
}

/// Sets every encoder BatchNorm's running statistics to the statistics of
/// `images`, the way a pretrained encoder carries data-fitted statistics.
/// With the default (0, 1) statistics a random tiny encoder run in eval
/// mode leaves whole ReLU channels dead.
template <typename T>
void calibrate_encoder_norms(QualityModel<T>& m, const Var<T>& images) {
  const bool was_training = m.is_training();
  for (Encoder<T>* e : {&m.content_encoder(), &m.distortion_encoder()}) {
    std::vector<std::pair<nn::BatchNorm2d<T>*, T>> bns;
    e->visit([&](const std::string&, nn::Module<T>& mod) {
      if (auto* bn = dynamic_cast<nn::BatchNorm2d<T>*>(&mod)) bns.push_back({bn, bn->momentum()});
    });
    for (auto& [bn, mom] : bns) bn->set_momentum(T(1));
    e->train(true);
    {
      NoGradGuard ng;
      e->forward(images);
    }
    for (auto& [bn, mom] : bns) bn->set_momentum(mom);
  }
  m.train(was_training);
}

inline Var<float> dataset_images(const SyntheticDataset& ds, int crop) {
  PreprocessConfig pc;
  pc.crop = crop;
  std::vector<size_t> idx(ds.manifest.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return Var<float>(make_batch(ds.manifest, idx, ds.images, pc, PreprocessMode::kEval, 0, 0).images);
}

}  // namespace codi::testing
