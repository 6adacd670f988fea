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

// Per-stage progressive perception interaction.
//
//   Wc = align_c(Fc), Wd = align_d(Fd)                 (gated dual branch)
//   W  = conv3x3([Wc, Wd])                              coarse, 2D -> D
//   off = pw(dw(Wd))                                    2N offset channels
//   G1 = up(dsc(down(Wc[:D/2])))
//   G2 = up(pw(deform_dw(down(Wc[D/2:]), off)))
//   G  = W + shuffle([G1, G2])
//
// `down`/`up` (the channel squeeze and unsqueeze) are one pair shared by both
// halves.

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "codi/nn/layers.hpp"

namespace codi {

struct StageInteractionConfig {
  int64_t dim = 384;     // unified channel dimension
  int64_t squeeze = 64;  // channel squeeze width
  int64_t taps = 9;      // deformable kernel sampling points (3x3)
  int stage = 0;

  void validate(bool split = true) const {
    require<ConfigError>(dim > 0 && squeeze > 0, "interaction dims must be positive (D=", dim, ", r=", squeeze, ")");
    require<ConfigError>(taps == 9, "only 3x3 deformable kernels (9 taps) are supported, got ", taps);
    if (split) {
      require<ConfigError>(dim % 2 == 0, "D must be even to split into two groups, got ", dim);
      require<ConfigError>(squeeze <= dim / 2, "r must not exceed D/2 (r=", squeeze, ", D=", dim, ")");
    } else {
      require<ConfigError>(squeeze <= dim, "r must not exceed D (r=", squeeze, ", D=", dim, ")");
    }
  }
};

/// Structural ablation switches for one interaction block.
struct InteractionSwitches {
  bool coarse = true;            // concat + 3x3 path
  bool fine = true;              // offset-guided path
  bool content_offsets = false;  // derive offsets from the content side
  bool split = true;             // two-group split; off = one deformable group over all of D

  void validate() const {
    require<ConfigError>(coarse || fine, "at least one of the coarse and fine paths must stay enabled");
  }
  bool uses_distortion_alignment() const { return coarse || (fine && !content_offsets); }

  friend bool operator==(const InteractionSwitches&, const InteractionSwitches&) = default;
};

inline int64_t alignment_gate_width() { return 64; }

/// Dual-branch alignment: a reduced feature gated by a sigmoid spatial map.
template <typename T>
class AlignBlock : public nn::Module<T> {
 public:
  AlignBlock(int64_t in_channels, int64_t dim) : in_(in_channels) {
    using nn::ConvOptions;
    const int64_t g = alignment_gate_width();
    reduce_ = &this->add_child("reduce", std::make_unique<nn::Conv2d<T>>(ConvOptions{in_channels, dim, 1}));
    dw_ = &this->add_child("feat_dw", std::make_unique<nn::Conv2d<T>>(ConvOptions{dim, dim, 3, 1, 1, dim}));
    bn_ = &this->add_child("feat_bn", std::make_unique<nn::BatchNorm2d<T>>(dim));
    pw1_ = &this->add_child("feat_pw1", std::make_unique<nn::Conv2d<T>>(ConvOptions{dim, dim, 1}));
    pw2_ = &this->add_child("feat_pw2", std::make_unique<nn::Conv2d<T>>(ConvOptions{dim, dim, 1}));
    gate1_ = &this->add_child("gate1", std::make_unique<nn::Conv2d<T>>(ConvOptions{dim, g, 1}));
    gate2_ = &this->add_child("gate2", std::make_unique<nn::Conv2d<T>>(ConvOptions{g, g, 3, 1, 1}));
    gate3_ = &this->add_child("gate3", std::make_unique<nn::Conv2d<T>>(ConvOptions{g, 1, 3, 1, 1}));
  }

  struct Output {
    Var<T> aligned;  // gate * feature
    Var<T> gate;     // [N, 1, H, W] in [0, 1]
    Var<T> feature;
  };

  Output forward_parts(const Var<T>& x) const {
    require<ShapeError>(x.shape().size() == 4 && x.dim(1) == in_, "alignment expects ", in_,
                        " input channels, got ", shape_str(x.shape()));
    auto r = gelu(reduce_->forward(x));
    auto f = bn_->forward(dw_->forward(r));
    f = gelu(pw2_->forward(gelu(pw1_->forward(f))));
    auto g = sigmoid(gate3_->forward(gelu(gate2_->forward(gelu(gate1_->forward(r))))));
    return {mul_bcast(f, g), g, f};
  }

  Var<T> forward(const Var<T>& x) const { return forward_parts(x).aligned; }

  nn::Conv2d<T>& gate_output() { return *gate3_; }
  nn::Conv2d<T>& reduce() { return *reduce_; }

 private:
  int64_t in_;
  nn::Conv2d<T>*reduce_, *dw_, *pw1_, *pw2_, *gate1_, *gate2_, *gate3_;
  nn::BatchNorm2d<T>* bn_;
};

/// Interleaves channels of `groups` equal groups: [a0 a1 b0 b1] -> [a0 b0 a1 b1].
template <typename T>
Var<T> channel_shuffle(const Var<T>& x, int64_t groups) {
  const Shape& s = x.shape();
  require<ShapeError>(s.size() == 4 && s[1] % groups == 0, "channel shuffle needs channels divisible by ", groups);
  auto y = reshape(x, {s[0], groups, s[1] / groups, s[2], s[3]});
  return reshape(permute(y, {0, 2, 1, 3, 4}), s);
}

/// Everything one block computes, for inspection and attention export.
template <typename T>
struct InteractionTrace {
  Var<T> aligned_content, aligned_distortion;
  Var<T> coarse;   // empty when the coarse path is off
  Var<T> offsets;  // empty when the fine path is off
  Var<T> fine;     // post-shuffle fine features, empty when off
  Var<T> output;
};

template <typename T>
class InteractionBlock : public nn::Module<T> {
 public:
  InteractionBlock(int64_t content_channels, int64_t distortion_channels, StageInteractionConfig cfg,
                   InteractionSwitches sw = {})
      : cfg_(cfg), sw_(sw) {
    using nn::ConvOptions;
    sw.validate();
    cfg.validate(sw.split);
    const int64_t D = cfg.dim, r = cfg.squeeze;
    align_c_ = &this->add_child("align_content", std::make_unique<AlignBlock<T>>(content_channels, D));
    if (sw.uses_distortion_alignment())
      align_d_ = &this->add_child("align_distortion", std::make_unique<AlignBlock<T>>(distortion_channels, D));
    if (sw.coarse) coarse_ = &this->add_child("coarse", std::make_unique<nn::Conv2d<T>>(ConvOptions{2 * D, D, 3, 1, 1}));
    if (sw.fine) {
      const int64_t part = sw.split ? D / 2 : D;
      offset_dw_ = &this->add_child("offset_dw", std::make_unique<nn::Conv2d<T>>(ConvOptions{D, D, 3, 1, 1, D}));
      offset_pw_ = &this->add_child("offset_pw", std::make_unique<nn::Conv2d<T>>(ConvOptions{D, 2 * cfg.taps, 1}));
      squeeze_ = &this->add_child("squeeze", std::make_unique<nn::Conv2d<T>>(ConvOptions{part, r, 1}));
      unsqueeze_ = &this->add_child("unsqueeze", std::make_unique<nn::Conv2d<T>>(ConvOptions{r, part, 1}));
      if (sw.split) {
        keep_dw_ = &this->add_child("keep_dw", std::make_unique<nn::Conv2d<T>>(ConvOptions{r, r, 3, 1, 1, r}));
        keep_pw_ = &this->add_child("keep_pw", std::make_unique<nn::Conv2d<T>>(ConvOptions{r, r, 1}));
      }
      deform_ = &this->add_child("deform_dw", std::make_unique<nn::DeformConv2d<T>>(ConvOptions{r, r, 3, 1, 1, r}));
      deform_pw_ = &this->add_child("deform_pw", std::make_unique<nn::Conv2d<T>>(ConvOptions{r, r, 1}));
    }
  }

  const StageInteractionConfig& config() const { return cfg_; }
  const InteractionSwitches& switches() const { return sw_; }

  AlignBlock<T>& content_alignment() { return *align_c_; }
  AlignBlock<T>* distortion_alignment() { return align_d_; }

  Var<T> coarse_interact(const Var<T>& wc, const Var<T>& wd) const {
    require<ConfigError>(coarse_ != nullptr, "coarse path is disabled");
    require<ShapeError>(wc.shape() == wd.shape(), "coarse interaction needs equal shapes, got ",
                        shape_str(wc.shape()), " and ", shape_str(wd.shape()));
    return coarse_->forward(concat<T>({wc, wd}, 1));
  }

  Var<T> compute_offsets(const Var<T>& guide) const {
    require<ConfigError>(offset_dw_ != nullptr, "fine path is disabled");
    return offset_pw_->forward(offset_dw_->forward(guide));
  }

  /// The deformable half alone: squeeze, deformable depthwise 3x3, 1x1, unsqueeze.
  Var<T> deformable_group(const Var<T>& part, const Var<T>& offsets) const {
    auto z = squeeze_->forward(part);
    return unsqueeze_->forward(deform_pw_->forward(deform_->forward(z, offsets)));
  }

  Var<T> fine_interact(const Var<T>& wc, const Var<T>& offsets) const {
    require<ConfigError>(squeeze_ != nullptr, "fine path is disabled");
    const Shape& s = wc.shape();
    require<ShapeError>(s.size() == 4 && s[1] == cfg_.dim, "fine interaction expects ", cfg_.dim,
                        " channels, got ", shape_str(s));
    require<ShapeError>(offsets.shape() == Shape{s[0], 2 * cfg_.taps, s[2], s[3]}, "offset field has shape ",
                        shape_str(offsets.shape()), ", expected ",
                        shape_str({s[0], 2 * cfg_.taps, s[2], s[3]}));
    if (!sw_.split) return deformable_group(wc, offsets);
    const int64_t half = cfg_.dim / 2;
    auto g1 = unsqueeze_->forward(keep_pw_->forward(keep_dw_->forward(squeeze_->forward(slice(wc, 1, 0, half)))));
    auto g2 = deformable_group(slice(wc, 1, half, half), offsets);
    return channel_shuffle(concat<T>({g1, g2}, 1), 2);
  }

  InteractionTrace<T> trace(const Var<T>& fc, const Var<T>& fd) const {
    require<ShapeError>(fc.shape().size() == 4 && fd.shape().size() == 4 && fc.dim(0) == fd.dim(0) &&
                            fc.dim(2) == fd.dim(2) && fc.dim(3) == fd.dim(3),
                        "stage ", cfg_.stage, " inputs disagree: ", shape_str(fc.shape()), " vs ",
                        shape_str(fd.shape()));
    InteractionTrace<T> t;
    t.aligned_content = align_c_->forward(fc);
    if (align_d_) t.aligned_distortion = align_d_->forward(fd);
    Var<T> out;
    bool have = false;
    if (sw_.coarse) {
      t.coarse = coarse_interact(t.aligned_content, t.aligned_distortion);
      out = t.coarse;
      have = true;
    }
    if (sw_.fine) {
      t.offsets = compute_offsets(sw_.content_offsets ? t.aligned_content : t.aligned_distortion);
      t.fine = fine_interact(t.aligned_content, t.offsets);
      out = have ? add(out, t.fine) : t.fine;
    }
    t.output = out;
    return t;
  }

  Var<T> forward(const Var<T>& fc, const Var<T>& fd) const { return trace(fc, fd).output; }

  nn::DeformConv2d<T>* deform() { return deform_; }
  nn::Conv2d<T>* deform_pointwise() { return deform_pw_; }
  nn::Conv2d<T>* squeeze() { return squeeze_; }
  nn::Conv2d<T>* unsqueeze() { return unsqueeze_; }
  nn::Conv2d<T>* coarse() { return coarse_; }
  nn::Conv2d<T>* keep_depthwise() { return keep_dw_; }
  nn::Conv2d<T>* keep_pointwise() { return keep_pw_; }

 private:
  StageInteractionConfig cfg_;
  InteractionSwitches sw_;
  AlignBlock<T>* align_c_ = nullptr;
  AlignBlock<T>* align_d_ = nullptr;
  nn::Conv2d<T>* coarse_ = nullptr;
  nn::Conv2d<T>*offset_dw_ = nullptr, *offset_pw_ = nullptr;
  nn::Conv2d<T>*squeeze_ = nullptr, *unsqueeze_ = nullptr;
  nn::Conv2d<T>*keep_dw_ = nullptr, *keep_pw_ = nullptr;
  nn::DeformConv2d<T>* deform_ = nullptr;
  nn::Conv2d<T>* deform_pw_ = nullptr;
};

}  // namespace codi
