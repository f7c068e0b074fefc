/* Copyright 2026 The dfnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Cross-task feature exchange: depth-to-flow cost volumes, flow-to-depth
// refinement and the rigid/non-rigid mask pyramid.

#pragma once

#include <optional>

#include "dfnet/nn.hpp"
#include "dfnet/tensor_core.hpp"

namespace dfnet::exchange {

using tensor_core::CostVolume;

/// Soft rigidity mask at one exchange scale, values in (0, 1).
struct DualHeadMask {
  Var data;  // [N, 1, H, W]
  int scale = 1;
};

/// Complementary split of a fused feature map.
struct DualHeadFeature {
  Var rigid;
  Var nonrigid;
};

/// 1x1 convolution over the channel concatenation of encoder and depth
/// features.
Var fuse_features(const nn::Conv2d& fusion, const Var& enc,
                  const Var& depth_feat);

/// Bilinear resize of a coarser mask to (height, width).
Var upsample_mask(const Var& mask, int height, int width);

/// Two 3x3 convolutions producing the mask of one scale. Scales above the
/// first also consume the upsampled mask of the previous scale.
class MaskLayer {
 public:
  MaskLayer() = default;
  MaskLayer(int scale, int enc_channels, int hidden, std::mt19937_64& rng);

  DualHeadMask operator()(const Var& enc,
                          const DualHeadMask* prev = nullptr) const;

  int scale() const { return scale_; }
  MaskLayer clone() const;
  void collect(const std::string& prefix, nn::NamedParameters& out) const;

  nn::Conv2d& first() { return first_; }
  nn::Conv2d& second() { return second_; }

 private:
  int scale_ = 1;
  nn::Conv2d first_;
  nn::Conv2d second_;
};

/// head_rigid = mask * fused, head_nonrigid = (1 - mask) * fused.
DualHeadFeature dual_head_split(const Var& fused, const Var& mask);

struct D2FInputs {
  Var enc_t;
  Var enc_s;
  Var depth_t;
  Var depth_s;
  const DualHeadMask* prev_mask_t = nullptr;
  const DualHeadMask* prev_mask_s = nullptr;
  Var flow_up;  // [N, 2, H, W], zeros at the coarsest scale
};

struct D2FOutput {
  CostVolume cost;
  std::optional<DualHeadMask> mask_t;
  std::optional<DualHeadMask> mask_s;
  Var fused_t;
  Var fused_s;  // unwarped
};

/// Depth-aware cost volume of one exchange scale.
class D2FBlock {
 public:
  D2FBlock() = default;
  D2FBlock(int scale, int enc_channels, int depth_channels, int fused_channels,
           int mask_hidden, bool dual_head, int radius, std::mt19937_64& rng);

  D2FOutput operator()(const D2FInputs& in) const;

  bool dual_head() const { return mask_.has_value(); }
  int radius() const { return radius_; }
  int fused_channels() const { return fusion_.out_channels(); }
  int cost_channels() const {
    return CostVolume::channels_for(radius_, dual_head() ? 2 : 1);
  }

  D2FBlock clone() const;
  void collect(const std::string& prefix, nn::NamedParameters& out) const;

  nn::Conv2d& fusion() { return fusion_; }
  MaskLayer* mask_layer() { return mask_ ? &*mask_ : nullptr; }

 private:
  int scale_ = 1;
  int radius_ = 0;
  nn::Conv2d fusion_;
  std::optional<MaskLayer> mask_;
};

/// Flow-feature matching confidence: warps `flow_feat_s` by `flow`, min-max
/// normalises both maps and correlates them at zero offset.
Var match_confidence(const Var& flow_feat_t, const Var& flow_feat_s,
                     const Var& flow);

/// Refines a depth feature with the flow matching confidence. The 3x3 conv
/// starts as the identity on the depth channels and zero on the confidence.
class F2DBlock {
 public:
  F2DBlock() = default;
  F2DBlock(int depth_channels, std::mt19937_64& rng);

  Var operator()(const Var& depth_feat_t, const Var& flow_feat_t,
                 const Var& flow_feat_s, const Var& flow) const;

  void collect(const std::string& prefix, nn::NamedParameters& out) const;
  nn::Conv2d& conv() { return conv_; }

 private:
  nn::Conv2d conv_;
};

}  // namespace dfnet::exchange
