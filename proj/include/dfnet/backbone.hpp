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

// Shared multi-scale feature encoder and the camera-motion network.

#pragma once

#include <array>

#include "dfnet/architecture.hpp"
#include "dfnet/camera.hpp"
#include "dfnet/nn.hpp"

namespace dfnet::backbone {

/// Encoder outputs of one frame. Stage k (1..5) is at 1/2^k resolution.
struct FeaturePyramid {
  std::array<Var, kEncoderStages> stages;

  const Var& stage(int k) const { return stages.at(k - 1); }
  /// Feature map of exchange scale i (1 = coarsest).
  const Var& level(int i) const { return stage(stage_of_scale(i)); }
};

/// Subtracts the dataset mean and divides by the standard deviation used by
/// the monocular-depth lineage (0.45, 0.225).
Var normalize_image(const Var& frame);

/// Five strided stages of (3x3 stride-2 conv, 3x3 conv), leaky-ReLU.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::array<int, 5>& widths, std::mt19937_64& rng);

  /// Rejects frames whose size is not a multiple of 32 or that are not RGB.
  FeaturePyramid encode(const Var& frame) const;

  int width(int stage) const { return widths_.at(stage - 1); }
  void collect(const std::string& prefix, nn::NamedParameters& out) const;

 private:
  std::array<int, 5> widths_{};
  std::array<nn::Conv2d, 5> down_;
  std::array<nn::Conv2d, 5> refine_;
};

/// Per-item 6-DoF motion from the target to a source frame.
struct PoseEstimate {
  Var params;  // [N, 6, 1, 1]: axis-angle rotation then translation

  Motion motion(int n) const;
};

/// Separate small encoder on the channel-concatenated pair, global average
/// pooled to six numbers and scaled by 0.01.
class PoseNet {
 public:
  PoseNet() = default;
  PoseNet(const std::array<int, 5>& widths, std::mt19937_64& rng);

  PoseEstimate estimate(const Var& frame_t, const Var& frame_s) const;
  void collect(const std::string& prefix, nn::NamedParameters& out) const;

 private:
  std::array<nn::Conv2d, 5> convs_;
  nn::Conv2d head_;
};

}  // namespace dfnet::backbone
