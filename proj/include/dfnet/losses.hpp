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

// Self-supervised objectives: view synthesis from depth and camera motion,
// SSIM + L1 photometric error, edge-aware smoothness, and the depth and flow
// losses built from them.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "dfnet/architecture.hpp"
#include "dfnet/backbone.hpp"

namespace dfnet::losses {

using backbone::CameraIntrinsics;

/// One named loss term. The total is the sum of weight * value.
struct LossComponent {
  std::string name;
  double value = 0.0;
  double weight = 1.0;
};

struct LossReport {
  Var total;
  std::vector<LossComponent> components;

  double total_value() const { return total.value()[0]; }
  /// Sum of weight * value over the components.
  double weighted_sum() const;
  /// Value of a named component; throws when absent.
  double component(const std::string& name) const;
  /// Appends `other`'s components and adds totals, scaling `other` by `w`.
  void merge(const LossReport& other, double w = 1.0);
};

struct LossWeights {
  double ssim = 0.85;
  double depth_smoothness = 1e-3;
  double flow_smoothness = 1e-2;
  /// Per-scale decay of the flow smoothness weight, coarse to fine.
  double flow_smoothness_decay = 0.5;
  std::array<double, kExchangeScales> flow_scales{0.32, 0.08, 0.02, 0.01};
  /// Fraction of the width and height excluded at each border of the flow
  /// photometric mean (rounded up, and narrowed on maps too small to keep an
  /// interior).
  double flow_border = 0.05;
  /// Multiplier of the flow loss in the joint objective.
  double flow = 1.0;
};

/// Flow from the target to the source image induced by per-pixel depth of the
/// target and the target-to-source motion (pose params [N, 6, 1, 1]).
/// `valid` receives 1 where the transformed point lies in front of the source
/// camera and 0 elsewhere; flow and gradients are zero at invalid pixels.
Var rigid_flow(const Var& depth, const Var& pose_params,
               const CameraIntrinsics& intrinsics, Tensor* valid = nullptr);

struct Reconstruction {
  Var image;     // source frame resampled into the target view
  Tensor valid;  // [N, 1, H, W]
};

/// Back-projects the target pixel grid by `depth`, moves it by the pose,
/// projects it with `intrinsics` and bilinearly samples `frame_s`. Pixels
/// whose points fall behind the source camera are zero.
Reconstruction view_synthesis(const Var& frame_s, const Var& depth,
                              const Var& pose_params,
                              const CameraIntrinsics& intrinsics);

/// Per-pixel SSIM dissimilarity clamp((1 - SSIM) / 2, 0, 1) with a 3x3
/// reflection-padded window, per channel.
Var ssim_dissimilarity(const Var& x, const Var& y);

/// ssim_weight * mean_c(dssim) + (1 - ssim_weight) * mean_c |pred - target|,
/// returned as [N, 1, H, W].
Var photometric_loss(const Var& pred, const Var& target,
                     double ssim_weight = 0.85);

/// Edge-aware first-order smoothness of `field` guided by `image`:
/// mean |dx f| exp(-mean_c |dx I|) + mean |dy f| exp(-mean_c |dy I|).
Var edge_aware_smoothness(const Var& field, const Var& image);

struct DepthLossInputs {
  Var frame_prev;
  Var frame_t;
  Var frame_next;
  /// Disparities at 1/2^k of the input resolution, k = 0..3.
  std::array<Var, 4> disparity;
  Var pose_prev;  // t -> t-1
  Var pose_next;  // t -> t+1
  CameraIntrinsics intrinsics;
  double min_depth = 0.1;
  double max_depth = 100.0;
};

/// Minimum reprojection over both neighbours with automatic masking of
/// pixels that the unwarped neighbour explains better, plus mean-normalised
/// edge-aware disparity smoothness at each output's native resolution.
LossReport depth_loss(const DepthLossInputs& in, const LossWeights& w = {});

/// Per-scale photometric warping loss with flow smoothness, scales weighted
/// coarse to fine. `flows[i - 1]` is the flow at exchange scale i.
LossReport flow_loss(const Var& frame_t, const Var& frame_s,
                     std::span<const Var> flows, const LossWeights& w = {});

/// Repeated 2x average pooling down to (height, width).
Var downsample_to(const Var& image, int height, int width);

}  // namespace dfnet::losses
