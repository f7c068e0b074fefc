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

// Differentiable kernels shared by the depth and flow branches.
//
// Feature maps are NCHW Vars; flow fields are [N, 2, H, W] Vars holding the
// horizontal (channel 0) and vertical (channel 1) displacement in pixels of
// the grid they live on. All kernels are pure functions of their inputs.

#pragma once

#include <functional>
#include <random>
#include <vector>

#include "dfnet/autograd.hpp"

namespace dfnet::tensor_core {

/// Correlation window radius used when a caller does not choose one.
inline constexpr int kDefaultCorrelationRadius = 4;

struct CostVolume {
  Var data;  // [N, heads * (2r+1)^2, H, W]
  int radius = 0;
  int heads = 1;

  static int channels_for(int radius, int heads) {
    return heads * (2 * radius + 1) * (2 * radius + 1);
  }
};

/// Mean-over-channels correlation of `f1` at p with `f2` at p + o for every
/// o in [-radius, radius]^2. Channel index of offset (dx, dy) is
/// (dy + r) * (2r + 1) + (dx + r). Samples of `f2` outside the map are zero.
CostVolume cost_volume(const Var& f1, const Var& f2, int radius);

/// Stacks per-head cost volumes along channels.
CostVolume concat_heads(std::span<const CostVolume> heads);

/// Backward warp: out(p) = src(p + flow(p)) with bilinear interpolation and
/// zero fill outside `src`.
Var warp_bilinear(const Var& src, const Var& flow);

/// Doubles the spatial size of a flow field bilinearly and doubles the
/// displacements so they stay in pixels of the finer grid.
Var upsample_flow(const Var& flow, int factor = 2);

/// Min-max normalisation to [0, 1] over all channels and pixels of each batch
/// item. Constant items map to zeros. Rejects non-finite input.
Var normalize_01(const Var& f);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckOptions {
  double step = 1e-5;
  int max_retries = 3;
  /// Relative-error floor, as a fraction of the largest numeric gradient
  /// magnitude, below which errors are measured absolutely.
  double relative_floor = 1e-3;
  /// One-sided difference disagreement (relative) flagging a kink.
  double kink_tolerance = 1e-2;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  int retries = 0;
  /// True when the last attempt still straddled a non-differentiable point.
  bool kink_detected = false;
  std::size_t elements_checked = 0;
};

/// Scalar-valued function of the checked inputs.
using CheckedFunction = std::function<Var(std::span<const Var>)>;
/// Produces a fresh set of inputs; called again with a new attempt index when
/// the previous draw sat on a kink.
using InputSampler = std::function<std::vector<Tensor>(int attempt)>;

/// Compares reverse-mode gradients of `fn` with central finite differences.
/// Non-scalar outputs are reduced with a fixed random projection.
GradCheckResult grad_check(const CheckedFunction& fn,
                           const InputSampler& sampler,
                           const GradCheckOptions& options = {});

/// Tensor of iid uniform values in [lo, hi).
Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0);

}  // namespace dfnet::tensor_core
