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

// Depth decoder (skip-connected up-convolutions, four sigmoid disparity
// outputs) and the coarse-to-fine flow decoder.

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "dfnet/architecture.hpp"
#include "dfnet/backbone.hpp"
#include "dfnet/exchange.hpp"

namespace dfnet::decoders {

using backbone::FeaturePyramid;

/// Maps sigmoid disparity in (0, 1) to depth in [min_depth, max_depth]:
/// depth = 1 / (a * disp + b), b = 1 / max_depth, a = 1 / min_depth - b.
double disparity_to_depth(double disparity, double min_depth = 0.1,
                          double max_depth = 100.0);
Var disparity_to_depth(const Var& disparity, double min_depth = 0.1,
                       double max_depth = 100.0);

struct DepthOutput {
  /// disparity[k] is at 1/2^k of the input resolution, k = 0..3.
  std::array<Var, 4> disparity;
  /// Depth feature fed to the next layer at exchange scale i (index i - 1),
  /// after any refinement.
  std::array<Var, kExchangeScales> features;
};

/// Hook run on the depth feature of each exchange scale (coarse to fine); the
/// returned map replaces the feature.
using ScaleHook = std::function<Var(int scale, const Var& feature)>;

class DepthDecoder {
 public:
  DepthDecoder() = default;
  DepthDecoder(const std::array<int, 5>& encoder_widths,
               const std::array<int, 5>& widths, std::mt19937_64& rng);

  /// Full decode. `hook` may be empty.
  DepthOutput decode(const FeaturePyramid& pyr,
                     const ScaleHook& hook = {}) const;
  /// Exchange-scale features only (skips the full-resolution layer and the
  /// disparity heads).
  std::array<Var, kExchangeScales> features(const FeaturePyramid& pyr) const;

  /// Channel width of the depth feature at exchange scale i.
  int feature_width(int scale) const { return widths_.at(5 - scale); }

  void collect(const std::string& prefix, nn::NamedParameters& out) const;

 private:
  Var layer(int s, const Var& x, const FeaturePyramid& pyr) const;

  std::array<int, 5> widths_{};
  std::array<nn::Conv2d, 5> upconv0_;
  std::array<nn::Conv2d, 5> upconv1_;
  std::array<nn::Conv2d, 4> dispconv_;
};

/// Coarse-to-fine state carried between flow decoder scales.
struct FlowState {
  int next_scale = 1;
  Var flow;  // F^{i-1}, empty before the first scale
  std::optional<exchange::DualHeadMask> mask_t;
  std::optional<exchange::DualHeadMask> mask_s;
};

struct FlowStepInputs {
  Var enc_t;
  Var enc_s;
  Var depth_t;  // required iff the decoder uses D2F
  Var depth_s;
};

struct FlowStepOutput {
  Var flow;  // F^i in pixels of scale i
  tensor_core::CostVolume cost;
  Var fused_t;  // D2F fused features (empty without D2F)
  Var fused_s;
  std::optional<exchange::DualHeadMask> mask_t;
  std::optional<exchange::DualHeadMask> mask_s;
};

struct FlowPyramidOutput {
  /// flows[i - 1] = F^i at exchange scale i.
  std::array<Var, kExchangeScales> flows;
  std::array<FlowStepOutput, kExchangeScales> steps;
  Var final_flow;  // at input resolution
};

class FlowDecoder {
 public:
  FlowDecoder() = default;
  /// `depth_widths[i - 1]` is the depth feature width at scale i (used only
  /// with D2F).
  FlowDecoder(const Architecture& arch,
              const std::array<int, kExchangeScales>& depth_widths, bool d2f,
              bool dual_head, std::mt19937_64& rng);

  /// Runs scale `state.next_scale` and advances the state.
  FlowStepOutput step(const FlowStepInputs& in, FlowState& state) const;

  /// All scales. `depth_t`, `depth_s` are per-scale depth features (index
  /// i - 1), required iff D2F is enabled.
  FlowPyramidOutput decode(
      const FeaturePyramid& pyr_t, const FeaturePyramid& pyr_s,
      const std::array<Var, kExchangeScales>* depth_t = nullptr,
      const std::array<Var, kExchangeScales>* depth_s = nullptr) const;

  /// Deep copy with fresh parameter nodes and a reset call counter.
  FlowDecoder clone() const;
  void collect(const std::string& prefix, nn::NamedParameters& out) const;

  bool d2f() const { return d2f_; }
  bool dual_head() const { return dual_head_; }
  /// Number of step() invocations on this instance.
  std::int64_t forward_calls() const { return forward_calls_; }

  exchange::D2FBlock& d2f_block(int scale) { return d2f_blocks_.at(scale - 1); }

 private:
  struct Estimator {
    std::array<nn::Conv2d, 5> convs;
    nn::Conv2d head;
  };

  bool d2f_ = false;
  bool dual_head_ = false;
  int radius_ = tensor_core::kDefaultCorrelationRadius;
  std::array<exchange::D2FBlock, kExchangeScales> d2f_blocks_;
  std::array<Estimator, kExchangeScales> estimators_;
  mutable std::int64_t forward_calls_ = 0;
};

/// Final flow at input resolution from the finest exchange scale.
Var flow_to_input_resolution(const Var& finest_flow, int input_height,
                             int input_width);

}  // namespace dfnet::decoders
