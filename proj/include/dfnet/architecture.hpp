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

#pragma once

#include <array>
#include <string>

namespace dfnet {

/// Number of pyramid scales at which depth and flow exchange information.
/// Scale i = 1 is the coarsest (1/16 of the input), i = 4 the finest (1/2).
inline constexpr int kExchangeScales = 4;
/// Strided encoder stages; stage k runs at 1/2^k of the input.
inline constexpr int kEncoderStages = 5;
/// Inputs must be divisible by 2^kEncoderStages.
inline constexpr int kInputMultiple = 1 << kEncoderStages;

/// Encoder stage (1-based) that feeds exchange scale i.
constexpr int stage_of_scale(int i) { return kEncoderStages - i; }

/// Channel widths of every learned block.
struct Architecture {
  std::array<int, 5> encoder{16, 32, 64, 96, 128};
  /// Depth decoder widths at resolutions 1, 1/2, ..., 1/16.
  std::array<int, 5> depth_decoder{16, 32, 64, 128, 256};
  std::array<int, 5> flow_estimator{128, 128, 96, 64, 32};
  std::array<int, 5> pose{16, 32, 64, 128, 256};
  /// D2F fused-feature width per exchange scale i = 1..4.
  std::array<int, 4> fusion{96, 64, 32, 16};
  int mask_hidden = 16;
  int correlation_radius = 4;
  double min_depth = 0.1;
  double max_depth = 100.0;

  /// Widths of the reference-scale network.
  static Architecture full() { return {}; }
  /// Narrow widths for single-core desk-scale training.
  static Architecture desk() {
    Architecture a;
    a.encoder = {8, 16, 24, 32, 48};
    a.depth_decoder = {8, 16, 24, 32, 48};
    a.flow_estimator = {32, 32, 24, 16, 16};
    a.pose = {8, 16, 24, 32, 32};
    a.fusion = {32, 24, 16, 8};
    a.mask_hidden = 8;
    return a;
  }
  static Architecture by_name(const std::string& name);
};

}  // namespace dfnet
