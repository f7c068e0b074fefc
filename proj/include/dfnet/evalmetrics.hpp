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

// Depth and flow error metrics, parameter counting, throughput and the
// figures written next to evaluation results.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfnet/model.hpp"

namespace dfnet::eval {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rms = 0.0;
  double log_rms = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t pixels = 0;
};

struct DepthEvalOptions {
  bool median_scale = true;
  double min_depth = 1e-3;
  double max_depth = 80.0;
  /// Keep only the lower-centre crop used for KITTI laser ground truth.
  bool garg_crop = false;
};

/// Metrics over pixels with min_depth < gt < max_depth. `pred` and `gt` are
/// [1, 1, H, W] in metres; pred is optionally median scaled, then clamped to
/// [min_depth, max_depth]. Throws when no pixel is valid.
DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt,
                           const DepthEvalOptions& options = {});

/// Per-image average, as reported over an evaluation split.
DepthMetrics mean(const std::vector<DepthMetrics>& per_image);

struct FlowMetrics {
  double epe = 0.0;
  double epe_noc = 0.0;  // NaN when no valid pixel is non-occluded
  double f1 = 0.0;       // percent
  std::size_t pixels = 0;
  std::size_t outliers = 0;
};

/// End-point errors over `valid` (and valid & `noc`), plus the percentage of
/// valid pixels whose error exceeds both 3 px and 5 % of the true magnitude.
/// Flows are [1, 2, H, W], masks [1, 1, H, W]. Throws on shape mismatch or an
/// empty valid set.
FlowMetrics flow_metrics(const Tensor& pred, const Tensor& gt,
                         const Tensor& valid, const Tensor& noc);

/// Mean end-point error restricted to `mask`; throws on an empty mask.
double masked_epe(const Tensor& pred, const Tensor& gt, const Tensor& mask);

/// EPEs averaged per image; F1 pooled over all pixels.
FlowMetrics mean(const std::vector<FlowMetrics>& per_image);

/// Bilinear resize of a flow field with its components rescaled.
Tensor resize_flow(const Tensor& flow, int height, int width);
/// Bilinear resize of a depth or disparity map.
Tensor resize_map(const Tensor& map, int height, int width);

/// Trainable scalars of the model (the teacher copy is not counted).
std::int64_t count_parameters(const model::MultiTaskNet& net);
std::int64_t count_parameters(const Architecture& arch,
                              const model::ModelFlags& flags);

struct FpsReport {
  double fps = 0.0;
  double median_seconds = 0.0;
  int runs = 0;
  int height = 0;
  int width = 0;
  std::string hardware;
};

/// Median throughput of full depth + flow inference on one frame pair,
/// after `warmup` untimed runs.
FpsReport measure_fps(const model::MultiTaskNet& net, int height, int width,
                      int runs, int warmup = 1);

/// CPU model name and thread count.
std::string hardware_description();

nlohmann::json to_json(const DepthMetrics& m);
nlohmann::json to_json(const FlowMetrics& m);
nlohmann::json to_json(const FpsReport& r);

/// Left-aligned first column, right-aligned others, padded to a common width.
std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);
std::string depth_table(const std::vector<std::pair<std::string, DepthMetrics>>& rows);
std::string flow_table(const std::vector<std::pair<std::string, FlowMetrics>>& rows);

/// Appends one JSON object per line.
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Figures, all [1, 3, H, W] in [0, 1]

/// Colour-wheel flow rendering: hue encodes direction, saturation magnitude
/// relative to `max_magnitude` (the largest valid magnitude when <= 0).
Tensor flow_to_color(const Tensor& flow, double max_magnitude = 0.0);
/// Inverse-depth heat map normalised to the 95th percentile.
Tensor depth_to_color(const Tensor& depth);
/// Flow end-point error coloured from blue (0 px) to red (>= 3 px outlier
/// threshold); invalid pixels are black.
Tensor flow_error_map(const Tensor& pred, const Tensor& gt, const Tensor& valid);
/// Absolute relative depth error, blue 0 to red >= 0.25; pixels without
/// ground truth are black.
Tensor depth_error_map(const Tensor& pred, const Tensor& gt);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
/// Line chart with axes, tick labels and a legend.
Tensor plot_series(const std::vector<Series>& series, const std::string& title,
                   int width = 800, int height = 480, bool log_y = false);

}  // namespace dfnet::eval
