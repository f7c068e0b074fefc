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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "dfnet/evalmetrics.hpp"
#include "dfnet/tensor_core.hpp"

namespace dfnet {
namespace {

namespace fs = std::filesystem;
using namespace eval;

Tensor depth_map(std::mt19937_64& rng, int h = 12, int w = 16, double lo = 1.0,
                 double hi = 60.0) {
  return tensor_core::random_tensor({1, 1, h, w}, rng, lo, hi);
}

Tensor constant_flow(int h, int w, double u, double v) {
  Tensor f({1, 2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.at(0, 0, y, x) = u;
      f.at(0, 1, y, x) = v;
    }
  return f;
}

Tensor ones(int h, int w) { return Tensor({1, 1, h, w}, 1.0); }

TEST(DepthMetrics, ExactPredictionIsPerfect) {
  std::mt19937_64 rng(1);
  const Tensor gt = depth_map(rng);
  const DepthMetrics m = depth_metrics(gt, gt);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.sq_rel, 0.0);
  EXPECT_EQ(m.rms, 0.0);
  EXPECT_NEAR(m.log_rms, 0.0, 1e-15);
  EXPECT_EQ(m.delta1, 1.0);
  EXPECT_EQ(m.delta3, 1.0);
  EXPECT_EQ(m.pixels, gt.numel());
}

TEST(DepthMetrics, DoubledPredictionWithoutScaling) {
  std::mt19937_64 rng(2);
  const Tensor gt = depth_map(rng, 8, 8, 1.0, 30.0);
  Tensor pred = gt;
  for (std::size_t i = 0; i < pred.numel(); ++i) pred[i] *= 2.0;
  const DepthMetrics m = depth_metrics(pred, gt, {.median_scale = false});
  EXPECT_NEAR(m.abs_rel, 1.0, 1e-12);
  EXPECT_EQ(m.delta1, 0.0);
  EXPECT_EQ(m.delta2, 0.0);
  EXPECT_EQ(m.delta3, 0.0);
  EXPECT_NEAR(m.log_rms, std::log(2.0), 1e-12);
}

TEST(DepthMetrics, MedianScalingRecoversScaledPrediction) {
  std::mt19937_64 rng(3);
  const Tensor gt = depth_map(rng);
  Tensor pred = gt;
  for (std::size_t i = 0; i < pred.numel(); ++i) pred[i] *= 0.37;
  const DepthMetrics m = depth_metrics(pred, gt);
  EXPECT_NEAR(m.abs_rel, 0.0, 1e-12);
  EXPECT_NEAR(m.rms, 0.0, 1e-10);
  EXPECT_EQ(m.delta1, 1.0);
}

TEST(DepthMetrics, MedianScaleInvariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor gt = depth_map(rng);
    const Tensor pred = depth_map(rng);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    Tensor scaled = pred;
    const double k = scale(rng);
    for (std::size_t i = 0; i < scaled.numel(); ++i) scaled[i] *= k;
    const DepthMetrics a = depth_metrics(pred, gt);
    const DepthMetrics b = depth_metrics(scaled, gt);
    EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-10);
    EXPECT_NEAR(a.rms, b.rms, 1e-9);
    EXPECT_NEAR(a.log_rms, b.log_rms, 1e-10);
    EXPECT_EQ(a.delta1, b.delta1);
  }
}

TEST(DepthMetrics, DeltaThresholdsAreMonotonic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const DepthMetrics m =
        depth_metrics(depth_map(rng), depth_map(rng), {.median_scale = trial % 2});
    EXPECT_LE(m.delta1, m.delta2);
    EXPECT_LE(m.delta2, m.delta3);
    EXPECT_GE(m.delta1, 0.0);
    EXPECT_LE(m.delta3, 1.0);
  }
}

TEST(DepthMetrics, IgnoresPixelsOutsideRangeAndCrop) {
  Tensor gt({1, 1, 10, 10}, 5.0);
  gt.at(0, 0, 9, 9) = 0.0;
  gt.at(0, 0, 9, 8) = 90.0;
  Tensor pred({1, 1, 10, 10}, 5.0);
  pred.at(0, 0, 9, 9) = 70.0;
  pred.at(0, 0, 9, 8) = 70.0;
  DepthMetrics m = depth_metrics(pred, gt, {.median_scale = false});
  EXPECT_EQ(m.pixels, 98u);
  EXPECT_EQ(m.abs_rel, 0.0);
  m = depth_metrics(pred, gt, {.median_scale = false, .garg_crop = true});
  // rows [4, 9), cols [0, 9)
  EXPECT_EQ(m.pixels, 45u);
}

TEST(DepthMetrics, ClampsPredictionToRange) {
  Tensor gt({1, 1, 1, 2}, {70.0, 70.0});
  Tensor pred({1, 1, 1, 2}, {200.0, 200.0});
  const DepthMetrics m = depth_metrics(pred, gt, {.median_scale = false});
  EXPECT_NEAR(m.abs_rel, 10.0 / 70.0, 1e-12);
}

TEST(DepthMetrics, RejectsEmptyAndMismatched) {
  EXPECT_THROW(depth_metrics(ones(4, 4), Tensor({1, 1, 4, 4})),
               std::invalid_argument);
  EXPECT_THROW(depth_metrics(ones(4, 4), ones(4, 5)), std::invalid_argument);
}

TEST(DepthMetrics, MeanAveragesPerImage) {
  DepthMetrics a, b;
  a.abs_rel = 0.1;
  b.abs_rel = 0.3;
  a.delta1 = 1.0;
  EXPECT_NEAR(mean({a, b}).abs_rel, 0.2, 1e-15);
  EXPECT_NEAR(mean({a, b}).delta1, 0.5, 1e-15);
}

TEST(FlowMetrics, ThreeFourFiveError) {
  const Tensor gt = constant_flow(6, 7, 1.0, -2.0);
  const Tensor pred = constant_flow(6, 7, 4.0, 2.0);
  const FlowMetrics m = flow_metrics(pred, gt, ones(6, 7), ones(6, 7));
  EXPECT_EQ(m.epe, 5.0);
  EXPECT_EQ(m.epe_noc, 5.0);
  EXPECT_EQ(m.f1, 100.0);
}

TEST(FlowMetrics, OutlierNeedsBothThresholds) {
  const Tensor gt = constant_flow(4, 4, 6.0, 8.0);
  const FlowMetrics small = flow_metrics(constant_flow(4, 4, 6.0, 12.0), gt,
                                         ones(4, 4), ones(4, 4));
  EXPECT_EQ(small.f1, 100.0);
  const Tensor fast = constant_flow(4, 4, 60.0, 80.0);
  const FlowMetrics relative = flow_metrics(constant_flow(4, 4, 60.0, 84.0),
                                            fast, ones(4, 4), ones(4, 4));
  EXPECT_EQ(relative.f1, 0.0);
  const FlowMetrics absolute = flow_metrics(constant_flow(4, 4, 6.0, 10.5), gt,
                                            ones(4, 4), ones(4, 4));
  EXPECT_EQ(absolute.f1, 0.0);
}

TEST(FlowMetrics, MasksSelectPixels) {
  Tensor gt = constant_flow(2, 2, 0.0, 0.0);
  Tensor pred = constant_flow(2, 2, 0.0, 0.0);
  pred.at(0, 0, 0, 0) = 10.0;
  pred.at(0, 0, 1, 1) = 2.0;
  Tensor valid = ones(2, 2);
  valid.at(0, 0, 0, 1) = 0.0;
  Tensor noc = valid;
  noc.at(0, 0, 0, 0) = 0.0;
  const FlowMetrics m = flow_metrics(pred, gt, valid, noc);
  EXPECT_EQ(m.pixels, 3u);
  EXPECT_NEAR(m.epe, 4.0, 1e-15);
  EXPECT_NEAR(m.epe_noc, 1.0, 1e-15);
  EXPECT_EQ(m.outliers, 1u);
  EXPECT_NEAR(masked_epe(pred, gt, noc), 1.0, 1e-15);
}

TEST(FlowMetrics, EmptyNonOccludedSetIsNaN) {
  const FlowMetrics m = flow_metrics(constant_flow(2, 2, 1, 0),
                                     constant_flow(2, 2, 0, 0), ones(2, 2),
                                     Tensor({1, 1, 2, 2}));
  EXPECT_TRUE(std::isnan(m.epe_noc));
  EXPECT_EQ(m.epe, 1.0);
}

TEST(FlowMetrics, RejectsEmptyValidSetAndBadShapes) {
  const Tensor f = constant_flow(3, 3, 0, 0);
  EXPECT_THROW(flow_metrics(f, f, Tensor({1, 1, 3, 3}), ones(3, 3)),
               std::invalid_argument);
  EXPECT_THROW(flow_metrics(f, constant_flow(3, 4, 0, 0), ones(3, 3), ones(3, 3)),
               std::invalid_argument);
  EXPECT_THROW(flow_metrics(f, f, ones(3, 4), ones(3, 4)), std::invalid_argument);
}

TEST(FlowMetrics, EpeIsTranslationEquivariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor gt = tensor_core::random_tensor({1, 2, 5, 6}, rng, -10, 10);
    const Tensor pred = tensor_core::random_tensor({1, 2, 5, 6}, rng, -10, 10);
    const double du = shift(rng), dv = shift(rng);
    Tensor gt2 = gt, pred2 = pred;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        gt2.at(0, 0, y, x) += du;
        pred2.at(0, 0, y, x) += du;
        gt2.at(0, 1, y, x) += dv;
        pred2.at(0, 1, y, x) += dv;
      }
    EXPECT_NEAR(flow_metrics(pred, gt, ones(5, 6), ones(5, 6)).epe,
                flow_metrics(pred2, gt2, ones(5, 6), ones(5, 6)).epe, 1e-12);
  }
}

TEST(FlowMetrics, MeanAveragesEpePerImageAndPoolsOutliers) {
  FlowMetrics a, b;
  a.epe = 1.0;
  a.epe_noc = 0.5;
  a.pixels = 100;
  a.outliers = 10;
  b.epe = 3.0;
  b.epe_noc = std::nan("");
  b.pixels = 300;
  b.outliers = 10;
  const FlowMetrics m = mean({a, b});
  EXPECT_EQ(m.epe, 2.0);
  EXPECT_EQ(m.epe_noc, 0.5);
  EXPECT_EQ(m.f1, 5.0);
}

TEST(Resize, FlowComponentsFollowScale) {
  const Tensor up = resize_flow(constant_flow(4, 6, 1.0, -1.0), 12, 12);
  EXPECT_EQ(up.shape(), (Shape{1, 2, 12, 12}));
  EXPECT_NEAR(up.at(0, 0, 5, 7), 2.0, 1e-12);
  EXPECT_NEAR(up.at(0, 1, 5, 7), -3.0, 1e-12);
  const Tensor same = resize_map(ones(3, 3), 3, 3);
  EXPECT_EQ(same.shape(), (Shape{1, 1, 3, 3}));
}

TEST(ParameterCount, ConvWithBias) {
  std::mt19937_64 rng(7);
  nn::Conv2d conv(16, 32, 3, 1, rng);
  nn::NamedParameters params;
  conv.collect("conv", params);
  EXPECT_EQ(nn::count(params), 4640);
}

TEST(ParameterCount, AblationOrdering) {
  const Architecture arch = Architecture::full();
  const auto count = [&](const char* id) {
    return count_parameters(arch, model::ModelFlags::ablation(id));
  };
  EXPECT_GT(count("I"), count("II"));
  EXPECT_GT(count("VI"), count("V"));
  EXPECT_EQ(count("III"), count("IV"));
}

TEST(ParameterCount, ExcludesTeacher) {
  model::MultiTaskNet net(Architecture::desk(), model::ModelFlags::ablation("VI"), 1);
  const std::int64_t before = count_parameters(net);
  net.clone_teacher();
  EXPECT_EQ(count_parameters(net), before);
}

TEST(Throughput, SingleRunIsInverseLatency) {
  const model::MultiTaskNet net(Architecture::desk(),
                                model::ModelFlags::ablation("II"), 2);
  const FpsReport r = measure_fps(net, 32, 64, 1, 0);
  EXPECT_EQ(r.runs, 1);
  EXPECT_GT(r.median_seconds, 0.0);
  EXPECT_EQ(r.fps, 1.0 / r.median_seconds);
  EXPECT_FALSE(r.hardware.empty());
}

TEST(Throughput, LargerFramesAreSlower) {
  const model::MultiTaskNet net(Architecture::desk(),
                                model::ModelFlags::ablation("II"), 3);
  const FpsReport small = measure_fps(net, 64, 64, 3);
  const FpsReport large = measure_fps(net, 64, 128, 3);
  EXPECT_LT(large.fps, small.fps);
  EXPECT_THROW(measure_fps(net, 64, 64, 0), std::invalid_argument);
}

TEST(Reporting, TableColumnsAlign) {
  const std::string t =
      format_table({"model", "epe"}, {{"I", "8.200"}, {"VI-long", "6.84"}});
  std::istringstream lines(t);
  std::string header, rule, first, second;
  std::getline(lines, header);
  std::getline(lines, rule);
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(header.size(), first.size());
  EXPECT_EQ(first.size(), second.size());
  EXPECT_EQ(rule, std::string(header.size(), '-'));
  EXPECT_EQ(second.rfind("VI-long", 0), 0u);
  FlowMetrics nan_noc;
  nan_noc.epe_noc = std::nan("");
  EXPECT_NE(flow_table({{"x", nan_noc}}).find("n/a"), std::string::npos);
  EXPECT_THROW(format_table({"a", "b"}, {{"1"}}), std::invalid_argument);
}

TEST(Reporting, JsonlRoundTrip) {
  const fs::path file = fs::temp_directory_path() /
                        ("dfnet_jsonl_" + std::to_string(::getpid()) + ".jsonl");
  fs::remove(file);
  DepthMetrics d;
  d.abs_rel = 0.125;
  append_jsonl(file, {{"model", "I"}, {"depth", to_json(d)}});
  append_jsonl(file, {{"model", "II"}, {"flow", to_json(FlowMetrics{})}});
  const auto records = read_jsonl(file);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0]["depth"]["abs_rel"], 0.125);
  EXPECT_EQ(records[1]["model"], "II");
  {
    std::ofstream out(file, std::ios::app);
    out << "{broken\n";
  }
  try {
    read_jsonl(file);
    FAIL() << "malformed line accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
  fs::remove(file);
  EXPECT_TRUE(read_jsonl(file).empty());
}

TEST(Figures, FlowColourWheel) {
  Tensor flow = constant_flow(1, 3, 0.0, 0.0);
  flow.at(0, 0, 0, 1) = 1.0;
  flow.at(0, 0, 0, 2) = 2.0;
  const Tensor rgb = flow_to_color(flow, 1.0);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(rgb.at(0, c, 0, 0), 1.0);
  // Unit rightward motion is saturated red; beyond the maximum it darkens.
  EXPECT_EQ(rgb.at(0, 0, 0, 1), 1.0);
  EXPECT_LT(rgb.at(0, 1, 0, 1), 0.05);
  EXPECT_NEAR(rgb.at(0, 0, 0, 2), 0.75, 1e-12);
  const Tensor auto_scaled = flow_to_color(flow);
  EXPECT_EQ(auto_scaled.at(0, 0, 0, 2), 1.0);
}

TEST(Figures, HeatMapsBlankMissingPixels) {
  Tensor gt({1, 1, 2, 2}, 10.0);
  gt.at(0, 0, 1, 1) = 0.0;
  const Tensor e = depth_error_map(ones(2, 2), gt);
  EXPECT_EQ(e.shape(), (Shape{1, 3, 2, 2}));
  for (int c = 0; c < 3; ++c) EXPECT_EQ(e.at(0, c, 1, 1), 0.0);
  EXPECT_GT(e.at(0, 0, 0, 0), 0.3);  // 90 % error saturates to red
  const Tensor d = depth_to_color(gt);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(d.at(0, c, 1, 1), 0.0);
  Tensor valid = ones(2, 2);
  valid.at(0, 0, 0, 0) = 0.0;
  const Tensor fe = flow_error_map(constant_flow(2, 2, 0, 0),
                                   constant_flow(2, 2, 0, 0), valid);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(fe.at(0, c, 0, 0), 0.0);
  EXPECT_GT(fe.at(0, 2, 1, 1), 0.4);  // zero error is blue
}

TEST(Figures, PlotDrawsSeries) {
  const Tensor img = plot_series(
      {{"loss", {0, 1, 2, 3}, {4.0, 2.0, 1.0, 0.5}}, {"single", {1}, {1.0}}},
      "training", 400, 300, true);
  EXPECT_EQ(img.shape(), (Shape{1, 3, 300, 400}));
  std::size_t dark = 0;
  for (std::size_t i = 0; i < img.numel(); ++i) dark += img[i] < 0.5;
  EXPECT_GT(dark, 500u);
  EXPECT_THROW(plot_series({{"bad", {0, 1}, {1}}}, "x"), std::invalid_argument);
}

}  // namespace
}  // namespace dfnet
