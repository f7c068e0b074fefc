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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "dfnet/evalmetrics.hpp"

namespace dfnet::eval {
namespace {

using Rgb = std::array<double, 3>;

std::vector<Rgb> color_wheel() {
  constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
  std::vector<Rgb> wheel;
  auto ramp = [](int i, int n) { return std::floor(255.0 * i / n); };
  for (int i = 0; i < kRY; ++i) wheel.push_back({255, ramp(i, kRY), 0});
  for (int i = 0; i < kYG; ++i) wheel.push_back({255 - ramp(i, kYG), 255, 0});
  for (int i = 0; i < kGC; ++i) wheel.push_back({0, 255, ramp(i, kGC)});
  for (int i = 0; i < kCB; ++i) wheel.push_back({0, 255 - ramp(i, kCB), 255});
  for (int i = 0; i < kBM; ++i) wheel.push_back({ramp(i, kBM), 0, 255});
  for (int i = 0; i < kMR; ++i) wheel.push_back({255, 0, 255 - ramp(i, kMR)});
  return wheel;
}

Tensor from_bgr(const cv::Mat& bgr) {
  Tensor out({1, 3, bgr.rows, bgr.cols});
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b p = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = p[2 - c] / 255.0;
    }
  return out;
}

/// Maps values in [0, 1] through an OpenCV colour map; masked pixels black.
Tensor heat_map(const std::vector<double>& values, const std::vector<bool>& keep,
                int h, int w, int colormap) {
  cv::Mat grey(h, w, CV_8UC1);
  for (int i = 0; i < h * w; ++i)
    grey.data[i] = static_cast<std::uint8_t>(
        std::lround(255.0 * std::clamp(values[i], 0.0, 1.0)));
  cv::Mat bgr;
  cv::applyColorMap(grey, bgr, colormap);
  for (int i = 0; i < h * w; ++i)
    if (!keep[i]) bgr.at<cv::Vec3b>(i / w, i % w) = cv::Vec3b(0, 0, 0);
  return from_bgr(bgr);
}

}  // namespace

Tensor flow_to_color(const Tensor& flow, double max_magnitude) {
  require(flow.n() == 1 && flow.c() == 2,
          "flow_to_color: expected [1, 2, H, W], got " + flow.shape().str());
  static const std::vector<Rgb> wheel = color_wheel();
  const int columns = static_cast<int>(wheel.size());
  const int h = flow.h(), w = flow.w();
  if (max_magnitude <= 0.0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        max_magnitude = std::max(
            max_magnitude, std::hypot(flow.at(0, 0, y, x), flow.at(0, 1, y, x)));
    if (max_magnitude <= 0.0) max_magnitude = 1.0;
  }
  Tensor out({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = flow.at(0, 0, y, x) / max_magnitude;
      const double v = flow.at(0, 1, y, x) / max_magnitude;
      const double radius = std::hypot(u, v);
      const double angle = std::atan2(-v, -u) / std::numbers::pi;
      const double fk = (angle + 1.0) / 2.0 * (columns - 1);
      const int k0 = static_cast<int>(std::floor(fk)) % columns;
      const int k1 = (k0 + 1) % columns;
      const double f = fk - std::floor(fk);
      for (int c = 0; c < 3; ++c) {
        double col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        col = radius <= 1.0 ? 1.0 - radius * (1.0 - col) : col * 0.75;
        out.at(0, c, y, x) = col;
      }
    }
  return out;
}

Tensor depth_to_color(const Tensor& depth) {
  require(depth.n() == 1 && depth.c() == 1,
          "depth_to_color: expected [1, 1, H, W], got " + depth.shape().str());
  const int h = depth.h(), w = depth.w();
  std::vector<double> inv(h * w);
  std::vector<bool> keep(h * w);
  std::vector<double> positive;
  for (int i = 0; i < h * w; ++i) {
    const double d = depth.data()[i];
    keep[i] = d > 0.0;
    inv[i] = keep[i] ? 1.0 / d : 0.0;
    if (keep[i]) positive.push_back(inv[i]);
  }
  double top = 1.0;
  if (!positive.empty()) {
    const std::size_t k = (positive.size() - 1) * 95 / 100;
    std::nth_element(positive.begin(), positive.begin() + k, positive.end());
    top = positive[k] > 0.0 ? positive[k] : 1.0;
  }
  for (double& v : inv) v /= top;
  return heat_map(inv, keep, h, w, cv::COLORMAP_MAGMA);
}

Tensor flow_error_map(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  require(pred.shape() == gt.shape() && gt.n() == 1 && gt.c() == 2,
          "flow_error_map: flows must both be [1, 2, H, W]");
  require(valid.shape() == Shape{1, 1, gt.h(), gt.w()},
          "flow_error_map: mask must be [1, 1, H, W]");
  const int h = gt.h(), w = gt.w();
  std::vector<double> err(h * w);
  std::vector<bool> keep(h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      keep[i] = valid.at(0, 0, y, x) > 0.5;
      err[i] = std::hypot(pred.at(0, 0, y, x) - gt.at(0, 0, y, x),
                          pred.at(0, 1, y, x) - gt.at(0, 1, y, x)) / 3.0;
    }
  return heat_map(err, keep, h, w, cv::COLORMAP_JET);
}

Tensor depth_error_map(const Tensor& pred, const Tensor& gt) {
  require(pred.shape() == gt.shape() && gt.n() == 1 && gt.c() == 1,
          "depth_error_map: maps must both be [1, 1, H, W]");
  const int h = gt.h(), w = gt.w();
  std::vector<double> err(h * w);
  std::vector<bool> keep(h * w);
  for (int i = 0; i < h * w; ++i) {
    const double g = gt.data()[i];
    keep[i] = g > 0.0;
    err[i] = keep[i] ? std::abs(pred.data()[i] - g) / g / 0.25 : 0.0;
  }
  return heat_map(err, keep, h, w, cv::COLORMAP_JET);
}

Tensor plot_series(const std::vector<Series>& series, const std::string& title,
                   int width, int height, bool log_y) {
  require(width >= 200 && height >= 150, "plot_series: canvas too small");
  auto transform = [&](double y) { return log_y ? std::log10(y) : y; };
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const Series& s : series) {
    require(s.x.size() == s.y.size(),
            "plot_series: series '" + s.name + "' has mismatched lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && s.y[i] <= 0.0) continue;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, transform(s.y[i]));
      y_hi = std::max(y_hi, transform(s.y[i]));
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;

  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = width - 20, top = 40, bottom = height - 40;
  auto px = [&](double x) {
    return left + static_cast<int>((x - x_lo) / (x_hi - x_lo) * (right - left));
  };
  auto py = [&](double y) {
    return bottom -
           static_cast<int>((transform(y) - y_lo) / (y_hi - y_lo) * (bottom - top));
  };
  const cv::Scalar axis(0, 0, 0), grid(225, 225, 225);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  char label[32];
  for (int t = 0; t <= 5; ++t) {
    const int gx = left + t * (right - left) / 5;
    const int gy = bottom - t * (bottom - top) / 5;
    cv::line(canvas, {gx, top}, {gx, bottom}, grid);
    cv::line(canvas, {left, gy}, {right, gy}, grid);
    std::snprintf(label, sizeof label, "%.4g", x_lo + t * (x_hi - x_lo) / 5);
    cv::putText(canvas, label, {gx - 15, bottom + 18}, font, 0.4, axis);
    const double yv = y_lo + t * (y_hi - y_lo) / 5;
    std::snprintf(label, sizeof label, "%.4g", log_y ? std::pow(10.0, yv) : yv);
    cv::putText(canvas, label, {5, gy + 4}, font, 0.4, axis);
  }
  cv::rectangle(canvas, {left, top}, {right, bottom}, axis);
  cv::putText(canvas, title, {left, 25}, font, 0.6, axis, 1, cv::LINE_AA);

  static const std::array<cv::Scalar, 6> palette{
      cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255), cv::Scalar(44, 160, 44),
      cv::Scalar(40, 39, 214),  cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140)};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const cv::Scalar colour = palette[k % palette.size()];
    std::vector<cv::Point> points;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (!log_y || s.y[i] > 0.0) points.emplace_back(px(s.x[i]), py(s.y[i]));
    if (points.size() == 1) cv::circle(canvas, points[0], 3, colour, cv::FILLED);
    if (points.size() > 1)
      cv::polylines(canvas, points, false, colour, 2, cv::LINE_AA);
    const int ly = top + 15 + 18 * static_cast<int>(k);
    cv::line(canvas, {right - 150, ly - 4}, {right - 125, ly - 4}, colour, 2);
    cv::putText(canvas, s.name, {right - 120, ly}, font, 0.45, axis, 1,
                cv::LINE_AA);
  }
  return from_bgr(canvas);
}

}  // namespace dfnet::eval
