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

#include "image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dfnet/data.hpp"

namespace dfnet::data {
namespace {

namespace fs = std::filesystem;

cv::Mat read_raw(const fs::path& path) {
  require(fs::exists(path), "missing file " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  require(!m.empty(), "cannot decode image " + path.string());
  return m;
}

void write_raw(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  require(cv::imwrite(path.string(), m), "cannot write " + path.string());
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor read_rgb(const fs::path& path, int width, int height) {
  cv::Mat m = read_raw(path);
  const double range = m.depth() == CV_16U ? 65535.0 : 255.0;
  require(m.depth() == CV_8U || m.depth() == CV_16U,
          "unsupported pixel depth in " + path.string());
  cv::Mat f;
  m.convertTo(f, CV_64F, 1.0 / range);
  if (f.channels() == 1) cv::cvtColor(f, f, cv::COLOR_GRAY2BGR);
  if (f.channels() == 4) cv::cvtColor(f, f, cv::COLOR_BGRA2BGR);
  if (width > 0 && height > 0 && (f.cols != width || f.rows != height))
    cv::resize(f, f, cv::Size(width, height), 0, 0,
               width < f.cols ? cv::INTER_AREA : cv::INTER_LINEAR);
  Tensor t({1, 3, f.rows, f.cols});
  for (int y = 0; y < f.rows; ++y) {
    const auto* row = f.ptr<cv::Vec3d>(y);
    for (int x = 0; x < f.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = row[x][2 - c];
  }
  return t;
}

void write_rgb(const fs::path& path, const Tensor& image) {
  require(image.n() == 1 && (image.c() == 3 || image.c() == 1),
          "write_rgb: expected [1, 3, H, W] or [1, 1, H, W], got " +
              image.shape().str());
  const int h = image.h();
  const int w = image.w();
  if (image.c() == 1) {
    cv::Mat m(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at<std::uint8_t>(y, x) = to_byte(image.at(0, 0, y, x));
    write_raw(path, m);
    return;
  }
  cv::Mat m(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        m.at<cv::Vec3b>(y, x)[2 - c] = to_byte(image.at(0, c, y, x));
  write_raw(path, m);
}

std::uint16_t encode_flow_value(double value) {
  const double v = std::round(value * 64.0 + 32768.0);
  return static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
}

double decode_flow_value(std::uint16_t encoded) {
  return (static_cast<double>(encoded) - 32768.0) / 64.0;
}

FlowImage read_flow_png(const fs::path& path) {
  const cv::Mat m = read_raw(path);
  require(m.depth() == CV_16U && m.channels() == 3,
          "malformed flow image " + path.string() +
              ": expected 16-bit 3-channel PNG");
  FlowImage out{Tensor({1, 2, m.rows, m.cols}), Tensor({1, 1, m.rows, m.cols})};
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3w>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV channel order is (valid, v, u).
      const bool valid = row[x][0] > 0;
      require(row[x][0] <= 1,
              "malformed flow image " + path.string() + ": validity value " +
                  std::to_string(row[x][0]) + " at (" + std::to_string(x) +
                  ", " + std::to_string(y) + ")");
      out.valid.at(0, 0, y, x) = valid ? 1.0 : 0.0;
      if (!valid) continue;
      out.flow.at(0, 0, y, x) = decode_flow_value(row[x][2]);
      out.flow.at(0, 1, y, x) = decode_flow_value(row[x][1]);
    }
  }
  return out;
}

void write_flow_png(const fs::path& path, const Tensor& flow,
                    const Tensor& valid) {
  require(flow.n() == 1 && flow.c() == 2, "write_flow_png: flow must be [1, 2, H, W]");
  require(valid.shape() == (Shape{1, 1, flow.h(), flow.w()}),
          "write_flow_png: validity mask shape mismatch");
  cv::Mat m(flow.h(), flow.w(), CV_16UC3);
  for (int y = 0; y < flow.h(); ++y)
    for (int x = 0; x < flow.w(); ++x) {
      auto& px = m.at<cv::Vec3w>(y, x);
      const bool ok = valid.at(0, 0, y, x) > 0.5;
      px[0] = ok ? 1 : 0;
      px[1] = ok ? encode_flow_value(flow.at(0, 1, y, x)) : 0;
      px[2] = ok ? encode_flow_value(flow.at(0, 0, y, x)) : 0;
    }
  write_raw(path, m);
}

void write_inverse_depth_png(const fs::path& path, const Tensor& depth,
                             double scale) {
  cv::Mat m(depth.h(), depth.w(), CV_16UC1);
  for (int y = 0; y < depth.h(); ++y)
    for (int x = 0; x < depth.w(); ++x) {
      const double d = depth.at(0, 0, y, x);
      const double v = d > 0.0 ? std::round(scale / d) : 0.0;
      require(v <= 65535.0, "write_inverse_depth_png: depth " +
                                std::to_string(d) + " overflows the scale");
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(v);
    }
  write_raw(path, m);
}

Tensor read_inverse_depth_png(const fs::path& path, double scale) {
  const cv::Mat m = read_raw(path);
  require(m.depth() == CV_16U && m.channels() == 1,
          "malformed inverse depth image " + path.string());
  Tensor t({1, 1, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const std::uint16_t v = m.at<std::uint16_t>(y, x);
      t.at(0, 0, y, x) = v > 0 ? scale / v : 0.0;
    }
  return t;
}

void write_mask_png(const fs::path& path, const Tensor& mask) {
  cv::Mat m(mask.h(), mask.w(), CV_8UC1);
  for (int y = 0; y < mask.h(); ++y)
    for (int x = 0; x < mask.w(); ++x)
      m.at<std::uint8_t>(y, x) = mask.at(0, 0, y, x) > 0.5 ? 255 : 0;
  write_raw(path, m);
}

Tensor read_mask_png(const fs::path& path) {
  cv::Mat m = read_raw(path);
  if (m.channels() > 1) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  Tensor t({1, 1, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      t.at(0, 0, y, x) = m.at<std::uint8_t>(y, x) > 0 ? 1.0 : 0.0;
  return t;
}

}  // namespace dfnet::data
