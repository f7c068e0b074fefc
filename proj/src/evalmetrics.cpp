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

#include "dfnet/evalmetrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "dfnet/ops.hpp"

namespace dfnet::eval {
namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

void require_map(const Tensor& t, int channels, const char* what) {
  require(t.n() == 1 && t.c() == channels,
          std::string(what) + ": expected [1, " + std::to_string(channels) +
              ", H, W], got " + t.shape().str());
}

}  // namespace

DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt,
                           const DepthEvalOptions& options) {
  require_map(pred, 1, "depth_metrics prediction");
  require_map(gt, 1, "depth_metrics ground truth");
  require(pred.shape() == gt.shape(),
          "depth_metrics: prediction " + pred.shape().str() +
              " does not match ground truth " + gt.shape().str());
  const int h = gt.h();
  const int w = gt.w();
  int y0 = 0, y1 = h, x0 = 0, x1 = w;
  if (options.garg_crop) {
    y0 = static_cast<int>(0.40810811 * h);
    y1 = static_cast<int>(0.99189189 * h);
    x0 = static_cast<int>(0.03594771 * w);
    x1 = static_cast<int>(0.96405229 * w);
  }
  std::vector<double> p, g;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double d = gt.at(0, 0, y, x);
      if (d > options.min_depth && d < options.max_depth) {
        g.push_back(d);
        p.push_back(pred.at(0, 0, y, x));
      }
    }
  require(!g.empty(), "depth_metrics: no valid ground-truth pixels");
  if (options.median_scale) {
    const double mp = median_of(p);
    require(mp > 0.0, "depth_metrics: median prediction is not positive");
    const double ratio = median_of(g) / mp;
    for (double& v : p) v *= ratio;
  }
  DepthMetrics m;
  m.pixels = g.size();
  double sq = 0.0, log_sq = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = std::clamp(p[i], options.min_depth, options.max_depth);
    const double t = g[i];
    const double diff = d - t;
    m.abs_rel += std::abs(diff) / t;
    m.sq_rel += diff * diff / t;
    sq += diff * diff;
    const double ld = std::log(d) - std::log(t);
    log_sq += ld * ld;
    const double ratio = std::max(d / t, t / d);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  const double n = static_cast<double>(g.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rms = std::sqrt(sq / n);
  m.log_rms = std::sqrt(log_sq / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

DepthMetrics mean(const std::vector<DepthMetrics>& per_image) {
  require(!per_image.empty(), "mean: no depth metrics");
  DepthMetrics m;
  for (const DepthMetrics& x : per_image) {
    m.abs_rel += x.abs_rel;
    m.sq_rel += x.sq_rel;
    m.rms += x.rms;
    m.log_rms += x.log_rms;
    m.delta1 += x.delta1;
    m.delta2 += x.delta2;
    m.delta3 += x.delta3;
    m.pixels += x.pixels;
  }
  const double n = static_cast<double>(per_image.size());
  for (double* v : {&m.abs_rel, &m.sq_rel, &m.rms, &m.log_rms, &m.delta1,
                    &m.delta2, &m.delta3})
    *v /= n;
  return m;
}

FlowMetrics flow_metrics(const Tensor& pred, const Tensor& gt,
                         const Tensor& valid, const Tensor& noc) {
  require_map(pred, 2, "flow_metrics prediction");
  require_map(gt, 2, "flow_metrics ground truth");
  require(pred.shape() == gt.shape(),
          "flow_metrics: prediction " + pred.shape().str() +
              " does not match ground truth " + gt.shape().str());
  const Shape mask{1, 1, gt.h(), gt.w()};
  require(valid.shape() == mask && noc.shape() == mask,
          "flow_metrics: masks must be " + mask.str());
  FlowMetrics m;
  double total = 0.0, total_noc = 0.0;
  std::size_t count_noc = 0;
  for (int y = 0; y < gt.h(); ++y)
    for (int x = 0; x < gt.w(); ++x) {
      if (valid.at(0, 0, y, x) <= 0.5) continue;
      const double du = pred.at(0, 0, y, x) - gt.at(0, 0, y, x);
      const double dv = pred.at(0, 1, y, x) - gt.at(0, 1, y, x);
      const double err = std::hypot(du, dv);
      const double mag = std::hypot(gt.at(0, 0, y, x), gt.at(0, 1, y, x));
      total += err;
      ++m.pixels;
      m.outliers += err > 3.0 && err > 0.05 * mag;
      if (noc.at(0, 0, y, x) > 0.5) {
        total_noc += err;
        ++count_noc;
      }
    }
  require(m.pixels > 0, "flow_metrics: no valid ground-truth pixels");
  m.epe = total / static_cast<double>(m.pixels);
  m.epe_noc = count_noc > 0 ? total_noc / static_cast<double>(count_noc)
                            : std::numeric_limits<double>::quiet_NaN();
  m.f1 = 100.0 * static_cast<double>(m.outliers) / static_cast<double>(m.pixels);
  return m;
}

double masked_epe(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  return flow_metrics(pred, gt, mask, mask).epe;
}

FlowMetrics mean(const std::vector<FlowMetrics>& per_image) {
  require(!per_image.empty(), "mean: no flow metrics");
  FlowMetrics m;
  std::size_t with_noc = 0;
  for (const FlowMetrics& x : per_image) {
    m.epe += x.epe;
    if (!std::isnan(x.epe_noc)) {
      m.epe_noc += x.epe_noc;
      ++with_noc;
    }
    m.pixels += x.pixels;
    m.outliers += x.outliers;
  }
  m.epe /= static_cast<double>(per_image.size());
  m.epe_noc = with_noc > 0 ? m.epe_noc / static_cast<double>(with_noc)
                           : std::numeric_limits<double>::quiet_NaN();
  m.f1 = 100.0 * static_cast<double>(m.outliers) / static_cast<double>(m.pixels);
  return m;
}

Tensor resize_flow(const Tensor& flow, int height, int width) {
  require_map(flow, 2, "resize_flow");
  if (flow.h() == height && flow.w() == width) return flow;
  NoGradGuard guard;
  Tensor out = ops::resize_bilinear(Var(flow), height, width).value();
  const double sx = static_cast<double>(width) / flow.w();
  const double sy = static_cast<double>(height) / flow.h();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      out.at(0, 0, y, x) *= sx;
      out.at(0, 1, y, x) *= sy;
    }
  return out;
}

Tensor resize_map(const Tensor& map, int height, int width) {
  if (map.h() == height && map.w() == width) return map;
  NoGradGuard guard;
  return ops::resize_bilinear(Var(map), height, width).value();
}

std::int64_t count_parameters(const model::MultiTaskNet& net) {
  return nn::count(net.trainable_parameters());
}

std::int64_t count_parameters(const Architecture& arch,
                              const model::ModelFlags& flags) {
  return count_parameters(model::MultiTaskNet(arch, flags, 0));
}

std::string hardware_description() {
  std::ifstream in("/proc/cpuinfo");
  std::string line, name = "unknown CPU";
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      name = line.substr(line.find(':') + 2);
      break;
    }
  return name + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads";
}

FpsReport measure_fps(const model::MultiTaskNet& net, int height, int width,
                      int runs, int warmup) {
  require(runs >= 1, "measure_fps: runs must be >= 1");
  std::mt19937_64 rng(0);
  const Tensor a = tensor_core::random_tensor({1, 3, height, width}, rng, 0, 1);
  const Tensor b = tensor_core::random_tensor({1, 3, height, width}, rng, 0, 1);
  for (int i = 0; i < warmup; ++i) net.predict(a, b);
  std::vector<double> seconds;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    net.predict(a, b);
    seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count());
  }
  FpsReport r;
  r.median_seconds = median_of(seconds);
  r.fps = 1.0 / r.median_seconds;
  r.runs = runs;
  r.height = height;
  r.width = width;
  r.hardware = hardware_description();
  return r;
}

nlohmann::json to_json(const DepthMetrics& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rms", m.rms},
          {"log_rms", m.log_rms}, {"delta1", m.delta1}, {"delta2", m.delta2},
          {"delta3", m.delta3},   {"pixels", m.pixels}};
}

nlohmann::json to_json(const FlowMetrics& m) {
  nlohmann::json j = {{"epe", m.epe}, {"f1", m.f1}, {"pixels", m.pixels},
                      {"outliers", m.outliers}};
  j["epe_noc"] = std::isnan(m.epe_noc) ? nlohmann::json(nullptr)
                                       : nlohmann::json(m.epe_noc);
  return j;
}

nlohmann::json to_json(const FpsReport& r) {
  return {{"fps", r.fps},       {"median_seconds", r.median_seconds},
          {"runs", r.runs},     {"height", r.height},
          {"width", r.width},   {"hardware", r.hardware}};
}

std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    require(row.size() == header.size(), "format_table: ragged row");
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c > 0) out << "  ";
      out << (c == 0 ? row[c] + pad : pad + row[c]);
    }
    out << "\n";
  };
  emit(header);
  std::size_t total = 2 * (header.size() - 1);
  for (std::size_t w : width) total += w;
  out << std::string(total, '-') << "\n";
  for (const auto& row : rows) emit(row);
  return out.str();
}

namespace {
std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}
}  // namespace

std::string depth_table(
    const std::vector<std::pair<std::string, DepthMetrics>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows)
    cells.push_back({name, fixed(m.abs_rel), fixed(m.sq_rel), fixed(m.rms),
                     fixed(m.log_rms), fixed(m.delta1), fixed(m.delta2),
                     fixed(m.delta3)});
  return format_table(
      {"model", "abs_rel", "sq_rel", "rms", "log_rms", "d<1.25", "d<1.25^2",
       "d<1.25^3"},
      cells);
}

std::string flow_table(
    const std::vector<std::pair<std::string, FlowMetrics>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows)
    cells.push_back({name, fixed(m.epe), fixed(m.epe_noc), fixed(m.f1, 2)});
  return format_table({"model", "epe", "epe_noc", "F1(%)"}, cells);
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  require(out.good(), "cannot append to " + path.string());
  out << record.dump() << "\n";
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(number) +
                                  ": " + e.what());
    }
  }
  return out;
}

}  // namespace dfnet::eval
