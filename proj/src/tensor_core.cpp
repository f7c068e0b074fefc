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

#include "dfnet/tensor_core.hpp"

#include <algorithm>
#include <cmath>

#include "dfnet/ops.hpp"

namespace dfnet::tensor_core {

CostVolume cost_volume(const Var& f1, const Var& f2, int radius) {
  require(radius >= 0, "cost_volume: window radius must be >= 0, got " +
                           std::to_string(radius));
  require(f1.shape() == f2.shape(), "cost_volume: feature shapes differ: " +
                                        f1.shape().str() + " vs " +
                                        f2.shape().str());
  const Shape s = f1.shape();
  require(s.c >= 1 && s.h >= 1 && s.w >= 1,
          "cost_volume: empty feature map " + s.str());
  const int side = 2 * radius + 1;
  const int offsets = side * side;
  const double inv_n = 1.0 / s.c;
  Tensor out({s.n, offsets, s.h, s.w});

  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < offsets; ++o) {
      const int dy = o / side - radius;
      const int dx = o % side - radius;
      const int y0 = std::max(0, -dy), y1 = std::min(s.h, s.h - dy);
      const int x0 = std::max(0, -dx), x1 = std::min(s.w, s.w - dx);
      double* dst = out.plane(n, o);
      for (int c = 0; c < s.c; ++c) {
        const double* a = f1.value().plane(n, c);
        const double* b = f2.value().plane(n, c);
        for (int y = y0; y < y1; ++y) {
          const double* ar = a + static_cast<std::size_t>(y) * s.w;
          const double* br = b + static_cast<std::size_t>(y + dy) * s.w + dx;
          double* dr = dst + static_cast<std::size_t>(y) * s.w;
          for (int x = x0; x < x1; ++x) dr[x] += ar[x] * br[x];
        }
      }
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] *= inv_n;
    }

  Var data = make_result(
      std::move(out), {f1, f2},
      [radius, side, offsets, inv_n](const Tensor& g,
                                     std::span<Node* const> in) {
        Node* n1 = in[0];
        Node* n2 = in[1];
        const Shape s = n1->value.shape();
        double* g1 = n1->requires_grad ? n1->grad_buffer().data() : nullptr;
        double* g2 = n2->requires_grad ? n2->grad_buffer().data() : nullptr;
        for (int n = 0; n < s.n; ++n)
          for (int o = 0; o < offsets; ++o) {
            const int dy = o / side - radius;
            const int dx = o % side - radius;
            const int y0 = std::max(0, -dy), y1 = std::min(s.h, s.h - dy);
            const int x0 = std::max(0, -dx), x1 = std::min(s.w, s.w - dx);
            const double* go = g.plane(n, o);
            for (int c = 0; c < s.c; ++c) {
              const std::size_t base = n1->value.index(n, c, 0, 0);
              const double* a = n1->value.data() + base;
              const double* b = n2->value.data() + base;
              for (int y = y0; y < y1; ++y) {
                const std::size_t ra = static_cast<std::size_t>(y) * s.w;
                const std::size_t rb =
                    static_cast<std::size_t>(y + dy) * s.w + dx;
                for (int x = x0; x < x1; ++x) {
                  const double gv = go[ra + x] * inv_n;
                  if (g1) g1[base + ra + x] += gv * b[rb + x];
                  if (g2) g2[base + rb + x] += gv * a[ra + x];
                }
              }
            }
          }
      });
  return CostVolume{std::move(data), radius, 1};
}

CostVolume concat_heads(std::span<const CostVolume> heads) {
  require(!heads.empty(), "concat_heads: no cost volumes");
  std::vector<Var> parts;
  const int radius = heads.front().radius;
  int count = 0;
  for (const CostVolume& cv : heads) {
    require(cv.radius == radius, "concat_heads: radius mismatch");
    parts.push_back(cv.data);
    count += cv.heads;
  }
  return CostVolume{ops::concat_channels(parts), radius, count};
}

namespace {

// Bilinear taps of one sample position, with out-of-bounds taps disabled.
struct Sample {
  int x0, y0;
  double wx, wy;  // weights of the x0+1 / y0+1 taps
  bool in00, in01, in10, in11;
};

Sample locate(double sx, double sy, int w, int h) {
  Sample s{};
  const double fx = std::floor(sx);
  const double fy = std::floor(sy);
  s.x0 = static_cast<int>(fx);
  s.y0 = static_cast<int>(fy);
  s.wx = sx - fx;
  s.wy = sy - fy;
  const bool x0in = s.x0 >= 0 && s.x0 < w;
  const bool x1in = s.x0 + 1 >= 0 && s.x0 + 1 < w;
  const bool y0in = s.y0 >= 0 && s.y0 < h;
  const bool y1in = s.y0 + 1 >= 0 && s.y0 + 1 < h;
  s.in00 = y0in && x0in;
  s.in01 = y0in && x1in;
  s.in10 = y1in && x0in;
  s.in11 = y1in && x1in;
  return s;
}

}  // namespace

Var warp_bilinear(const Var& src, const Var& flow) {
  const Shape ss = src.shape();
  const Shape fs = flow.shape();
  require(fs.c == 2, "warp_bilinear: flow must have 2 channels, got " +
                         fs.str());
  require(fs.n == ss.n && fs.same_spatial(ss),
          "warp_bilinear: source " + ss.str() + " and flow " + fs.str() +
              " are not spatially aligned");
  Tensor out(ss);
  const int h = ss.h;
  const int w = ss.w;
  for (int n = 0; n < ss.n; ++n) {
    const double* u = flow.value().plane(n, 0);
    const double* v = flow.value().plane(n, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const Sample sm = locate(x + u[p], y + v[p], w, h);
        const double w00 = (1 - sm.wx) * (1 - sm.wy), w01 = sm.wx * (1 - sm.wy);
        const double w10 = (1 - sm.wx) * sm.wy, w11 = sm.wx * sm.wy;
        const std::size_t i00 = static_cast<std::size_t>(sm.y0) * w + sm.x0;
        for (int c = 0; c < ss.c; ++c) {
          const double* s = src.value().plane(n, c);
          double acc = 0.0;
          if (sm.in00) acc += w00 * s[i00];
          if (sm.in01) acc += w01 * s[i00 + 1];
          if (sm.in10) acc += w10 * s[i00 + w];
          if (sm.in11) acc += w11 * s[i00 + w + 1];
          out.plane(n, c)[p] = acc;
        }
      }
  }
  return make_result(
      std::move(out), {src, flow},
      [](const Tensor& g, std::span<Node* const> in) {
        Node* ns = in[0];
        Node* nf = in[1];
        const Shape ss = ns->value.shape();
        const int h = ss.h;
        const int w = ss.w;
        Tensor* gs = ns->requires_grad ? &ns->grad_buffer() : nullptr;
        Tensor* gf = nf->requires_grad ? &nf->grad_buffer() : nullptr;
        for (int n = 0; n < ss.n; ++n) {
          const double* u = nf->value.plane(n, 0);
          const double* v = nf->value.plane(n, 1);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
              const std::size_t p = static_cast<std::size_t>(y) * w + x;
              const Sample sm = locate(x + u[p], y + v[p], w, h);
              const double w00 = (1 - sm.wx) * (1 - sm.wy);
              const double w01 = sm.wx * (1 - sm.wy);
              const double w10 = (1 - sm.wx) * sm.wy;
              const double w11 = sm.wx * sm.wy;
              const std::size_t i00 =
                  static_cast<std::size_t>(sm.y0) * w + sm.x0;
              double du = 0.0;
              double dv = 0.0;
              for (int c = 0; c < ss.c; ++c) {
                const double go = g.plane(n, c)[p];
                if (go == 0.0) continue;
                const double* s = ns->value.plane(n, c);
                const double v00 = sm.in00 ? s[i00] : 0.0;
                const double v01 = sm.in01 ? s[i00 + 1] : 0.0;
                const double v10 = sm.in10 ? s[i00 + w] : 0.0;
                const double v11 = sm.in11 ? s[i00 + w + 1] : 0.0;
                if (gs) {
                  double* d = gs->plane(n, c);
                  if (sm.in00) d[i00] += go * w00;
                  if (sm.in01) d[i00 + 1] += go * w01;
                  if (sm.in10) d[i00 + w] += go * w10;
                  if (sm.in11) d[i00 + w + 1] += go * w11;
                }
                du += go * ((1 - sm.wy) * (v01 - v00) + sm.wy * (v11 - v10));
                dv += go * ((1 - sm.wx) * (v10 - v00) + sm.wx * (v11 - v01));
              }
              if (gf) {
                gf->plane(n, 0)[p] += du;
                gf->plane(n, 1)[p] += dv;
              }
            }
        }
      });
}

Var upsample_flow(const Var& flow, int factor) {
  require(factor == 2, "upsample_flow: only factor 2 is supported");
  require(flow.shape().c == 2, "upsample_flow: flow must have 2 channels");
  const Shape s = flow.shape();
  return ops::scale(ops::resize_bilinear(flow, s.h * 2, s.w * 2), 2.0);
}

Var normalize_01(const Var& f) {
  require(f.value().all_finite(), "normalize_01: non-finite input");
  const Shape s = f.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  Tensor out(s);
  std::vector<std::size_t> argmin(s.n), argmax(s.n);
  std::vector<double> range(s.n);
  for (int n = 0; n < s.n; ++n) {
    const double* x = f.value().plane(n, 0);
    const auto [mn, mx] = std::minmax_element(x, x + per);
    argmin[n] = static_cast<std::size_t>(mn - x);
    argmax[n] = static_cast<std::size_t>(mx - x);
    range[n] = *mx - *mn;
    double* y = out.plane(n, 0);
    if (range[n] > 0.0) {
      for (std::size_t i = 0; i < per; ++i) y[i] = (x[i] - *mn) / range[n];
    }
  }
  const Tensor normalized = out;
  return make_result(
      std::move(out), {f},
      [normalized, argmin, argmax, range, per](const Tensor& g,
                                               std::span<Node* const> in) {
        Tensor& gi = in[0]->grad_buffer();
        for (int n = 0; n < g.n(); ++n) {
          if (range[n] <= 0.0) continue;
          const double r = range[n];
          const double* gy = g.plane(n, 0);
          const double* y = normalized.plane(n, 0);
          double* gx = gi.plane(n, 0);
          double to_min = 0.0;
          double to_max = 0.0;
          for (std::size_t i = 0; i < per; ++i) {
            gx[i] += gy[i] / r;
            to_min += gy[i] * (y[i] - 1.0) / r;
            to_max -= gy[i] * y[i] / r;
          }
          gx[argmin[n]] += to_min;
          gx[argmax[n]] += to_max;
        }
      });
}

// ---------------------------------------------------------------------------

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

namespace {

double projected(const Var& out, const Tensor& weights) {
  const Tensor& v = out.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) acc += v[i] * weights[i];
  return acc;
}

}  // namespace

GradCheckResult grad_check(const CheckedFunction& fn,
                           const InputSampler& sampler,
                           const GradCheckOptions& options) {
  GradCheckResult result;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    std::vector<Tensor> raw = sampler(attempt);
    std::vector<Var> inputs;
    for (Tensor& t : raw) inputs.emplace_back(t, true);

    Var out = fn(inputs);
    std::mt19937_64 rng(0x5eed + attempt);
    const Tensor weights = out.value().numel() == 1
                               ? Tensor(out.shape(), 1.0)
                               : random_tensor(out.shape(), rng, 0.5, 1.5);
    backward(out, weights);

    std::vector<double> analytic, numeric, forward_diff, backward_diff;
    {
      NoGradGuard no_grad;
      const double h = options.step;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<Var> probe;
        for (const Tensor& t : raw) probe.emplace_back(t, false);
        const double f0 = projected(fn(probe), weights);
        Tensor& x = probe[k].mutable_value();
        for (std::size_t i = 0; i < x.numel(); ++i) {
          const double saved = x[i];
          x[i] = saved + h;
          const double fp = projected(fn(probe), weights);
          x[i] = saved - h;
          const double fm = projected(fn(probe), weights);
          x[i] = saved;
          numeric.push_back((fp - fm) / (2 * h));
          forward_diff.push_back((fp - f0) / h);
          backward_diff.push_back((f0 - fm) / h);
          analytic.push_back(inputs[k].has_grad() ? inputs[k].grad()[i] : 0.0);
        }
      }
    }

    double scale = 0.0;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    const double floor = std::max(options.relative_floor * scale, 1e-12);
    bool kink = false;
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
      const double kd = std::max(
          {std::abs(forward_diff[i]), std::abs(backward_diff[i]), floor});
      if (std::abs(forward_diff[i] - backward_diff[i]) / kd >
          options.kink_tolerance) {
        kink = true;
      }
    }
    result.max_relative_error = worst;
    result.retries = attempt;
    result.kink_detected = kink;
    result.elements_checked = numeric.size();
    if (!kink) break;
  }
  return result;
}

}  // namespace dfnet::tensor_core
