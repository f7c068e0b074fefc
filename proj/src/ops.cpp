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

#include "dfnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

namespace dfnet::ops {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::array<std::size_t, 4> sa{};
  std::array<std::size_t, 4> sb{};
  bool same = false;
};

std::array<std::size_t, 4> strides_for(const Shape& s, const Shape& out) {
  const std::array<int, 4> d{s.n, s.c, s.h, s.w};
  const std::array<int, 4> o{out.n, out.c, out.h, out.w};
  std::array<std::size_t, 4> st{};
  std::size_t acc = 1;
  for (int k = 3; k >= 0; --k) {
    st[k] = (d[k] == 1 && o[k] != 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(d[k]);
  }
  return st;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  bc.same = a == b;
  const std::array<int, 4> da{a.n, a.c, a.h, a.w};
  const std::array<int, 4> db{b.n, b.c, b.h, b.w};
  std::array<int, 4> o{};
  for (int k = 0; k < 4; ++k) {
    require(da[k] == db[k] || da[k] == 1 || db[k] == 1,
            std::string(op) + ": shapes " + a.str() + " and " + b.str() +
                " do not broadcast");
    o[k] = std::max(da[k], db[k]);
  }
  bc.out = {o[0], o[1], o[2], o[3]};
  bc.sa = strides_for(a, bc.out);
  bc.sb = strides_for(b, bc.out);
  return bc;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  if (bc.same) {
    const std::size_t count = bc.out.numel();
    for (std::size_t i = 0; i < count; ++i) f(i, i, i);
    return;
  }
  std::size_t i = 0;
  for (int n = 0; n < bc.out.n; ++n)
    for (int c = 0; c < bc.out.c; ++c)
      for (int y = 0; y < bc.out.h; ++y) {
        std::size_t ia = n * bc.sa[0] + c * bc.sa[1] + y * bc.sa[2];
        std::size_t ib = n * bc.sb[0] + c * bc.sb[1] + y * bc.sb[2];
        for (int x = 0; x < bc.out.w; ++x, ++i) {
          f(i, ia + x * bc.sa[3], ib + x * bc.sb[3]);
        }
      }
}

template <typename Fwd, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, DA da,
           DB db) {
  const Broadcast bc = broadcast(a.shape(), b.shape(), name);
  Tensor out(bc.out);
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.data();
  for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    po[i] = fwd(pa[ia], pb[ib]);
  });
  return make_result(
      std::move(out), {a, b},
      [bc, da, db](const Tensor& g, std::span<Node* const> in) {
        Node* na = in[0];
        Node* nb = in[1];
        const double* pa = na->value.data();
        const double* pb = nb->value.data();
        const double* pg = g.data();
        double* ga = na->requires_grad ? na->grad_buffer().data() : nullptr;
        double* gb = nb->requires_grad ? nb->grad_buffer().data() : nullptr;
        for_each_broadcast(
            bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
              if (ga) ga[ia] += pg[i] * da(pa[ia], pb[ib]);
              if (gb) gb[ib] += pg[i] * db(pa[ia], pb[ib]);
            });
      });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const double* pa = a.value().data();
  double* po = out.data();
  const std::size_t count = out.numel();
  for (std::size_t i = 0; i < count; ++i) po[i] = fwd(pa[i]);
  // The output value is captured by the closure only through the node; we
  // recompute y from x to avoid holding a second copy.
  return make_result(std::move(out), {a},
                     [fwd, deriv](const Tensor& g, std::span<Node* const> in) {
                       Node* na = in[0];
                       const double* px = na->value.data();
                       const double* pg = g.data();
                       double* ga = na->grad_buffer().data();
                       const std::size_t count = g.numel();
                       for (std::size_t i = 0; i < count; ++i) {
                         ga[i] += pg[i] * deriv(px[i], fwd(px[i]));
                       }
                     });
}

// ---------------------------------------------------------------------------
// im2col / col2im for one batch item.

// Output columns [lo, hi) read inside the input row for kernel column kx.
std::pair<int, int> valid_columns(int w, int wo, int stride, int pad, int kx) {
  const int lo = std::clamp((pad - kx + stride - 1) / stride, 0, wo);
  const int last = w - 1 + pad - kx;
  if (last < 0) return {lo, lo};
  const int hi = std::clamp(last / stride + 1, lo, wo);
  return {lo, hi};
}

void im2col(const double* x, int cin, int h, int w, int k, int stride,
            int pad, int ho, int wo, double* col) {
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) *
                                plane_out;
        const auto [lo, hi] = valid_columns(w, wo, stride, pad, kx);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * w - pad + kx;
          std::fill(dst, dst + lo, 0.0);
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, 0.0);
        }
      }
  }
}

void col2im(const double* col, int cin, int h, int w, int k, int stride,
            int pad, int ho, int wo, double* x) {
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane_out;
        const auto [lo, hi] = valid_columns(w, wo, stride, pad, kx);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * wo;
          double* dst = xc + static_cast<std::size_t>(iy) * w - pad + kx;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
        }
      }
  }
}

// Precomputed 1-D linear interpolation taps for half-pixel-centre resizing.
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

Taps make_taps(int in, int out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.w1[o] = src - i0;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var minimum(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "minimum: shape mismatch " +
                                      a.shape().str() + " vs " +
                                      b.shape().str());
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Var scale(const Var& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape s = parts.front().shape();
  int channels = 0;
  for (const Var& p : parts) {
    require(p.shape().n == s.n && p.shape().same_spatial(s),
            "concat_channels: mismatch " + p.shape().str() + " vs " +
                s.str());
    channels += p.shape().c;
  }
  s.c = channels;
  Tensor out(s);
  std::vector<int> offsets;
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    int off = 0;
    for (const Var& p : parts) {
      const std::size_t count = plane * p.shape().c;
      std::copy_n(p.value().plane(n, 0), count, out.plane(n, off));
      off += p.shape().c;
    }
  }
  int off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    off += p.shape().c;
  }
  return make_result(
      std::move(out), std::vector<Var>(parts.begin(), parts.end()),
      [offsets](const Tensor& g, std::span<Node* const> in) {
        const std::size_t plane = g.shape().plane();
        for (std::size_t k = 0; k < in.size(); ++k) {
          Node* node = in[k];
          if (!node->requires_grad) continue;
          Tensor& gi = node->grad_buffer();
          const int cs = node->value.c();
          for (int n = 0; n < g.n(); ++n) {
            const double* src = g.plane(n, offsets[k]);
            double* dst = gi.plane(n, 0);
            for (std::size_t i = 0; i < plane * cs; ++i) dst[i] += src[i];
          }
        }
      });
}

Var slice_channels(const Var& a, int begin, int count) {
  const Shape& s = a.shape();
  require(begin >= 0 && count >= 1 && begin + count <= s.c,
          "slice_channels: range out of bounds for " + s.str());
  Tensor out({s.n, count, s.h, s.w});
  const std::size_t len = s.plane() * count;
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(a.value().plane(n, begin), len, out.plane(n, 0));
  }
  return make_result(std::move(out), {a},
                     [begin, count](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const std::size_t len = g.shape().plane() * count;
                       for (int n = 0; n < g.n(); ++n) {
                         const double* src = g.plane(n, 0);
                         double* dst = gi.plane(n, begin);
                         for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                       }
                     });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(ws.h == ws.w, "conv2d: kernel must be square");
  require(ws.c == xs.c, "conv2d: input has " + std::to_string(xs.c) +
                            " channels, weight expects " +
                            std::to_string(ws.c));
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/pad");
  const int k = ws.h;
  const int cout = ws.n;
  const int cin = xs.c;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: input " + xs.str() +
                                  " too small for kernel " +
                                  std::to_string(k));
  if (bias.defined()) {
    require(bias.shape() == Shape{1, cout, 1, 1}, "conv2d: bias shape");
  }
  const bool pointwise = k == 1 && stride == 1 && pad == 0;
  const int kk = cin * k * k;
  const std::size_t p_out = static_cast<std::size_t>(ho) * wo;

  Tensor out({xs.n, cout, ho, wo});
  ConstMap wmat(weight.value().data(), cout, kk);
  RowMatrix col;
  if (!pointwise) col.resize(kk, static_cast<Eigen::Index>(p_out));
  for (int n = 0; n < xs.n; ++n) {
    MutMap y(out.plane(n, 0), cout, static_cast<Eigen::Index>(p_out));
    if (pointwise) {
      ConstMap xm(x.value().plane(n, 0), cin, static_cast<Eigen::Index>(p_out));
      y.noalias() = wmat * xm;
    } else {
      im2col(x.value().plane(n, 0), cin, xs.h, xs.w, k, stride, pad, ho, wo,
             col.data());
      y.noalias() = wmat * col;
    }
    if (bias.defined()) {
      const double* b = bias.value().data();
      for (int c = 0; c < cout; ++c) y.row(c).array() += b[c];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      std::move(out), std::move(inputs),
      [=](const Tensor& g, std::span<Node* const> in) {
        Node* nx = in[0];
        Node* nw = in[1];
        Node* nb = in.size() > 2 ? in[2] : nullptr;
        const Shape& xs = nx->value.shape();
        ConstMap wmat(nw->value.data(), cout, kk);
        RowMatrix col;
        RowMatrix dcol;
        if (!pointwise) col.resize(kk, static_cast<Eigen::Index>(p_out));
        for (int n = 0; n < xs.n; ++n) {
          ConstMap gy(g.plane(n, 0), cout, static_cast<Eigen::Index>(p_out));
          if (nb && nb->requires_grad) {
            double* gb = nb->grad_buffer().data();
            for (int c = 0; c < cout; ++c) gb[c] += gy.row(c).sum();
          }
          if (nw->requires_grad) {
            MutMap gw(nw->grad_buffer().data(), cout, kk);
            if (pointwise) {
              ConstMap xm(nx->value.plane(n, 0), cin,
                          static_cast<Eigen::Index>(p_out));
              gw.noalias() += gy * xm.transpose();
            } else {
              im2col(nx->value.plane(n, 0), cin, xs.h, xs.w, k, stride, pad,
                     ho, wo, col.data());
              gw.noalias() += gy * col.transpose();
            }
          }
          if (nx->requires_grad) {
            if (pointwise) {
              MutMap gx(nx->grad_buffer().plane(n, 0), cin,
                        static_cast<Eigen::Index>(p_out));
              gx.noalias() += wmat.transpose() * gy;
            } else {
              dcol.noalias() = wmat.transpose() * gy;
              col2im(dcol.data(), cin, xs.h, xs.w, k, stride, pad, ho, wo,
                     nx->grad_buffer().plane(n, 0));
            }
          }
        }
      });
}

Var resize_bilinear(const Var& a, int out_h, int out_w) {
  const Shape& s = a.shape();
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: invalid output size");
  const Taps ty = make_taps(s.h, out_h);
  const Taps tx = make_taps(s.w, out_w);
  Tensor out({s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const double* r0 = src + static_cast<std::size_t>(ty.i0[y]) * s.w;
        const double* r1 = src + static_cast<std::size_t>(ty.i1[y]) * s.w;
        const double wy = ty.w1[y];
        for (int x = 0; x < out_w; ++x) {
          const double wx = tx.w1[x];
          const double top = r0[tx.i0[x]] * (1 - wx) + r0[tx.i1[x]] * wx;
          const double bot = r1[tx.i0[x]] * (1 - wx) + r1[tx.i1[x]] * wx;
          dst[static_cast<std::size_t>(y) * out_w + x] =
              top * (1 - wy) + bot * wy;
        }
      }
    }
  return make_result(
      std::move(out), {a},
      [ty, tx, out_h, out_w](const Tensor& g, std::span<Node* const> in) {
        Tensor& gi = in[0]->grad_buffer();
        const int w = gi.w();
        for (int n = 0; n < g.n(); ++n)
          for (int c = 0; c < g.c(); ++c) {
            const double* src = g.plane(n, c);
            double* dst = gi.plane(n, c);
            for (int y = 0; y < out_h; ++y) {
              double* r0 = dst + static_cast<std::size_t>(ty.i0[y]) * w;
              double* r1 = dst + static_cast<std::size_t>(ty.i1[y]) * w;
              const double wy = ty.w1[y];
              for (int x = 0; x < out_w; ++x) {
                const double v = src[static_cast<std::size_t>(y) * out_w + x];
                const double wx = tx.w1[x];
                r0[tx.i0[x]] += v * (1 - wy) * (1 - wx);
                r0[tx.i1[x]] += v * (1 - wy) * wx;
                r1[tx.i0[x]] += v * wy * (1 - wx);
                r1[tx.i1[x]] += v * wy * wx;
              }
            }
          }
      });
}

Var upsample_nearest2(const Var& a) {
  const Shape& s = a.shape();
  Tensor out({s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < 2 * s.h; ++y)
        for (int x = 0; x < 2 * s.w; ++x)
          dst[static_cast<std::size_t>(y) * 2 * s.w + x] =
              src[static_cast<std::size_t>(y / 2) * s.w + x / 2];
    }
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const int w = gi.w();
                       for (int n = 0; n < g.n(); ++n)
                         for (int c = 0; c < g.c(); ++c) {
                           const double* src = g.plane(n, c);
                           double* dst = gi.plane(n, c);
                           for (int y = 0; y < g.h(); ++y)
                             for (int x = 0; x < g.w(); ++x)
                               dst[static_cast<std::size_t>(y / 2) * w + x / 2] +=
                                   src[static_cast<std::size_t>(y) * g.w() + x];
                         }
                     });
}

Var avg_pool2(const Var& a) {
  const Shape& s = a.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0,
          "avg_pool2: spatial size must be even, got " + s.str());
  const int ho = s.h / 2;
  const int wo = s.w / 2;
  Tensor out({s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
          const double* p = src + static_cast<std::size_t>(2 * y) * s.w + 2 * x;
          dst[static_cast<std::size_t>(y) * wo + x] =
              0.25 * (p[0] + p[1] + p[s.w] + p[s.w + 1]);
        }
    }
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const int w = gi.w();
                       for (int n = 0; n < g.n(); ++n)
                         for (int c = 0; c < g.c(); ++c) {
                           const double* src = g.plane(n, c);
                           double* dst = gi.plane(n, c);
                           for (int y = 0; y < g.h(); ++y)
                             for (int x = 0; x < g.w(); ++x) {
                               const double v =
                                   0.25 *
                                   src[static_cast<std::size_t>(y) * g.w() + x];
                               double* p = dst +
                                           static_cast<std::size_t>(2 * y) * w +
                                           2 * x;
                               p[0] += v;
                               p[1] += v;
                               p[w] += v;
                               p[w + 1] += v;
                             }
                         }
                     });
}

namespace {

// Three-tap box sum along a row with reflected borders.
void box3_row(const double* src, double* dst, int n) {
  dst[0] = src[0] + 2.0 * src[1];
  for (int i = 1; i + 1 < n; ++i) dst[i] = src[i - 1] + src[i] + src[i + 1];
  dst[n - 1] = src[n - 1] + 2.0 * src[n - 2];
}

// Adjoint of box3_row, accumulated into dst.
void box3_row_adjoint(const double* g, double* dst, int n) {
  dst[0] += g[0] + g[1];
  for (int i = 1; i + 1 < n; ++i) dst[i] += g[i - 1] + g[i] + g[i + 1];
  dst[n - 1] += g[n - 2] + g[n - 1];
  dst[1] += g[0];
  dst[n - 2] += g[n - 1];
}

void add_rows(double* dst, const double* a, const double* b, const double* c,
              int w) {
  for (int x = 0; x < w; ++x) dst[x] = a[x] + b[x] + c[x];
}

}  // namespace

Var avg_pool3_reflect(const Var& a) {
  const Shape& s = a.shape();
  require(s.h >= 2 && s.w >= 2, "avg_pool3_reflect: input too small " +
                                    s.str());
  Tensor out(s);
  const int h = s.h;
  const int w = s.w;
  std::vector<double> rows(static_cast<std::size_t>(h) * w);
  auto row = [&](int y) { return rows.data() + static_cast<std::size_t>(y) * w; };
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < h; ++y)
        box3_row(src + static_cast<std::size_t>(y) * w, row(y), w);
      for (int y = 0; y < h; ++y) {
        const int up = y == 0 ? 1 : y - 1;
        const int down = y == h - 1 ? h - 2 : y + 1;
        double* d = dst + static_cast<std::size_t>(y) * w;
        add_rows(d, row(up), row(y), row(down), w);
        for (int x = 0; x < w; ++x) d[x] /= 9.0;
      }
    }
  return make_result(
      std::move(out), {a}, [](const Tensor& g, std::span<Node* const> in) {
        Tensor& gi = in[0]->grad_buffer();
        const int h = g.h();
        const int w = g.w();
        std::vector<double> cols(static_cast<std::size_t>(h) * w);
        std::vector<double> zero(static_cast<std::size_t>(w), 0.0);
        auto col = [&](int y) {
          return cols.data() + static_cast<std::size_t>(y) * w;
        };
        for (int n = 0; n < g.n(); ++n)
          for (int c = 0; c < g.c(); ++c) {
            const double* src = g.plane(n, c);
            auto grow = [&](int y) {
              return y < 0 || y >= h
                         ? zero.data()
                         : src + static_cast<std::size_t>(y) * w;
            };
            for (int y = 0; y < h; ++y)
              add_rows(col(y), grow(y - 1), grow(y), grow(y + 1), w);
            for (int x = 0; x < w; ++x) {
              col(1)[x] += grow(0)[x];
              col(h - 2)[x] += grow(h - 1)[x];
            }
            for (double& v : cols) v /= 9.0;
            double* dst = gi.plane(n, c);
            for (int y = 0; y < h; ++y)
              box3_row_adjoint(col(y), dst + static_cast<std::size_t>(y) * w,
                               w);
          }
      });
}

Var diff_x(const Var& a) {
  const Shape& s = a.shape();
  require(s.w >= 2, "diff_x: width must be >= 2");
  Tensor out({s.n, s.c, s.h, s.w - 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w - 1; ++x)
          out.at(n, c, y, x) = a.value().at(n, c, y, x + 1) -
                               a.value().at(n, c, y, x);
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       for (int n = 0; n < g.n(); ++n)
                         for (int c = 0; c < g.c(); ++c)
                           for (int y = 0; y < g.h(); ++y)
                             for (int x = 0; x < g.w(); ++x) {
                               const double v = g.at(n, c, y, x);
                               gi.at(n, c, y, x + 1) += v;
                               gi.at(n, c, y, x) -= v;
                             }
                     });
}

Var diff_y(const Var& a) {
  const Shape& s = a.shape();
  require(s.h >= 2, "diff_y: height must be >= 2");
  Tensor out({s.n, s.c, s.h - 1, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h - 1; ++y)
        for (int x = 0; x < s.w; ++x)
          out.at(n, c, y, x) = a.value().at(n, c, y + 1, x) -
                               a.value().at(n, c, y, x);
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       for (int n = 0; n < g.n(); ++n)
                         for (int c = 0; c < g.c(); ++c)
                           for (int y = 0; y < g.h(); ++y)
                             for (int x = 0; x < g.w(); ++x) {
                               const double v = g.at(n, c, y, x);
                               gi.at(n, c, y + 1, x) += v;
                               gi.at(n, c, y, x) -= v;
                             }
                     });
}

Var sum(const Var& a) {
  Tensor out({1, 1, 1, 1}, a.value().sum());
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const double v = g[0];
                       for (double& x : gi.values()) x += v;
                     });
}

Var mean(const Var& a) {
  const double count = static_cast<double>(a.value().numel());
  require(count > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / count);
}

Var mean_channels(const Var& a) {
  const Shape& s = a.shape();
  Tensor out({s.n, 1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    double* dst = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] /= s.c;
  }
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const int cs = gi.c();
                       const std::size_t plane = g.shape().plane();
                       for (int n = 0; n < g.n(); ++n) {
                         const double* src = g.plane(n, 0);
                         for (int c = 0; c < cs; ++c) {
                           double* dst = gi.plane(n, c);
                           for (std::size_t i = 0; i < plane; ++i)
                             dst[i] += src[i] / cs;
                         }
                       }
                     });
}

Var global_avg_pool(const Var& a) {
  const Shape& s = a.shape();
  Tensor out({s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = a.value().plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out.at(n, c, 0, 0) = acc / static_cast<double>(plane);
    }
  return make_result(std::move(out), {a},
                     [](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       const std::size_t plane = gi.shape().plane();
                       for (int n = 0; n < g.n(); ++n)
                         for (int c = 0; c < g.c(); ++c) {
                           const double v =
                               g.at(n, c, 0, 0) / static_cast<double>(plane);
                           double* dst = gi.plane(n, c);
                           for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
                         }
                     });
}

Var mean_per_item(const Var& a) {
  const Shape& s = a.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  Tensor out({s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    const double* src = a.value().plane(n, 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += src[i];
    out[n] = acc / static_cast<double>(per);
  }
  return make_result(std::move(out), {a},
                     [per](const Tensor& g, std::span<Node* const> in) {
                       Tensor& gi = in[0]->grad_buffer();
                       for (int n = 0; n < g.n(); ++n) {
                         const double v = g[n] / static_cast<double>(per);
                         double* dst = gi.plane(n, 0);
                         for (std::size_t i = 0; i < per; ++i) dst[i] += v;
                       }
                     });
}

}  // namespace dfnet::ops
