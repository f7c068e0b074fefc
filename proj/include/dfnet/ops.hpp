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

// General-purpose differentiable ops on NCHW Vars. Binary elementwise ops
// broadcast any dimension of size 1.

#pragma once

#include <span>

#include "dfnet/autograd.hpp"

namespace dfnet::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// Elementwise minimum of equal-shaped inputs; the gradient goes to the
/// smaller operand (to `a` on ties).
Var minimum(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.1);
Var elu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
/// Clamps to [lo, hi]; zero gradient outside the interval.
Var clamp(const Var& a, double lo, double hi);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& a, int begin, int count);

/// 2-D convolution with zero padding. `weight` is [Cout, Cin, k, k], `bias`
/// is [1, Cout, 1, 1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad);

/// Bilinear resize with half-pixel centres and edge clamping.
Var resize_bilinear(const Var& a, int out_h, int out_w);
Var upsample_nearest2(const Var& a);
/// 2x2 mean pooling with stride 2; H and W must be even.
Var avg_pool2(const Var& a);
/// 3x3 mean filter with reflection padding (output keeps the input size).
Var avg_pool3_reflect(const Var& a);
/// Forward differences along width: [N,C,H,W-1].
Var diff_x(const Var& a);
/// Forward differences along height: [N,C,H-1,W].
Var diff_y(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over channels: [N,1,H,W].
Var mean_channels(const Var& a);
/// Mean over the spatial plane: [N,C,1,1].
Var global_avg_pool(const Var& a);
/// Mean over every axis except batch: [N,1,1,1].
Var mean_per_item(const Var& a);

/// Constant (non-differentiable) Var.
inline Var constant(Tensor t) { return Var(std::move(t), false); }

}  // namespace dfnet::ops
