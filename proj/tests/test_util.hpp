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

#include <cmath>
#include <random>
#include <vector>

#include "dfnet/nn.hpp"
#include "dfnet/tensor_core.hpp"

namespace dfnet::testing {

inline Tensor random(Shape s, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return tensor_core::random_tensor(s, rng, lo, hi);
}

/// Smooth RGB-like image in [0.1, 0.9]: a sum of a few random sinusoids.
inline Tensor smooth_image(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double fx[3], fy[3], ph[3];
      for (int k = 0; k < 3; ++k) {
        fx[k] = 0.05 + 0.25 * u(rng);
        fy[k] = 0.05 + 0.25 * u(rng);
        ph[k] = 6.283 * u(rng);
      }
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          double v = 0.0;
          for (int k = 0; k < 3; ++k) v += std::sin(fx[k] * x + fy[k] * y + ph[k]);
          t.at(n, c, y, x) = 0.5 + 0.4 * v / 3.0;
        }
    }
  return t;
}

inline tensor_core::InputSampler random_inputs(std::vector<Shape> shapes,
                                               std::uint64_t seed,
                                               double lo = -1.0,
                                               double hi = 1.0) {
  return [=](int attempt) {
    std::mt19937_64 rng(seed + 977 * attempt);
    std::vector<Tensor> out;
    for (const Shape& s : shapes)
      out.push_back(tensor_core::random_tensor(s, rng, lo, hi));
    return out;
  };
}

/// Number of parameters in `params` holding a nonzero gradient.
inline int with_gradient(const nn::NamedParameters& params) {
  int count = 0;
  for (const auto& [name, p] : params)
    if (p.has_grad() && p.grad().max_abs() > 0.0) ++count;
  return count;
}

inline void zero_grads(const nn::NamedParameters& params) {
  for (auto [name, p] : params) p.zero_grad();
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace dfnet::testing
