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

#include "dfnet/nn.hpp"

#include <cmath>

#include "dfnet/ops.hpp"

namespace dfnet::nn {

std::int64_t count(const NamedParameters& params) {
  std::int64_t total = 0;
  for (const auto& [name, p] : params)
    total += static_cast<std::int64_t>(p.value().numel());
  return total;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride,
               std::mt19937_64& rng, bool with_bias)
    : stride_(stride), pad_(kernel / 2) {
  require(in_channels >= 1 && out_channels >= 1 && kernel >= 1 && stride >= 1,
          "Conv2d: invalid configuration");
  // He-uniform weights; PyTorch-style bias range.
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  std::uniform_real_distribution<double> w_dist(-std::sqrt(6.0 / fan_in),
                                                std::sqrt(6.0 / fan_in));
  Tensor w({out_channels, in_channels, kernel, kernel});
  for (double& v : w.values()) v = w_dist(rng);
  weight_ = Var(std::move(w), true);
  if (with_bias) {
    std::uniform_real_distribution<double> b_dist(-1.0 / std::sqrt(fan_in),
                                                  1.0 / std::sqrt(fan_in));
    Tensor b({1, out_channels, 1, 1});
    for (double& v : b.values()) v = b_dist(rng);
    bias_ = Var(std::move(b), true);
  }
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, weight_, bias_, stride_, pad_);
}

Conv2d Conv2d::clone() const {
  Conv2d copy;
  copy.stride_ = stride_;
  copy.pad_ = pad_;
  copy.weight_ = Var(weight_.value(), true);
  if (bias_.defined()) copy.bias_ = Var(bias_.value(), true);
  return copy;
}

void Conv2d::collect(const std::string& prefix, NamedParameters& out) const {
  out.emplace_back(prefix + ".weight", weight_);
  if (bias_.defined()) out.emplace_back(prefix + ".bias", bias_);
}

std::int64_t Conv2d::num_params() const {
  std::int64_t n = static_cast<std::int64_t>(weight_.value().numel());
  if (bias_.defined()) n += static_cast<std::int64_t>(bias_.value().numel());
  return n;
}

}  // namespace dfnet::nn
