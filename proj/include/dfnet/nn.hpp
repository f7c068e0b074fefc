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

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dfnet/autograd.hpp"

namespace dfnet::nn {

/// Ordered (module path, parameter) pairs. Paths are dot-separated.
using NamedParameters = std::vector<std::pair<std::string, Var>>;

std::int64_t count(const NamedParameters& params);

/// Square-kernel convolution with "same" padding for odd kernels.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride,
         std::mt19937_64& rng, bool with_bias = true);

  Var operator()(const Var& x) const;

  /// Deep copy with fresh parameter nodes.
  Conv2d clone() const;
  void collect(const std::string& prefix, NamedParameters& out) const;
  std::int64_t num_params() const;

  int in_channels() const { return weight_.shape().c; }
  int out_channels() const { return weight_.shape().n; }
  int kernel() const { return weight_.shape().h; }

  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
  int stride_ = 1;
  int pad_ = 0;
};

}  // namespace dfnet::nn
