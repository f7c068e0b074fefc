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

#include "dfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dfnet {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "x" + std::to_string(c) + "x" +
         std::to_string(h) + "x" + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
          "negative tensor dimension " + shape.str());
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  require(data_.size() == shape.numel(),
          "value count " + std::to_string(data_.size()) +
              " does not match shape " + shape.str());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_scaled(const Tensor& other, double scale) {
  require(other.shape_ == shape_, "add_scaled shape mismatch " +
                                      shape_.str() + " vs " +
                                      other.shape_.str());
  const double* src = other.data();
  double* dst = data();
  const std::size_t count = data_.size();
  if (scale == 1.0) {
    for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
  } else {
    for (std::size_t i = 0; i < count; ++i) dst[i] += scale * src[i];
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::max(m, v);
  return m;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor Tensor::batch_item(int n) const {
  require(n >= 0 && n < shape_.n, "batch index out of range");
  Tensor out({1, shape_.c, shape_.h, shape_.w});
  const std::size_t stride = out.numel();
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(n * stride), stride,
              out.data_.begin());
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  require(!items.empty(), "stack of zero tensors");
  Shape s = items.front().shape();
  int total = 0;
  for (const Tensor& t : items) {
    require(t.c() == s.c && t.h() == s.h && t.w() == s.w,
            "stack shape mismatch " + t.shape().str() + " vs " + s.str());
    total += t.n();
  }
  s.n = total;
  Tensor out(s);
  auto it = out.data_.begin();
  for (const Tensor& t : items) it = std::copy(t.data_.begin(), t.data_.end(), it);
  return out;
}

}  // namespace dfnet
