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

#include "dfnet/backbone.hpp"

#include "dfnet/ops.hpp"

namespace dfnet {

Architecture Architecture::by_name(const std::string& name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw std::invalid_argument("unknown architecture profile '" + name +
                              "' (expected full|desk)");
}

namespace backbone {

Var normalize_image(const Var& frame) {
  return ops::scale(ops::add_scalar(frame, -0.45), 1.0 / 0.225);
}

Encoder::Encoder(const std::array<int, 5>& widths, std::mt19937_64& rng)
    : widths_(widths) {
  int in = 3;
  for (int k = 0; k < kEncoderStages; ++k) {
    down_[k] = nn::Conv2d(in, widths[k], 3, 2, rng);
    refine_[k] = nn::Conv2d(widths[k], widths[k], 3, 1, rng);
    in = widths[k];
  }
}

FeaturePyramid Encoder::encode(const Var& frame) const {
  const Shape& s = frame.shape();
  require(s.c == 3, "encode: expected an RGB frame, got " + s.str());
  if (s.h % kInputMultiple != 0 || s.w % kInputMultiple != 0) {
    const int ph = (kInputMultiple - s.h % kInputMultiple) % kInputMultiple;
    const int pw = (kInputMultiple - s.w % kInputMultiple) % kInputMultiple;
    throw std::invalid_argument(
        "encode: frame " + std::to_string(s.w) + "x" + std::to_string(s.h) +
        " is not divisible by " + std::to_string(kInputMultiple) +
        "; pad by " + std::to_string(pw) + " columns and " +
        std::to_string(ph) + " rows");
  }
  FeaturePyramid pyr;
  Var x = normalize_image(frame);
  for (int k = 0; k < kEncoderStages; ++k) {
    x = ops::leaky_relu(down_[k](x));
    x = ops::leaky_relu(refine_[k](x));
    pyr.stages[k] = x;
  }
  return pyr;
}

void Encoder::collect(const std::string& prefix,
                      nn::NamedParameters& out) const {
  for (int k = 0; k < kEncoderStages; ++k) {
    const std::string stage = prefix + ".stage" + std::to_string(k + 1);
    down_[k].collect(stage + ".down", out);
    refine_[k].collect(stage + ".refine", out);
  }
}

Motion PoseEstimate::motion(int n) const {
  const Tensor& p = params.value();
  Motion m;
  m.rotation = {p.at(n, 0, 0, 0), p.at(n, 1, 0, 0), p.at(n, 2, 0, 0)};
  m.translation = {p.at(n, 3, 0, 0), p.at(n, 4, 0, 0), p.at(n, 5, 0, 0)};
  return m;
}

PoseNet::PoseNet(const std::array<int, 5>& widths, std::mt19937_64& rng) {
  int in = 6;
  for (int k = 0; k < 5; ++k) {
    convs_[k] = nn::Conv2d(in, widths[k], 3, 2, rng);
    in = widths[k];
  }
  head_ = nn::Conv2d(in, 6, 1, 1, rng);
}

PoseEstimate PoseNet::estimate(const Var& frame_t, const Var& frame_s) const {
  require(frame_t.shape() == frame_s.shape(),
          "estimate_pose: frame shapes differ: " + frame_t.shape().str() +
              " vs " + frame_s.shape().str());
  const std::array<Var, 2> pair{normalize_image(frame_t),
                                normalize_image(frame_s)};
  Var x = ops::concat_channels(pair);
  for (const nn::Conv2d& conv : convs_) x = ops::relu(conv(x));
  return {ops::scale(ops::global_avg_pool(head_(x)), 0.01)};
}

void PoseNet::collect(const std::string& prefix,
                      nn::NamedParameters& out) const {
  for (int k = 0; k < 5; ++k)
    convs_[k].collect(prefix + ".conv" + std::to_string(k + 1), out);
  head_.collect(prefix + ".head", out);
}

}  // namespace backbone
}  // namespace dfnet
