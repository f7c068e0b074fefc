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

#include "dfnet/decoders.hpp"

#include "dfnet/ops.hpp"

namespace dfnet::decoders {

double disparity_to_depth(double disparity, double min_depth,
                          double max_depth) {
  const double b = 1.0 / max_depth;
  const double a = 1.0 / min_depth - b;
  return 1.0 / (a * disparity + b);
}

Var disparity_to_depth(const Var& disparity, double min_depth,
                       double max_depth) {
  const double b = 1.0 / max_depth;
  const double a = 1.0 / min_depth - b;
  const Var denom = ops::add_scalar(ops::scale(disparity, a), b);
  Tensor one({1, 1, 1, 1}, 1.0);
  return ops::div(ops::constant(std::move(one)), denom);
}

// ---------------------------------------------------------------------------

DepthDecoder::DepthDecoder(const std::array<int, 5>& encoder_widths,
                           const std::array<int, 5>& widths,
                           std::mt19937_64& rng)
    : widths_(widths) {
  for (int s = 4; s >= 0; --s) {
    const int in = s == 4 ? encoder_widths[4] : widths[s + 1];
    upconv0_[s] = nn::Conv2d(in, widths[s], 3, 1, rng);
    const int skip = s > 0 ? encoder_widths[s - 1] : 0;
    upconv1_[s] = nn::Conv2d(widths[s] + skip, widths[s], 3, 1, rng);
  }
  for (int s = 0; s < 4; ++s) dispconv_[s] = nn::Conv2d(widths[s], 1, 3, 1, rng);
}

Var DepthDecoder::layer(int s, const Var& x, const FeaturePyramid& pyr) const {
  Var y = ops::upsample_nearest2(ops::elu(upconv0_[s](x)));
  if (s > 0) {
    const std::array<Var, 2> parts{y, pyr.stage(s)};
    y = ops::concat_channels(parts);
  }
  return ops::elu(upconv1_[s](y));
}

DepthOutput DepthDecoder::decode(const FeaturePyramid& pyr,
                                 const ScaleHook& hook) const {
  DepthOutput out;
  Var x = pyr.stage(kEncoderStages);
  for (int s = 4; s >= 0; --s) {
    x = layer(s, x, pyr);
    if (s >= 1) {
      const int scale = 5 - s;
      if (hook) x = hook(scale, x);
      out.features[scale - 1] = x;
    }
    if (s < 4) out.disparity[s] = ops::sigmoid(dispconv_[s](x));
  }
  return out;
}

std::array<Var, kExchangeScales> DepthDecoder::features(
    const FeaturePyramid& pyr) const {
  std::array<Var, kExchangeScales> out;
  Var x = pyr.stage(kEncoderStages);
  for (int s = 4; s >= 1; --s) {
    x = layer(s, x, pyr);
    out[4 - s] = x;
  }
  return out;
}

void DepthDecoder::collect(const std::string& prefix,
                           nn::NamedParameters& out) const {
  for (int s = 4; s >= 0; --s) {
    const std::string p = prefix + ".layer" + std::to_string(s);
    upconv0_[s].collect(p + ".upconv0", out);
    upconv1_[s].collect(p + ".upconv1", out);
  }
  for (int s = 0; s < 4; ++s)
    dispconv_[s].collect(prefix + ".disp" + std::to_string(s), out);
}

// ---------------------------------------------------------------------------

FlowDecoder::FlowDecoder(const Architecture& arch,
                         const std::array<int, kExchangeScales>& depth_widths,
                         bool d2f, bool dual_head, std::mt19937_64& rng)
    : d2f_(d2f), dual_head_(dual_head), radius_(arch.correlation_radius) {
  require(!dual_head || d2f, "FlowDecoder: dual-head requires D2F");
  require(radius_ >= 0, "FlowDecoder: correlation radius must be >= 0");
  for (int i = 1; i <= kExchangeScales; ++i) {
    const int enc = arch.encoder[stage_of_scale(i) - 1];
    int cost = tensor_core::CostVolume::channels_for(radius_, 1);
    if (d2f) {
      d2f_blocks_[i - 1] =
          exchange::D2FBlock(i, enc, depth_widths[i - 1], arch.fusion[i - 1],
                             arch.mask_hidden, dual_head, radius_, rng);
      cost = d2f_blocks_[i - 1].cost_channels();
    }
    Estimator& e = estimators_[i - 1];
    int in = cost + enc + 2;
    for (int k = 0; k < 5; ++k) {
      e.convs[k] = nn::Conv2d(in, arch.flow_estimator[k], 3, 1, rng);
      in = arch.flow_estimator[k];
    }
    e.head = nn::Conv2d(in, 2, 3, 1, rng);
  }
}

FlowStepOutput FlowDecoder::step(const FlowStepInputs& in,
                                 FlowState& state) const {
  const int i = state.next_scale;
  require(i >= 1 && i <= kExchangeScales, "decode_flow: no scale left");
  ++forward_calls_;
  const Shape& s = in.enc_t.shape();
  require(in.enc_s.shape() == s, "decode_flow: frame feature shapes differ");

  Var flow_up;
  if (i == 1) {
    flow_up = ops::constant(Tensor({s.n, 2, s.h, s.w}, 0.0));
  } else {
    require(state.flow.defined(), "decode_flow: missing previous flow");
    flow_up = tensor_core::upsample_flow(state.flow);
    require(flow_up.shape().same_spatial(s),
            "decode_flow: scale misalignment between previous flow " +
                state.flow.shape().str() + " and features " + s.str());
  }

  FlowStepOutput out;
  if (d2f_) {
    require(in.depth_t.defined() && in.depth_s.defined(),
            "decode_flow: D2F enabled but depth features missing");
    exchange::D2FInputs d;
    d.enc_t = in.enc_t;
    d.enc_s = in.enc_s;
    d.depth_t = in.depth_t;
    d.depth_s = in.depth_s;
    d.prev_mask_t = state.mask_t ? &*state.mask_t : nullptr;
    d.prev_mask_s = state.mask_s ? &*state.mask_s : nullptr;
    d.flow_up = flow_up;
    exchange::D2FOutput r = d2f_blocks_[i - 1](d);
    out.cost = r.cost;
    out.fused_t = r.fused_t;
    out.fused_s = r.fused_s;
    out.mask_t = r.mask_t;
    out.mask_s = r.mask_s;
  } else {
    require(!in.depth_t.defined() && !in.depth_s.defined(),
            "decode_flow: depth features given but D2F disabled");
    out.cost = tensor_core::cost_volume(
        in.enc_t, tensor_core::warp_bilinear(in.enc_s, flow_up), radius_);
  }

  const Estimator& e = estimators_[i - 1];
  const std::array<Var, 3> parts{out.cost.data, in.enc_t, flow_up};
  Var x = ops::concat_channels(parts);
  for (const nn::Conv2d& conv : e.convs) x = ops::leaky_relu(conv(x));
  out.flow = ops::add(flow_up, e.head(x));

  state.flow = out.flow;
  state.mask_t = out.mask_t;
  state.mask_s = out.mask_s;
  ++state.next_scale;
  return out;
}

FlowPyramidOutput FlowDecoder::decode(
    const FeaturePyramid& pyr_t, const FeaturePyramid& pyr_s,
    const std::array<Var, kExchangeScales>* depth_t,
    const std::array<Var, kExchangeScales>* depth_s) const {
  require(!d2f_ || (depth_t && depth_s),
          "decode_flow: D2F enabled but depth features missing");
  FlowPyramidOutput out;
  FlowState state;
  for (int i = 1; i <= kExchangeScales; ++i) {
    FlowStepInputs in{pyr_t.level(i), pyr_s.level(i), {}, {}};
    if (d2f_) {
      in.depth_t = (*depth_t)[i - 1];
      in.depth_s = (*depth_s)[i - 1];
    }
    out.steps[i - 1] = step(in, state);
    out.flows[i - 1] = out.steps[i - 1].flow;
  }
  const Shape& full = pyr_t.stage(1).shape();
  out.final_flow =
      flow_to_input_resolution(out.flows.back(), full.h * 2, full.w * 2);
  return out;
}

FlowDecoder FlowDecoder::clone() const {
  FlowDecoder copy;
  copy.d2f_ = d2f_;
  copy.dual_head_ = dual_head_;
  copy.radius_ = radius_;
  for (int i = 0; i < kExchangeScales; ++i) {
    if (d2f_) copy.d2f_blocks_[i] = d2f_blocks_[i].clone();
    for (int k = 0; k < 5; ++k)
      copy.estimators_[i].convs[k] = estimators_[i].convs[k].clone();
    copy.estimators_[i].head = estimators_[i].head.clone();
  }
  return copy;
}

void FlowDecoder::collect(const std::string& prefix,
                          nn::NamedParameters& out) const {
  for (int i = 1; i <= kExchangeScales; ++i) {
    const std::string p = prefix + ".scale" + std::to_string(i);
    if (d2f_) d2f_blocks_[i - 1].collect(p + ".d2f", out);
    const Estimator& e = estimators_[i - 1];
    for (int k = 0; k < 5; ++k)
      e.convs[k].collect(p + ".conv" + std::to_string(k + 1), out);
    e.head.collect(p + ".head", out);
  }
}

Var flow_to_input_resolution(const Var& finest_flow, int input_height,
                             int input_width) {
  const Shape& s = finest_flow.shape();
  require(input_height % s.h == 0 && input_width % s.w == 0 &&
              input_height / s.h == input_width / s.w,
          "flow_to_input_resolution: non-integer or anisotropic factor");
  const int factor = input_height / s.h;
  return factor == 1 ? finest_flow
                     : tensor_core::upsample_flow(finest_flow, factor);
}

}  // namespace dfnet::decoders
