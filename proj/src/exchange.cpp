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

#include "dfnet/exchange.hpp"

#include <array>

#include "dfnet/ops.hpp"

namespace dfnet::exchange {

namespace {

void require_aligned(const Var& a, const Var& b, const char* what) {
  require(a.shape().n == b.shape().n && a.shape().same_spatial(b.shape()),
          std::string(what) + ": scale misalignment " + a.shape().str() +
              " vs " + b.shape().str());
}

}  // namespace

Var fuse_features(const nn::Conv2d& fusion, const Var& enc,
                  const Var& depth_feat) {
  require_aligned(enc, depth_feat, "fuse_features");
  require(enc.shape().c + depth_feat.shape().c == fusion.in_channels(),
          "fuse_features: channel count does not match the fusion layer");
  const std::array<Var, 2> parts{enc, depth_feat};
  return fusion(ops::concat_channels(parts));
}

Var upsample_mask(const Var& mask, int height, int width) {
  return ops::resize_bilinear(mask, height, width);
}

MaskLayer::MaskLayer(int scale, int enc_channels, int hidden,
                     std::mt19937_64& rng)
    : scale_(scale),
      first_(enc_channels, hidden, 3, 1, rng),
      second_(hidden + (scale > 1 ? 1 : 0), 1, 3, 1, rng) {
  require(scale >= 1, "MaskLayer: scale index starts at 1");
}

DualHeadMask MaskLayer::operator()(const Var& enc,
                                   const DualHeadMask* prev) const {
  Var hidden = ops::relu(first_(enc));
  if (scale_ > 1) {
    require(prev != nullptr, "update_mask: scale " + std::to_string(scale_) +
                                 " needs the mask of scale " +
                                 std::to_string(scale_ - 1));
    require(prev->scale == scale_ - 1,
            "update_mask: previous mask belongs to the wrong scale");
    const Shape& s = enc.shape();
    const Shape& p = prev->data.shape();
    require(p.n == s.n && p.c == 1 && 2 * p.h == s.h && 2 * p.w == s.w,
            "update_mask: previous mask must be at half resolution");
    const std::array<Var, 2> parts{hidden,
                                   upsample_mask(prev->data, s.h, s.w)};
    hidden = ops::concat_channels(parts);
  } else {
    require(prev == nullptr, "update_mask: scale 1 takes no previous mask");
  }
  return {ops::sigmoid(second_(hidden)), scale_};
}

MaskLayer MaskLayer::clone() const {
  MaskLayer copy;
  copy.scale_ = scale_;
  copy.first_ = first_.clone();
  copy.second_ = second_.clone();
  return copy;
}

void MaskLayer::collect(const std::string& prefix,
                        nn::NamedParameters& out) const {
  first_.collect(prefix + ".conv1", out);
  second_.collect(prefix + ".conv2", out);
}

DualHeadFeature dual_head_split(const Var& fused, const Var& mask) {
  require_aligned(fused, mask, "dual_head_split");
  require(mask.shape().c == 1, "dual_head_split: mask must have 1 channel");
  const Var rigid = ops::mul(mask, fused);
  return {rigid, ops::sub(fused, rigid)};
}

D2FBlock::D2FBlock(int scale, int enc_channels, int depth_channels,
                   int fused_channels, int mask_hidden, bool dual_head,
                   int radius, std::mt19937_64& rng)
    : scale_(scale),
      radius_(radius),
      fusion_(enc_channels + depth_channels, fused_channels, 1, 1, rng) {
  if (dual_head) mask_.emplace(scale, enc_channels, mask_hidden, rng);
}

D2FOutput D2FBlock::operator()(const D2FInputs& in) const {
  require_aligned(in.enc_t, in.enc_s, "d2f_block");
  require_aligned(in.enc_t, in.depth_t, "d2f_block");
  require_aligned(in.enc_t, in.depth_s, "d2f_block");
  require_aligned(in.enc_t, in.flow_up, "d2f_block");

  D2FOutput out;
  out.fused_t = fuse_features(fusion_, in.enc_t, in.depth_t);
  out.fused_s = fuse_features(fusion_, in.enc_s, in.depth_s);
  const Var warped_s = tensor_core::warp_bilinear(out.fused_s, in.flow_up);
  if (!mask_) {
    out.cost = tensor_core::cost_volume(out.fused_t, warped_s, radius_);
    return out;
  }
  out.mask_t = (*mask_)(in.enc_t, in.prev_mask_t);
  out.mask_s = (*mask_)(in.enc_s, in.prev_mask_s);
  const Var warped_mask_s =
      tensor_core::warp_bilinear(out.mask_s->data, in.flow_up);
  const DualHeadFeature head_t = dual_head_split(out.fused_t, out.mask_t->data);
  const DualHeadFeature head_s = dual_head_split(warped_s, warped_mask_s);
  const std::array<CostVolume, 2> heads{
      tensor_core::cost_volume(head_t.rigid, head_s.rigid, radius_),
      tensor_core::cost_volume(head_t.nonrigid, head_s.nonrigid, radius_)};
  out.cost = tensor_core::concat_heads(heads);
  return out;
}

D2FBlock D2FBlock::clone() const {
  D2FBlock copy;
  copy.scale_ = scale_;
  copy.radius_ = radius_;
  copy.fusion_ = fusion_.clone();
  if (mask_) copy.mask_ = mask_->clone();
  return copy;
}

void D2FBlock::collect(const std::string& prefix,
                       nn::NamedParameters& out) const {
  fusion_.collect(prefix + ".fusion", out);
  if (mask_) mask_->collect(prefix + ".mask", out);
}

Var match_confidence(const Var& flow_feat_t, const Var& flow_feat_s,
                     const Var& flow) {
  require(flow_feat_t.shape() == flow_feat_s.shape(),
          "f2d_block: flow feature shapes differ: " +
              flow_feat_t.shape().str() + " vs " + flow_feat_s.shape().str());
  require_aligned(flow_feat_t, flow, "f2d_block");
  const Var warped = tensor_core::warp_bilinear(flow_feat_s, flow);
  return tensor_core::cost_volume(tensor_core::normalize_01(flow_feat_t),
                                  tensor_core::normalize_01(warped), 0)
      .data;
}

F2DBlock::F2DBlock(int depth_channels, std::mt19937_64& rng)
    : conv_(depth_channels + 1, depth_channels, 3, 1, rng) {
  Tensor& w = conv_.weight().mutable_value();
  w.fill(0.0);
  for (int c = 0; c < depth_channels; ++c) w.at(c, c, 1, 1) = 1.0;
  conv_.bias().mutable_value().fill(0.0);
}

Var F2DBlock::operator()(const Var& depth_feat_t, const Var& flow_feat_t,
                         const Var& flow_feat_s, const Var& flow) const {
  require_aligned(depth_feat_t, flow_feat_t, "f2d_block");
  require(depth_feat_t.shape().c + 1 == conv_.in_channels(),
          "f2d_block: depth feature width does not match the block");
  const std::array<Var, 2> parts{
      depth_feat_t, match_confidence(flow_feat_t, flow_feat_s, flow)};
  return conv_(ops::concat_channels(parts));
}

void F2DBlock::collect(const std::string& prefix,
                       nn::NamedParameters& out) const {
  conv_.collect(prefix + ".conv", out);
}

}  // namespace dfnet::exchange
