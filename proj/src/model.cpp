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

#include "dfnet/model.hpp"

#include <random>

namespace dfnet::model {

ModelFlags ModelFlags::ablation(const std::string& id) {
  ModelFlags f{false, false, false, false, false};
  if (id == "I") return f;
  f.shared_encoder = true;
  f.d2f = true;
  if (id == "II") return f;
  if (id == "V") {
    f.dual_head = true;
    return f;
  }
  f.f2d = true;
  if (id == "III") return f;
  f.ema = true;
  if (id == "IV") return f;
  if (id == "VI") {
    f.dual_head = true;
    return f;
  }
  throw std::invalid_argument("unknown ablation model '" + id +
                              "' (expected I, II, III, IV, V or VI)");
}

void ModelFlags::validate() const {
  require(!f2d || d2f, "model flags: F2D requires D2F");
  require(!dual_head || d2f, "model flags: dual-head requires D2F");
}

MultiTaskNet::MultiTaskNet(const Architecture& arch, const ModelFlags& flags,
                           std::uint64_t seed)
    : arch_(arch), flags_(flags) {
  flags_.validate();
  std::mt19937_64 rng(seed);
  encoder_ = backbone::Encoder(arch.encoder, rng);
  if (!flags.shared_encoder) flow_encoder_.emplace(arch.encoder, rng);
  depth_ = decoders::DepthDecoder(arch.encoder, arch.depth_decoder, rng);
  std::array<int, kExchangeScales> depth_widths{};
  for (int i = 1; i <= kExchangeScales; ++i)
    depth_widths[i - 1] = depth_.feature_width(i);
  student_ = FlowDecoder(arch, depth_widths, flags.d2f, flags.dual_head, rng);
  if (flags.f2d)
    for (int i = 1; i <= kExchangeScales; ++i)
      f2d_[i - 1] = exchange::F2DBlock(depth_widths[i - 1], rng);
  pose_ = backbone::PoseNet(arch.pose, rng);
  if (flags.ema) clone_teacher();
}

ForwardResult MultiTaskNet::run(const Var& frame_t, const Var& frame_s,
                                const ForwardOptions& options,
                                bool inference) const {
  require(frame_t.shape() == frame_s.shape(),
          "forward: frame shapes differ: " + frame_t.shape().str() + " vs " +
              frame_s.shape().str());
  const bool use_flow = options.flow;
  const bool use_f2d = use_flow && options.f2d && flags_.f2d;
  const FlowDecoder& flow_net =
      inference && teacher_ ? *teacher_ : student_;
  const bool teacher_feeds_f2d = !inference && use_f2d && teacher_;

  const backbone::FeaturePyramid pyr_t = encoder_.encode(frame_t);
  backbone::FeaturePyramid flow_t, flow_s;
  std::array<Var, kExchangeScales> depth_s;
  if (use_flow) {
    const backbone::Encoder& fenc = flow_encoder();
    flow_t = flags_.shared_encoder ? pyr_t : fenc.encode(frame_t);
    flow_s = fenc.encode(frame_s);
    if (flags_.d2f)
      depth_s = depth_.features(flags_.shared_encoder
                                    ? flow_s
                                    : encoder_.encode(frame_s));
  }

  std::array<decoders::FlowStepOutput, kExchangeScales> steps, teacher_steps;
  decoders::FlowState state, teacher_state;
  const decoders::ScaleHook hook = [&](int i, const Var& feat) -> Var {
    decoders::FlowStepInputs in{flow_t.level(i), flow_s.level(i), {}, {}};
    if (flags_.d2f) {
      in.depth_t = feat;
      in.depth_s = depth_s[i - 1];
    }
    steps[i - 1] = flow_net.step(in, state);
    if (!use_f2d) return feat;
    const decoders::FlowStepOutput* source = &steps[i - 1];
    if (teacher_feeds_f2d) {
      NoGradGuard no_grad;
      const decoders::FlowStepInputs frozen{
          in.enc_t.detach(), in.enc_s.detach(), in.depth_t.detach(),
          in.depth_s.detach()};
      teacher_steps[i - 1] = teacher_->step(frozen, teacher_state);
      source = &teacher_steps[i - 1];
    }
    return f2d_[i - 1](feat, source->fused_t.detach(),
                       source->fused_s.detach(), source->flow.detach());
  };

  ForwardResult result;
  result.depth = use_flow ? depth_.decode(pyr_t, hook) : depth_.decode(pyr_t);
  const auto assemble = [&](const auto& s) {
    FlowPyramidOutput out;
    out.steps = s;
    for (int i = 0; i < kExchangeScales; ++i) out.flows[i] = s[i].flow;
    out.final_flow = decoders::flow_to_input_resolution(
        out.flows.back(), frame_t.shape().h, frame_t.shape().w);
    return out;
  };
  if (use_flow) {
    if (inference && teacher_)
      result.teacher_flow = assemble(steps);
    else
      result.flow = assemble(steps);
  }
  if (teacher_feeds_f2d) result.teacher_flow = assemble(teacher_steps);
  return result;
}

ForwardResult MultiTaskNet::forward(const Var& frame_t, const Var& frame_s,
                                    const ForwardOptions& options) const {
  return run(frame_t, frame_s, options, false);
}

Prediction MultiTaskNet::predict(const Tensor& frame_t,
                                 const Tensor& frame_s) const {
  NoGradGuard no_grad;
  const ForwardResult r = run(Var(frame_t), Var(frame_s), {}, true);
  const Var& disp = r.depth.disparity[0];
  Prediction p;
  p.disparity = disp.value();
  p.depth =
      decoders::disparity_to_depth(disp, arch_.min_depth, arch_.max_depth)
          .value();
  p.flow = (r.flow ? r.flow : r.teacher_flow)->final_flow.value();
  return p;
}

backbone::PoseEstimate MultiTaskNet::pose(const Var& frame_t,
                                          const Var& frame_s) const {
  return pose_.estimate(frame_t, frame_s);
}

void MultiTaskNet::clone_teacher() { teacher_ = student_.clone(); }

void MultiTaskNet::ema_update(double alpha) {
  require(teacher_.has_value(), "ema_update: model has no teacher");
  require(alpha >= 0.0 && alpha <= 1.0, "ema_update: alpha must be in [0, 1]");
  nn::NamedParameters t, s;
  teacher_->collect("flow", t);
  student_.collect("flow", s);
  require(t.size() == s.size(), "ema_update: teacher/student mismatch");
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::span<double> tv = t[k].second.mutable_value().values();
    std::span<const double> sv = s[k].second.value().values();
    require(tv.size() == sv.size(), "ema_update: shape mismatch at " + t[k].first);
    for (std::size_t j = 0; j < tv.size(); ++j)
      tv[j] = alpha * tv[j] + (1.0 - alpha) * sv[j];
  }
}

nn::NamedParameters MultiTaskNet::parameters(ParamGroup group) const {
  nn::NamedParameters out;
  switch (group) {
    case ParamGroup::kEncoder:
      encoder_.collect("encoder", out);
      if (flow_encoder_) flow_encoder_->collect("flow_encoder", out);
      break;
    case ParamGroup::kDepth:
      depth_.collect("depth", out);
      break;
    case ParamGroup::kPose:
      pose_.collect("pose", out);
      break;
    case ParamGroup::kFlow:
      student_.collect("flow", out);
      break;
    case ParamGroup::kF2D:
      if (flags_.f2d)
        for (int i = 1; i <= kExchangeScales; ++i)
          f2d_[i - 1].collect("f2d.scale" + std::to_string(i), out);
      break;
  }
  return out;
}

nn::NamedParameters MultiTaskNet::trainable_parameters() const {
  nn::NamedParameters out;
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kDepth,
                       ParamGroup::kPose, ParamGroup::kFlow, ParamGroup::kF2D}) {
    nn::NamedParameters part = parameters(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

nn::NamedParameters MultiTaskNet::teacher_parameters() const {
  nn::NamedParameters out;
  if (teacher_) teacher_->collect("teacher", out);
  return out;
}

nn::NamedParameters MultiTaskNet::state() const {
  nn::NamedParameters out = trainable_parameters();
  nn::NamedParameters t = teacher_parameters();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

}  // namespace dfnet::model
