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

// The joint depth/flow network: encoder(s), depth decoder, student and
// teacher flow decoders, flow-to-depth blocks and the pose network.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dfnet/decoders.hpp"

namespace dfnet::model {

using decoders::DepthOutput;
using decoders::FlowDecoder;
using decoders::FlowPyramidOutput;

struct ModelFlags {
  bool shared_encoder = true;
  bool d2f = true;
  bool f2d = true;
  bool ema = true;
  bool dual_head = true;

  /// Ablation variants I..VI.
  static ModelFlags ablation(const std::string& id);
  /// Throws on inconsistent combinations (e.g. F2D without D2F).
  void validate() const;
  bool operator==(const ModelFlags&) const = default;
};

/// Which branches a forward pass builds.
struct ForwardOptions {
  bool flow = true;
  bool f2d = true;
};

struct ForwardResult {
  DepthOutput depth;  // frame t
  std::optional<FlowPyramidOutput> flow;          // student, t -> s
  std::optional<FlowPyramidOutput> teacher_flow;  // when the teacher ran
};

struct Prediction {
  Tensor disparity;  // [N, 1, H, W]
  Tensor depth;      // [N, 1, H, W]
  Tensor flow;       // [N, 2, H, W], t -> s in input pixels
};

enum class ParamGroup { kEncoder, kDepth, kPose, kFlow, kF2D };

class MultiTaskNet {
 public:
  MultiTaskNet(const Architecture& arch, const ModelFlags& flags,
               std::uint64_t seed);

  /// Training forward pass. The teacher, when present and F2D is active,
  /// runs without gradient and feeds the flow-to-depth blocks.
  ForwardResult forward(const Var& frame_t, const Var& frame_s,
                        const ForwardOptions& options = {}) const;

  /// Inference without gradient. Uses only the teacher flow decoder when one
  /// exists.
  Prediction predict(const Tensor& frame_t, const Tensor& frame_s) const;

  backbone::PoseEstimate pose(const Var& frame_t, const Var& frame_s) const;

  /// Replaces the teacher with a deep copy of the student.
  void clone_teacher();
  bool has_teacher() const { return teacher_.has_value(); }
  /// teacher <- alpha * teacher + (1 - alpha) * student.
  void ema_update(double alpha);

  nn::NamedParameters parameters(ParamGroup group) const;
  /// Trainable parameters of every group (teacher excluded).
  nn::NamedParameters trainable_parameters() const;
  nn::NamedParameters teacher_parameters() const;
  /// Every tensor that a checkpoint must hold, teacher included.
  nn::NamedParameters state() const;

  const Architecture& architecture() const { return arch_; }
  const ModelFlags& flags() const { return flags_; }
  const FlowDecoder& student() const { return student_; }
  const FlowDecoder* teacher() const {
    return teacher_ ? &*teacher_ : nullptr;
  }
  const backbone::Encoder& depth_encoder() const { return encoder_; }
  const backbone::Encoder& flow_encoder() const {
    return flags_.shared_encoder ? encoder_ : *flow_encoder_;
  }

 private:
  ForwardResult run(const Var& frame_t, const Var& frame_s,
                    const ForwardOptions& options, bool inference) const;

  Architecture arch_;
  ModelFlags flags_;
  backbone::Encoder encoder_;
  std::optional<backbone::Encoder> flow_encoder_;
  decoders::DepthDecoder depth_;
  FlowDecoder student_;
  std::optional<FlowDecoder> teacher_;
  std::array<exchange::F2DBlock, kExchangeScales> f2d_;
  backbone::PoseNet pose_;
};

}  // namespace dfnet::model
