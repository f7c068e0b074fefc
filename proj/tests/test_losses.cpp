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

#include <gtest/gtest.h>

#include <Eigen/LU>

#include "dfnet/losses.hpp"
#include "dfnet/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace dfnet {
namespace {

using namespace losses;
using testing::random;
using testing::smooth_image;

CameraIntrinsics camera(int w, int h) {
  return {0.58 * w, 0.58 * w * 2.0 * h / w, 0.5 * w - 0.5, 0.5 * h - 0.5, w, h};
}

Var pose(double rx, double ry, double rz, double tx, double ty, double tz) {
  return Var(Tensor({1, 6, 1, 1}, {rx, ry, rz, tx, ty, tz}));
}

Var constant_field(Shape s, double v) { return Var(Tensor(s, v)); }

// ---------------------------------------------------------------------------
// view synthesis

TEST(ViewSynthesis, IdentityPoseReproducesSourceExactly) {
  const Tensor src = smooth_image({1, 3, 16, 32}, 1);
  const Var depth(random({1, 1, 16, 32}, 2, 0.5, 50));
  const Reconstruction r =
      view_synthesis(Var(src), depth, pose(0, 0, 0, 0, 0, 0), camera(32, 16));
  EXPECT_TRUE(testing::bit_equal(r.image.value(), src));
  EXPECT_EQ(r.valid.min(), 1.0);
}

TEST(ViewSynthesis, XTranslationEqualsConstantHorizontalFlow) {
  const int w = 64, h = 32;
  const CameraIntrinsics k = camera(w, h);
  const Tensor src = smooth_image({1, 3, h, w}, 3);
  const double z = 7.5;
  const double max_tx = 0.1 * z * w / k.fx;
  for (double tx : {-max_tx, -0.3, 0.05, 0.41, max_tx}) {
    const Reconstruction r = view_synthesis(
        Var(src), constant_field({1, 1, h, w}, z), pose(0, 0, 0, tx, 0, 0), k);
    Tensor flow({1, 2, h, w});
    for (int i = 0; i < h * w; ++i) flow[i] = k.fx * tx / z;
    const Tensor expected = tensor_core::warp_bilinear(Var(src), Var(flow)).value();
    EXPECT_LT(oracle::max_abs_diff(r.image.value(), expected), 1e-5) << tx;
  }
}

TEST(ViewSynthesis, PointsBehindCameraAreMasked) {
  const Tensor src = smooth_image({1, 3, 8, 16}, 4);
  const Reconstruction r = view_synthesis(
      Var(src), constant_field({1, 1, 8, 16}, 2.0), pose(0, 0, 0, 0, 0, -3.0),
      camera(16, 8));
  EXPECT_EQ(r.valid.max(), 0.0);
  EXPECT_EQ(r.image.value().max_abs(), 0.0);
}

TEST(ViewSynthesis, RejectsNonFiniteDepthAndBadShapes) {
  Tensor d({1, 1, 8, 16}, 1.0);
  d[5] = std::nan("");
  EXPECT_THROW(view_synthesis(Var(Tensor({1, 3, 8, 16})), Var(d),
                              pose(0, 0, 0, 0, 0, 0), camera(16, 8)),
               std::invalid_argument);
  EXPECT_THROW(view_synthesis(Var(Tensor({1, 3, 8, 16})),
                              constant_field({1, 1, 8, 8}, 1.0),
                              pose(0, 0, 0, 0, 0, 0), camera(16, 8)),
               std::invalid_argument);
}

TEST(RigidFlow, MatchesPinholeProjection) {
  const CameraIntrinsics k = camera(12, 6);
  const Tensor depth = random({1, 1, 6, 12}, 5, 2, 20);
  const Eigen::Vector3d w(0.02, -0.05, 0.01), t(0.3, -0.1, 0.2);
  const Tensor flow =
      rigid_flow(Var(depth), pose(w.x(), w.y(), w.z(), t.x(), t.y(), t.z()), k)
          .value();
  const Eigen::Matrix3d rot = backbone::rotation_matrix(w);
  const Eigen::Matrix3d kinv = k.matrix().inverse();
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 12; ++x) {
      const Eigen::Vector3d p =
          k.matrix() * (rot * (depth.at(0, 0, y, x) * (kinv * Eigen::Vector3d(x, y, 1))) + t);
      EXPECT_NEAR(flow.at(0, 0, y, x), p.x() / p.z() - x, 1e-9);
      EXPECT_NEAR(flow.at(0, 1, y, x), p.y() / p.z() - y, 1e-9);
    }
}

TEST(RigidFlow, GradientCheck) {
  const CameraIntrinsics k = camera(8, 4);
  const auto r = tensor_core::grad_check(
      [&](std::span<const Var> in) { return rigid_flow(in[0], in[1], k); },
      [](int attempt) {
        std::mt19937_64 rng(6 + attempt);
        Tensor d = tensor_core::random_tensor({2, 1, 4, 8}, rng, 1, 10);
        Tensor p = tensor_core::random_tensor({2, 6, 1, 1}, rng, -0.2, 0.2);
        return std::vector<Tensor>{d, p};
      });
  EXPECT_LT(r.max_relative_error, 1e-6);
}

// ---------------------------------------------------------------------------
// photometric

TEST(Photometric, IdenticalImagesGiveZero) {
  const Tensor img = smooth_image({2, 3, 8, 12}, 7);
  const Tensor p = photometric_loss(Var(img), Var(img)).value();
  EXPECT_EQ(p.max_abs(), 0.0);
}

TEST(Photometric, ConstantOffsetMatchesReferenceSsim) {
  const Tensor target = smooth_image({1, 3, 10, 14}, 8);
  Tensor pred = target;
  for (double& v : pred.values()) v += 0.1;
  const Tensor p = photometric_loss(Var(pred), Var(target)).value();
  const Tensor ref = oracle::dssim(pred, target);
  for (std::size_t i = 0; i < p.numel(); ++i)
    EXPECT_NEAR(p[i], 0.85 * ref[i] + 0.15 * 0.1, 1e-12);
}

TEST(Photometric, MatchesReferenceOnRandomImages) {
  const Tensor a = random({2, 3, 7, 9}, 9, 0, 1);
  const Tensor b = random({2, 3, 7, 9}, 10, 0, 1);
  const Tensor p = photometric_loss(Var(a), Var(b)).value();
  const Tensor ref = oracle::dssim(a, b);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        double l1 = 0.0;
        for (int c = 0; c < 3; ++c) l1 += std::abs(a.at(n, c, y, x) - b.at(n, c, y, x));
        EXPECT_NEAR(p.at(n, 0, y, x), 0.85 * ref.at(n, 0, y, x) + 0.15 * l1 / 3,
                    1e-12);
      }
}

TEST(Photometric, BoundedByRange) {
  const Tensor a = random({1, 3, 9, 9}, 11, 0, 1);
  const Tensor b = random({1, 3, 9, 9}, 12, 0, 1);
  const Tensor p = photometric_loss(Var(a), Var(b)).value();
  EXPECT_GE(p.min(), 0.0);
  EXPECT_LE(p.max(), 0.85 + 0.15 * 1.0);
  EXPECT_THROW(photometric_loss(Var(a), Var(Tensor({1, 3, 9, 8}))),
               std::invalid_argument);
}

TEST(Photometric, GradientCheck) {
  const auto r = tensor_core::grad_check(
      [](std::span<const Var> in) { return photometric_loss(in[0], in[1]); },
      testing::random_inputs({{1, 2, 5, 5}, {1, 2, 5, 5}}, 13, 0, 1));
  EXPECT_LT(r.max_relative_error, 1e-4);
}

// ---------------------------------------------------------------------------
// smoothness

TEST(Smoothness, ConstantFieldIsZero) {
  const Tensor img = random({1, 3, 8, 8}, 14, 0, 1);
  EXPECT_EQ(edge_aware_smoothness(constant_field({1, 1, 8, 8}, 0.3), Var(img))
                .value()[0],
            0.0);
  EXPECT_EQ(edge_aware_smoothness(constant_field({1, 2, 8, 8}, -2.0), Var(img))
                .value()[0],
            0.0);
}

TEST(Smoothness, EdgesDownweightGradients) {
  Tensor field({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) field.at(0, 0, y, x) = x;
  const Tensor flat({1, 3, 4, 4}, 0.5);
  Tensor edges = flat;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) edges.at(0, c, y, x) = x;
  const double a = edge_aware_smoothness(Var(field), Var(flat)).value()[0];
  const double b = edge_aware_smoothness(Var(field), Var(edges)).value()[0];
  EXPECT_NEAR(a, 12.0 / 12.0, 1e-15);  // |dx| = 1 everywhere, dy = 0
  EXPECT_NEAR(b, std::exp(-1.0), 1e-15);
}

// ---------------------------------------------------------------------------
// depth loss

DepthLossInputs static_scene(const Tensor& frame, const Var& disparity_source) {
  DepthLossInputs in;
  in.frame_prev = Var(frame);
  in.frame_t = Var(frame);
  in.frame_next = Var(frame);
  for (int k = 0; k < 4; ++k)
    in.disparity[k] = k == 0 ? disparity_source
                             : downsample_to(disparity_source,
                                             frame.h() >> k, frame.w() >> k);
  in.pose_prev = pose(0, 0, 0, 0, 0, 0);
  in.pose_next = pose(0, 0, 0, 0, 0, 0);
  in.intrinsics = camera(frame.w(), frame.h());
  return in;
}

TEST(DepthLoss, StaticSceneHasZeroPhotometricTerm) {
  const Tensor frame = smooth_image({1, 3, 16, 32}, 15);
  const LossReport r =
      depth_loss(static_scene(frame, Var(random({1, 1, 16, 32}, 16, 0.05, 0.95))));
  for (int k = 0; k < 4; ++k)
    EXPECT_EQ(r.component("photometric_depth/s" + std::to_string(k)), 0.0);
}

TEST(DepthLoss, ConstantDisparityHasZeroSmoothness) {
  const Tensor frame = smooth_image({1, 3, 16, 32}, 17);
  const LossReport r = depth_loss(
      static_scene(frame, constant_field({1, 1, 16, 32}, 0.3)));
  for (int k = 0; k < 4; ++k)
    EXPECT_EQ(r.component("smooth_depth/s" + std::to_string(k)), 0.0);
  EXPECT_EQ(r.total_value(), 0.0);
}

TEST(DepthLoss, TotalIsWeightedSumOfNonNegativeComponents) {
  const Tensor a = smooth_image({2, 3, 16, 32}, 18);
  const Tensor b = smooth_image({2, 3, 16, 32}, 19);
  const Tensor c = smooth_image({2, 3, 16, 32}, 20);
  DepthLossInputs in = static_scene(b, Var(random({2, 1, 16, 32}, 21, 0.05, 0.95)));
  in.frame_prev = Var(a);
  in.frame_next = Var(c);
  in.pose_prev = Var(Tensor({2, 6, 1, 1}, {0.01, 0, 0, -0.2, 0, 0.1,
                                           0, 0.02, 0, 0.1, 0, 0}));
  in.pose_next = Var(Tensor({2, 6, 1, 1}, {0, 0, 0, 0.3, 0.01, 0,
                                           0, 0, 0.01, -0.1, 0, 0.05}));
  const LossReport r = depth_loss(in);
  EXPECT_EQ(r.components.size(), 8u);
  for (const LossComponent& comp : r.components) {
    EXPECT_GE(comp.value, 0.0) << comp.name;
    EXPECT_TRUE(std::isfinite(comp.value)) << comp.name;
  }
  EXPECT_NEAR(r.total_value(), r.weighted_sum(), 1e-14);
  EXPECT_GT(r.total_value(), 0.0);
}

TEST(DepthLoss, RejectsMissingNeighbour) {
  const Tensor frame = smooth_image({1, 3, 16, 32}, 22);
  DepthLossInputs in = static_scene(frame, constant_field({1, 1, 16, 32}, 0.3));
  in.frame_next = Var();
  EXPECT_THROW(depth_loss(in), std::invalid_argument);
}

TEST(DepthLoss, GradientMatchesFiniteDifferencesOnToyProblem) {
  // Disparity from a 3x3 conv over the target frame, pooled to four scales;
  // the checked inputs are that conv's parameters and both poses.
  const Tensor prev = smooth_image({1, 3, 8, 16}, 23);
  const Tensor cur = smooth_image({1, 3, 8, 16}, 24);
  const Tensor next = smooth_image({1, 3, 8, 16}, 25);
  const auto loss = [&](std::span<const Var> in) {
    DepthLossInputs d;
    d.frame_prev = Var(prev);
    d.frame_t = Var(cur);
    d.frame_next = Var(next);
    const Var disp = ops::sigmoid(ops::conv2d(d.frame_t, in[0], in[1], 1, 1));
    for (int k = 0; k < 4; ++k)
      d.disparity[k] = k == 0 ? disp : downsample_to(disp, 8 >> k, 16 >> k);
    d.pose_prev = in[2];
    d.pose_next = in[3];
    d.intrinsics = camera(16, 8);
    return depth_loss(d).total;
  };
  const auto sampler = [](int attempt) {
    std::mt19937_64 rng(26 + attempt);
    std::vector<Tensor> out;
    out.push_back(tensor_core::random_tensor({1, 3, 3, 3}, rng, -1, 1));
    out.push_back(tensor_core::random_tensor({1, 1, 1, 1}, rng, -1, 1));
    Tensor pp = tensor_core::random_tensor({1, 6, 1, 1}, rng, -0.02, 0.02);
    Tensor pn = tensor_core::random_tensor({1, 6, 1, 1}, rng, -0.02, 0.02);
    pp[3] = -0.05;
    pn[3] = 0.05;
    out.push_back(pp);
    out.push_back(pn);
    return out;
  };
  const auto r = tensor_core::grad_check(loss, sampler);
  EXPECT_LT(r.max_relative_error, 1e-3);
  EXPECT_FALSE(r.kink_detected);
}

// ---------------------------------------------------------------------------
// flow loss

std::vector<Var> flows_for(int h, int w, double u, double v) {
  std::vector<Var> out;
  for (int i = 1; i <= kExchangeScales; ++i) {
    const int f = 1 << (kExchangeScales + 1 - i);
    Tensor t({1, 2, h / f, w / f});
    for (int k = 0; k < t.h() * t.w(); ++k) {
      t[k] = u / f;
      t[t.h() * t.w() + k] = v / f;
    }
    out.push_back(Var(t));
  }
  return out;
}

TEST(FlowLoss, IdenticalFramesZeroFlowGiveZero) {
  const Tensor frame = smooth_image({1, 3, 64, 128}, 27);
  const LossReport r = flow_loss(Var(frame), Var(frame), flows_for(64, 128, 0, 0));
  EXPECT_EQ(r.total_value(), 0.0);
  for (const LossComponent& c : r.components) EXPECT_EQ(c.value, 0.0) << c.name;
}

TEST(FlowLoss, ShiftedPairWithMatchingFlowIsPhotometricallyZero) {
  const Tensor frame_t = smooth_image({1, 3, 16, 32}, 28);
  Tensor frame_s = frame_t;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 32; ++x)
        frame_s.at(0, c, y, x) = x >= 2 ? frame_t.at(0, c, y, x - 2) : 0.0;
  Tensor flow({1, 2, 16, 32});
  for (int k = 0; k < 16 * 32; ++k) flow[k] = 2.0;
  const Tensor p =
      photometric_loss(tensor_core::warp_bilinear(Var(frame_s), Var(flow)),
                       Var(frame_t))
          .value();
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 29; ++x) EXPECT_NEAR(p.at(0, 0, y, x), 0.0, 1e-12);
}

TEST(FlowLoss, ConstantFlowHasZeroSmoothnessAndWeightsSumCorrectly) {
  const Tensor a = smooth_image({1, 3, 64, 128}, 29);
  const Tensor b = smooth_image({1, 3, 64, 128}, 30);
  const LossReport r = flow_loss(Var(a), Var(b), flows_for(64, 128, 3.0, -1.0));
  for (int i = 1; i <= kExchangeScales; ++i)
    EXPECT_EQ(r.component("smooth_flow/s" + std::to_string(i)), 0.0);
  EXPECT_NEAR(r.total_value(), r.weighted_sum(), 1e-14);
  const double weights[] = {0.32, 0.08, 0.02, 0.01};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(r.components[2 * i].weight, weights[i]);
    EXPECT_DOUBLE_EQ(r.components[2 * i + 1].weight,
                     weights[i] * 1e-2 * std::pow(0.5, i));
  }
}

TEST(FlowLoss, BorderIsExcludedFromPhotometricMean) {
  const Tensor a = smooth_image({1, 3, 64, 128}, 31);
  Tensor b = a;
  // Corrupt only the outermost columns at every scale's border band.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x : {0, 1, 126, 127}) b.at(0, c, y, x) = 0.0;
  const LossReport r = flow_loss(Var(a), Var(b), flows_for(64, 128, 0, 0));
  EXPECT_EQ(r.component("photometric_flow/s4"), 0.0);
  const std::vector<Var> flows = flows_for(64, 128, 0, 0);
  EXPECT_THROW(flow_loss(Var(a), Var(b), std::span(flows).subspan(0, 3)),
               std::invalid_argument);
}

}  // namespace
}  // namespace dfnet
