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

#include "dfnet/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dfnet/decoders.hpp"
#include "dfnet/ops.hpp"
#include "dfnet/tensor_core.hpp"

namespace dfnet::losses {

namespace {

constexpr double kMinProjectedDepth = 1e-3;
/// Photometric error assigned to reconstructions of points behind the source
/// camera; larger than any real error so the other neighbour wins the minimum
/// and the automatic mask drops the pixel when both are invalid.
constexpr double kInvalidError = 10.0;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

/// Rotation, its derivatives with respect to the axis-angle components and
/// the translation of one batch item.
struct ItemMotion {
  Eigen::Matrix3d rotation;
  std::array<Eigen::Matrix3d, 3> d_rotation;
  Eigen::Vector3d translation;
};

ItemMotion item_motion(const Tensor& pose, int n) {
  using J = backbone::Jet<3>;
  const auto r = backbone::rotation_matrix<J>(
      J::variable(pose.at(n, 0, 0, 0), 0), J::variable(pose.at(n, 1, 0, 0), 1),
      J::variable(pose.at(n, 2, 0, 0), 2));
  ItemMotion m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      m.rotation(i, j) = r[i * 3 + j].a;
      for (int k = 0; k < 3; ++k) m.d_rotation[k](i, j) = r[i * 3 + j].v[k];
    }
  m.translation = {pose.at(n, 3, 0, 0), pose.at(n, 4, 0, 0),
                   pose.at(n, 5, 0, 0)};
  return m;
}

}  // namespace

double LossReport::weighted_sum() const {
  double s = 0.0;
  for (const LossComponent& c : components) s += c.weight * c.value;
  return s;
}

double LossReport::component(const std::string& name) const {
  for (const LossComponent& c : components)
    if (c.name == name) return c.value;
  throw std::invalid_argument("LossReport: no component named '" + name + "'");
}

void LossReport::merge(const LossReport& other, double w) {
  const Var scaled = ops::scale(other.total, w);
  total = total.defined() ? ops::add(total, scaled) : scaled;
  for (LossComponent c : other.components) {
    c.weight *= w;
    components.push_back(std::move(c));
  }
}

Var rigid_flow(const Var& depth, const Var& pose_params,
               const CameraIntrinsics& intrinsics, Tensor* valid) {
  intrinsics.validate();
  const Shape ds = depth.shape();
  require(ds.c == 1, "rigid_flow: depth must have one channel");
  require(ds.h == intrinsics.height && ds.w == intrinsics.width,
          "rigid_flow: depth " + ds.str() + " does not match intrinsics " +
              std::to_string(intrinsics.width) + "x" +
              std::to_string(intrinsics.height));
  require(pose_params.shape() == Shape{ds.n, 6, 1, 1},
          "rigid_flow: pose must be [N,6,1,1], got " +
              pose_params.shape().str());
  require(depth.value().all_finite(), "rigid_flow: non-finite depth");

  const CameraIntrinsics k = intrinsics;
  std::vector<ItemMotion> motions;
  for (int n = 0; n < ds.n; ++n)
    motions.push_back(item_motion(pose_params.value(), n));

  Tensor flow({ds.n, 2, ds.h, ds.w});
  Tensor mask({ds.n, 1, ds.h, ds.w});
  for (int n = 0; n < ds.n; ++n) {
    const ItemMotion& m = motions[n];
    const double* d = depth.value().plane(n, 0);
    double* fu = flow.plane(n, 0);
    double* fv = flow.plane(n, 1);
    double* ok = mask.plane(n, 0);
    for (int y = 0; y < ds.h; ++y)
      for (int x = 0; x < ds.w; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * ds.w + x;
        const Eigen::Vector3d ray((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
        const Eigen::Vector3d p = m.rotation * (d[idx] * ray) + m.translation;
        if (p.z() <= kMinProjectedDepth) continue;
        ok[idx] = 1.0;
        fu[idx] = k.fx * (p.x() - ray.x() * p.z()) / p.z();
        fv[idx] = k.fy * (p.y() - ray.y() * p.z()) / p.z();
      }
  }
  if (valid) *valid = mask;

  return make_result(
      std::move(flow), {depth, pose_params},
      [k, motions, mask](const Tensor& g, std::span<Node* const> in) {
        Node* depth_node = in[0];
        Node* pose_node = in[1];
        const Tensor& dv = depth_node->value;
        const Shape s = dv.shape();
        Tensor* gd = depth_node->requires_grad ? &depth_node->grad_buffer()
                                               : nullptr;
        Tensor* gp =
            pose_node->requires_grad ? &pose_node->grad_buffer() : nullptr;
        for (int n = 0; n < s.n; ++n) {
          const ItemMotion& m = motions[n];
          const double* d = dv.plane(n, 0);
          const double* gu = g.plane(n, 0);
          const double* gv = g.plane(n, 1);
          const double* ok = mask.plane(n, 0);
          Eigen::Vector3d g_rot = Eigen::Vector3d::Zero();
          Eigen::Vector3d g_trans = Eigen::Vector3d::Zero();
          for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
              const std::size_t idx = static_cast<std::size_t>(y) * s.w + x;
              if (ok[idx] == 0.0) continue;
              const Eigen::Vector3d ray((x - k.cx) / k.fx, (y - k.cy) / k.fy,
                                        1.0);
              const Eigen::Vector3d pt = d[idx] * ray;
              const Eigen::Vector3d p = m.rotation * pt + m.translation;
              const double iz = 1.0 / p.z();
              const Eigen::Vector3d g_p(
                  gu[idx] * k.fx * iz, gv[idx] * k.fy * iz,
                  -(gu[idx] * k.fx * p.x() + gv[idx] * k.fy * p.y()) * iz *
                      iz);
              if (gd) gd->plane(n, 0)[idx] += g_p.dot(m.rotation * ray);
              if (gp) {
                g_trans += g_p;
                for (int c = 0; c < 3; ++c)
                  g_rot[c] += g_p.dot(m.d_rotation[c] * pt);
              }
            }
          if (gp) {
            for (int c = 0; c < 3; ++c) {
              gp->at(n, c, 0, 0) += g_rot[c];
              gp->at(n, c + 3, 0, 0) += g_trans[c];
            }
          }
        }
      });
}

Reconstruction view_synthesis(const Var& frame_s, const Var& depth,
                              const Var& pose_params,
                              const CameraIntrinsics& intrinsics) {
  require(frame_s.shape().n == depth.shape().n &&
              frame_s.shape().same_spatial(depth.shape()),
          "view_synthesis: frame " + frame_s.shape().str() +
              " and depth " + depth.shape().str() + " are inconsistent");
  Reconstruction r;
  const Var flow = rigid_flow(depth, pose_params, intrinsics, &r.valid);
  r.image = ops::mul(tensor_core::warp_bilinear(frame_s, flow),
                     ops::constant(r.valid));
  return r;
}

Var ssim_dissimilarity(const Var& x, const Var& y) {
  require(x.shape() == y.shape(), "ssim: shape mismatch " + x.shape().str() +
                                      " vs " + y.shape().str());
  using namespace ops;
  const Var mx = avg_pool3_reflect(x);
  const Var my = avg_pool3_reflect(y);
  const Var mxy = mul(mx, my);
  const Var sx = sub(avg_pool3_reflect(square(x)), square(mx));
  const Var sy = sub(avg_pool3_reflect(square(y)), square(my));
  const Var sxy = sub(avg_pool3_reflect(mul(x, y)), mxy);
  const Var num = mul(add_scalar(scale(mxy, 2.0), kSsimC1),
                      add_scalar(scale(sxy, 2.0), kSsimC2));
  const Var den = mul(add_scalar(add(square(mx), square(my)), kSsimC1),
                      add_scalar(add(sx, sy), kSsimC2));
  return clamp(add_scalar(scale(div(num, den), -0.5), 0.5), 0.0, 1.0);
}

Var photometric_loss(const Var& pred, const Var& target, double ssim_weight) {
  require(pred.shape() == target.shape(),
          "photometric_loss: shape mismatch " + pred.shape().str() + " vs " +
              target.shape().str());
  const Var dssim = ops::mean_channels(ssim_dissimilarity(pred, target));
  const Var l1 = ops::mean_channels(ops::abs(ops::sub(pred, target)));
  return ops::add(ops::scale(dssim, ssim_weight),
                  ops::scale(l1, 1.0 - ssim_weight));
}

Var edge_aware_smoothness(const Var& field, const Var& image) {
  require(field.shape().n == image.shape().n &&
              field.shape().same_spatial(image.shape()),
          "smoothness: field " + field.shape().str() + " and image " +
              image.shape().str() + " differ in size");
  using namespace ops;
  Var total = constant(Tensor({1, 1, 1, 1}));
  if (field.shape().w > 1) {
    const Var wx = exp(scale(mean_channels(abs(diff_x(image))), -1.0));
    total = add(total, mean(mul(abs(diff_x(field)), wx)));
  }
  if (field.shape().h > 1) {
    const Var wy = exp(scale(mean_channels(abs(diff_y(image))), -1.0));
    total = add(total, mean(mul(abs(diff_y(field)), wy)));
  }
  return total;
}

Var downsample_to(const Var& image, int height, int width) {
  Var x = image;
  while (x.shape().h > height || x.shape().w > width) {
    require(x.shape().h % 2 == 0 && x.shape().w % 2 == 0 &&
                x.shape().h / 2 >= height && x.shape().w / 2 >= width,
            "downsample_to: " + image.shape().str() +
                " cannot be halved down to " + std::to_string(width) + "x" +
                std::to_string(height));
    x = ops::avg_pool2(x);
  }
  require(x.shape().h == height && x.shape().w == width,
          "downsample_to: size mismatch");
  return x;
}

LossReport depth_loss(const DepthLossInputs& in, const LossWeights& w) {
  require(in.frame_prev.defined() && in.frame_next.defined(),
          "depth_loss: both neighbouring frames are required");
  require(in.pose_prev.defined() && in.pose_next.defined(),
          "depth_loss: both neighbour poses are required");
  const Shape fs = in.frame_t.shape();
  require(in.frame_prev.shape() == fs && in.frame_next.shape() == fs,
          "depth_loss: frames differ in shape");

  Tensor identity;
  {
    NoGradGuard no_grad;
    identity = ops::minimum(
                   photometric_loss(in.frame_prev, in.frame_t, w.ssim),
                   photometric_loss(in.frame_next, in.frame_t, w.ssim))
                   .value();
  }

  const auto reprojection = [&](const Var& src, const Var& depth,
                                const Var& pose) {
    const Reconstruction r =
        view_synthesis(src, depth, pose, in.intrinsics);
    Tensor fill(r.valid.shape());
    for (std::size_t j = 0; j < fill.numel(); ++j)
      fill[j] = kInvalidError * (1.0 - r.valid[j]);
    return ops::add(
        ops::mul(photometric_loss(r.image, in.frame_t, w.ssim),
                 ops::constant(r.valid)),
        ops::constant(std::move(fill)));
  };

  LossReport report;
  const int scales = static_cast<int>(in.disparity.size());
  const double per_scale = 1.0 / scales;
  for (int k = 0; k < scales; ++k) {
    const Var& disp = in.disparity[k];
    require(disp.defined(), "depth_loss: missing disparity at scale " +
                                std::to_string(k));
    const Var disp_full = disp.shape().same_spatial(fs)
                              ? disp
                              : ops::resize_bilinear(disp, fs.h, fs.w);
    const Var depth =
        decoders::disparity_to_depth(disp_full, in.min_depth, in.max_depth);
    const Var best = ops::minimum(reprojection(in.frame_prev, depth, in.pose_prev),
                                  reprojection(in.frame_next, depth, in.pose_next));
    Tensor keep(best.shape());
    for (std::size_t j = 0; j < keep.numel(); ++j)
      keep[j] = best.value()[j] < identity[j] ? 1.0 : 0.0;
    const Var photo = ops::mean(ops::mul(best, ops::constant(std::move(keep))));

    const Var norm_disp = ops::div(disp, ops::mean_per_item(disp));
    const Var smooth = edge_aware_smoothness(
        norm_disp, downsample_to(in.frame_t, disp.shape().h, disp.shape().w));

    const std::string tag = "/s" + std::to_string(k);
    const Var term = ops::add(ops::scale(photo, per_scale),
                              ops::scale(smooth, per_scale * w.depth_smoothness));
    report.total = report.total.defined() ? ops::add(report.total, term) : term;
    report.components.push_back(
        {"photometric_depth" + tag, photo.value()[0], per_scale});
    report.components.push_back({"smooth_depth" + tag, smooth.value()[0],
                                 per_scale * w.depth_smoothness});
  }
  return report;
}

LossReport flow_loss(const Var& frame_t, const Var& frame_s,
                     std::span<const Var> flows, const LossWeights& w) {
  require(static_cast<int>(flows.size()) == kExchangeScales,
          "flow_loss: expected " + std::to_string(kExchangeScales) +
              " flow scales, got " + std::to_string(flows.size()));
  require(frame_t.shape() == frame_s.shape(), "flow_loss: frame shape mismatch");
  LossReport report;
  for (int i = 1; i <= kExchangeScales; ++i) {
    const Var& flow = flows[i - 1];
    require(flow.defined(), "flow_loss: missing flow at scale " +
                                std::to_string(i));
    const int h = flow.shape().h;
    const int wd = flow.shape().w;
    const Var ft = downsample_to(frame_t, h, wd);
    const Var fs = downsample_to(frame_s, h, wd);
    const Var error =
        photometric_loss(tensor_core::warp_bilinear(fs, flow), ft, w.ssim);

    const int my = std::min(static_cast<int>(std::ceil(w.flow_border * h)), (h - 1) / 2);
    const int mx = std::min(static_cast<int>(std::ceil(w.flow_border * wd)), (wd - 1) / 2);
    Tensor interior({1, 1, h, wd});
    for (int y = my; y < h - my; ++y)
      for (int x = mx; x < wd - mx; ++x) interior.at(0, 0, y, x) = 1.0;
    const double count =
        static_cast<double>(flow.shape().n) * (h - 2 * my) * (wd - 2 * mx);
    const Var photo = ops::scale(
        ops::sum(ops::mul(error, ops::constant(std::move(interior)))),
        1.0 / count);
    const Var smooth = edge_aware_smoothness(flow, ft);

    const double scale_w = w.flow_scales[i - 1];
    const double smooth_w =
        scale_w * w.flow_smoothness * std::pow(w.flow_smoothness_decay, i - 1);
    const Var term = ops::add(ops::scale(photo, scale_w),
                              ops::scale(smooth, smooth_w));
    report.total = report.total.defined() ? ops::add(report.total, term) : term;
    const std::string tag = "/s" + std::to_string(i);
    report.components.push_back({"photometric_flow" + tag, photo.value()[0],
                                 scale_w});
    report.components.push_back({"smooth_flow" + tag, smooth.value()[0],
                                 smooth_w});
  }
  return report;
}

}  // namespace dfnet::losses
