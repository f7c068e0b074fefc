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

// Pinhole camera model and 6-DoF motion parameterisation.

#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>

#include "dfnet/tensor.hpp"

namespace dfnet::backbone {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws unless fx, fy > 0 and the principal point lies inside the image.
  void validate() const {
    require(fx > 0.0 && fy > 0.0, "intrinsics: focal lengths must be > 0");
    require(width > 0 && height > 0, "intrinsics: image size must be > 0");
    require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
            "intrinsics: principal point outside the image");
  }

  /// Intrinsics for the same camera after resizing the image.
  CameraIntrinsics resized(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
  }

  /// Intrinsics of a pyramid level `factor` times smaller.
  CameraIntrinsics downscaled(int factor) const {
    return resized(width / factor, height / factor);
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

/// Axis-angle rotation (radians) plus translation. The transform maps points
/// from the target camera frame into the source camera frame:
/// X_s = R(rotation) * X_t + translation.
struct Motion {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// The reverse motion, source to target.
  Motion inverse() const;
};

/// [1, 6, 1, 1] pose parameters (rotation then translation) of `m`.
inline Tensor motion_params(const Motion& m) {
  return Tensor({1, 6, 1, 1},
                {m.rotation.x(), m.rotation.y(), m.rotation.z(),
                 m.translation.x(), m.translation.y(), m.translation.z()});
}

/// Forward-mode dual number carrying N directional derivatives.
template <int N>
struct Jet {
  double a = 0.0;
  std::array<double, N> v{};

  Jet() = default;
  Jet(double value) : a(value) {}  // NOLINT: implicit from scalar
  static Jet variable(double value, int k) {
    Jet j(value);
    j.v[k] = 1.0;
    return j;
  }

  friend Jet operator+(const Jet& x, const Jet& y) {
    Jet r(x.a + y.a);
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] + y.v[i];
    return r;
  }
  friend Jet operator-(const Jet& x, const Jet& y) {
    Jet r(x.a - y.a);
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] - y.v[i];
    return r;
  }
  friend Jet operator*(const Jet& x, const Jet& y) {
    Jet r(x.a * y.a);
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] * y.a + x.a * y.v[i];
    return r;
  }
  friend Jet operator/(const Jet& x, const Jet& y) {
    Jet r(x.a / y.a);
    for (int i = 0; i < N; ++i)
      r.v[i] = (x.v[i] * y.a - x.a * y.v[i]) / (y.a * y.a);
    return r;
  }
  friend Jet sqrt(const Jet& x) {
    Jet r(std::sqrt(x.a));
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] / (2.0 * r.a);
    return r;
  }
  friend Jet sin(const Jet& x) {
    Jet r(std::sin(x.a));
    const double c = std::cos(x.a);
    for (int i = 0; i < N; ++i) r.v[i] = c * x.v[i];
    return r;
  }
  friend Jet cos(const Jet& x) {
    Jet r(std::cos(x.a));
    const double s = -std::sin(x.a);
    for (int i = 0; i < N; ++i) r.v[i] = s * x.v[i];
    return r;
  }
};

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Jet<N>& x) {
  return x.a;
}

/// Row-major 3x3 rotation from an axis-angle vector (Rodrigues). Written as
/// R = I + A [w]x + B [w]x^2 with A, B series-expanded near zero so it stays
/// smooth (and differentiable through Jet) at the identity.
template <typename T>
std::array<T, 9> rotation_matrix(const T& wx, const T& wy, const T& wz) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = wx * wx + wy * wy + wz * wz;
  T a, b;
  if (value_of(theta2) < 1e-8) {
    a = T(1.0) - theta2 / T(6.0) + theta2 * theta2 / T(120.0);
    b = T(0.5) - theta2 / T(24.0) + theta2 * theta2 / T(720.0);
  } else {
    const T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (T(1.0) - cos(theta)) / theta2;
  }
  // [w]x and [w]x^2
  const std::array<T, 9> k{T(0.0), T(0.0) - wz, wy, wz, T(0.0), T(0.0) - wx,
                           T(0.0) - wy, wx, T(0.0)};
  std::array<T, 9> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T k2 = T(0.0);
      for (int m = 0; m < 3; ++m) k2 = k2 + k[i * 3 + m] * k[m * 3 + j];
      r[i * 3 + j] = T(i == j ? 1.0 : 0.0) + a * k[i * 3 + j] + b * k2;
    }
  return r;
}

inline Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& w) {
  const auto r = rotation_matrix<double>(w.x(), w.y(), w.z());
  Eigen::Matrix3d m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return m;
}

inline Motion Motion::inverse() const {
  return {-rotation, -(rotation_matrix(rotation).transpose() * translation)};
}

}  // namespace dfnet::backbone
