#pragma once

#include "tpslam/common.hpp"

#include <Eigen/Geometry>

#include <array>
#include <span>

namespace tpslam {

/// Camera-to-world pose. The quaternion (w, x, y, z) and translation are kept
/// as seven raw reals so an optimizer can update them directly; rotation is
/// always evaluated from the normalized quaternion.
template <class T>
struct CameraPose {
  std::array<T, 7> params{T(1), T(0), T(0), T(0), T(0), T(0), T(0)};

  static CameraPose identity() { return {}; }

  static CameraPose from_rt(const Mat3<T>& R, const Vec3<T>& t) {
    Eigen::Quaternion<T> q(R);
    q.normalize();
    CameraPose p;
    p.params = {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()};
    return p;
  }

  template <class U>
  CameraPose<U> cast() const {
    CameraPose<U> out;
    for (int i = 0; i < 7; ++i) out.params[i] = U(params[i]);
    return out;
  }

  std::span<T> rotation_params() { return {params.data(), 4}; }
  std::span<T> translation_params() { return {params.data() + 4, 3}; }

  Vec3<T> translation() const { return {params[4], params[5], params[6]}; }

  Eigen::Quaternion<T> quaternion() const {
    Eigen::Quaternion<T> q(params[0], params[1], params[2], params[3]);
    q.normalize();
    return q;
  }

  Mat3<T> rotation() const { return quaternion().toRotationMatrix(); }

  void normalize() {
    const T n = std::sqrt(params[0] * params[0] + params[1] * params[1] +
                          params[2] * params[2] + params[3] * params[3]);
    for (int i = 0; i < 4; ++i) params[i] /= n;
  }

  /// Applies the pose to a camera-frame point.
  Vec3<T> operator*(const Vec3<T>& p) const { return rotation() * p + translation(); }

  CameraPose operator*(const CameraPose& o) const {
    return from_rt(rotation() * o.rotation(), rotation() * o.translation() + translation());
  }

  CameraPose inverse() const {
    const Mat3<T> Rt = rotation().transpose();
    return from_rt(Rt, -(Rt * translation()));
  }

  bool operator==(const CameraPose&) const = default;
};

/// Chain rule from dL/dR (R evaluated at q/|q|) to dL/dq for the raw quaternion.
template <class T>
std::array<T, 4> rotation_grad_to_quaternion(const CameraPose<T>& pose, const Mat3<T>& G) {
  const T n = std::sqrt(pose.params[0] * pose.params[0] + pose.params[1] * pose.params[1] +
                        pose.params[2] * pose.params[2] + pose.params[3] * pose.params[3]);
  const T w = pose.params[0] / n, x = pose.params[1] / n, y = pose.params[2] / n,
          z = pose.params[3] / n;
  Mat3<T> dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  const std::array<T, 4> gu{G.cwiseProduct(dw).sum(), G.cwiseProduct(dx).sum(),
                            G.cwiseProduct(dy).sum(), G.cwiseProduct(dz).sum()};
  const std::array<T, 4> u{w, x, y, z};
  const T proj = gu[0] * u[0] + gu[1] * u[1] + gu[2] * u[2] + gu[3] * u[3];
  std::array<T, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = (gu[i] - proj * u[i]) / n;
  return out;
}

/// Constant-velocity prediction: prev * (prev2^-1 * prev).
template <class T>
CameraPose<T> constant_velocity(const CameraPose<T>& prev2, const CameraPose<T>& prev) {
  return prev * (prev2.inverse() * prev);
}

/// Camera looking from `eye` towards `target`; camera axes x right, y down, z forward.
template <class T>
CameraPose<T> look_at(const Vec3<T>& eye, const Vec3<T>& target, const Vec3<T>& up) {
  const Vec3<T> f = (target - eye).normalized();
  const Vec3<T> r = f.cross(up).normalized();
  const Vec3<T> d = f.cross(r);
  Mat3<T> R;
  R.col(0) = r;
  R.col(1) = d;
  R.col(2) = f;
  return CameraPose<T>::from_rt(R, eye);
}

}  // namespace tpslam
