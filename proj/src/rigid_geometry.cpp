#include "geoflow/rigid_geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace geoflow {

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const Mat3 err = r.transpose() * r - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

Vec3 so3_log(const Mat3& r) {
  if (!is_rotation(r, 1e-7)) {
    throw InvalidRotationError("so3_log: input is not a rotation matrix");
  }
  const double cos_theta =
      std::min(1.0, std::max(-1.0, (r.trace() - 1.0) * 0.5));
  const double theta = std::acos(cos_theta);
  const Vec3 half_vee = 0.5 * vee(r - r.transpose());  // = sin(theta) * axis

  if (theta < 1e-7) {
    // theta / (2 sin theta) ~ 1/2 (1 + theta^2/6)
    return half_vee * (1.0 + theta * theta / 6.0);
  }
  if (theta > M_PI - 1e-4) {
    // sin(theta) ~ 0: the axis is the unit eigenvector of the symmetric part
    // for eigenvalue 1.
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (r + r.transpose()));
    Vec3 axis = es.eigenvectors().col(2);  // largest eigenvalue
    axis.normalize();
    if (half_vee.norm() > 1e-10) {
      if (half_vee.dot(axis) < 0.0) axis = -axis;
    } else {
      // theta == pi: log is two-valued; pick a canonical sign.
      if (axis.x() < 0.0 || (axis.x() == 0.0 && axis.y() < 0.0) ||
          (axis.x() == 0.0 && axis.y() == 0.0 && axis.z() < 0.0)) {
        axis = -axis;
      }
    }
    return theta * axis;
  }
  return (theta / std::sin(theta)) * half_vee;
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  double a, b;  // R = I + a K + b K^2
  if (theta < 1e-7) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 relative_rotation(const Mat3& ri, const Mat3& rj) {
  return ri.transpose() * rj;
}

Vec3 camera_center(const CameraPose& pose) {
  return -(pose.rotation.transpose() * pose.translation);
}

Projection project(const Vec3& p_world, const CameraPose& pose,
                   const Intrinsics& k) {
  const Vec3 pc = pose.rotation * p_world + pose.translation;
  Projection out;
  out.depth = pc.z();
  if (std::abs(pc.z()) <= 1e-12) {
    out.degenerate = true;
    return out;
  }
  out.pixel.x() = k.fx * pc.x() / pc.z() + k.cx;
  out.pixel.y() = k.fy * pc.y() / pc.z() + k.cy;
  return out;
}

Vec3 unproject(const Vec2& pixel, double depth, const CameraPose& pose,
               const Intrinsics& k) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("unproject: depth must be positive");
  }
  const Vec3 pc((pixel.x() - k.cx) * depth / k.fx,
                (pixel.y() - k.cy) * depth / k.fy, depth);
  return pose.rotation.transpose() * (pc - pose.translation);
}

Mat3 fundamental_matrix(const CameraPose& pose_i, const CameraPose& pose_j,
                        const Intrinsics& k) {
  const Vec3 ci = camera_center(pose_i);
  const Vec3 cj = camera_center(pose_j);
  if ((ci - cj).norm() < 1e-12) {
    throw DegenerateBaselineError(
        "fundamental_matrix: identical camera centers");
  }
  const Mat3 r_rel = pose_j.rotation * pose_i.rotation.transpose();
  const Vec3 t_rel = pose_j.translation - r_rel * pose_i.translation;
  Mat3 km;
  km << k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0;
  const Mat3 k_inv = km.inverse();
  Mat3 f = k_inv.transpose() * skew(t_rel) * r_rel * k_inv;
  return f / f.norm();
}

}  // namespace geoflow
