// SO(3) and pinhole-camera primitives shared by the rewards, the toy
// decoder, and the evaluation metrics.
//
// Pose convention: world-to-camera, x_cam = R * x_world + t, so the camera
// center is c = -R^T t. Pixel coordinates have their origin at the center of
// the top-left pixel.
#pragma once

#include <Eigen/Core>
#include <stdexcept>

namespace geoflow {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

struct CameraPose {
  Mat3 rotation = Mat3::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

struct InvalidRotationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// R^T R = I and det(R) = 1 within tol per entry.
bool is_rotation(const Mat3& r, double tol = 1e-9);

Mat3 skew(const Vec3& v);
Vec3 vee(const Mat3& m);

// Axis-angle log map; returned angle is in [0, pi]. Near angle 0 a
// second-order Taylor expansion of the vee map is used; near pi the axis is
// recovered from the symmetric-part eigen decomposition.
// Throws InvalidRotationError for non-orthonormal input.
Vec3 so3_log(const Mat3& r);

// Rodrigues formula.
Mat3 so3_exp(const Vec3& w);

// R_i^T R_j.
Mat3 relative_rotation(const Mat3& ri, const Mat3& rj);

Vec3 camera_center(const CameraPose& pose);

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  // Set when the camera-space z is within 1e-12 of zero; pixel is then
  // meaningless and the point must be excluded downstream.
  bool degenerate = false;
};

Projection project(const Vec3& p_world, const CameraPose& pose,
                   const Intrinsics& k);

// Inverse of project for depth > 0; throws std::invalid_argument otherwise.
Vec3 unproject(const Vec2& pixel, double depth, const CameraPose& pose,
               const Intrinsics& k);

struct DegenerateBaselineError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// F = K^-T [t_rel]x R_rel K^-1 for the pair (i, j), normalized to unit
// Frobenius norm, satisfying x_j^T F x_i = 0 for corresponding pixels.
// Throws DegenerateBaselineError when the camera centers coincide.
Mat3 fundamental_matrix(const CameraPose& pose_i, const CameraPose& pose_j,
                        const Intrinsics& k);

}  // namespace geoflow
