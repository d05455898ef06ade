// Camera-motion smoothness and geometry reprojection-consistency rewards
// computed from per-frame geometric predictions.
#pragma once

#include <optional>
#include <vector>

#include "geoflow/rigid_geometry.hpp"

namespace geoflow {

// One frame's predicted geometry. Grids are stored row-major, index
// y * width + x. Invalid depth entries are NaN; point_map entries are finite
// wherever depth is valid.
struct GeometryFrame {
  CameraPose pose;
  Intrinsics intrinsics;
  int height = 0;
  int width = 0;
  std::vector<double> depth;                      // H*W
  std::vector<Vec3> point_map;                    // H*W, world frame
  std::optional<std::vector<Vec3>> flow;          // H*W, per-frame displacement
};

struct RewardConfig {
  double eps_div = 1e-8;      // smoothness terms with smaller denominator -> 0
  // When unset, 0.05 x scene diagonal (bounding box of valid point-map
  // entries) is used.
  std::optional<double> flow_threshold;
  double z_near = 1e-6;
  int worst_k = 3;
};

struct RewardBundle {
  double r_motion = 0.0;  // in (0, 1]
  double r_geo = 0.0;     // <= 0
  double e_trans = 0.0;
  double e_rot = 0.0;
  std::vector<double> per_view_errors;
  int empty_view_count = 0;  // views whose valid projected-pixel set was empty
};

struct InsufficientFramesError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyCloudError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mean over interior frames of ||a_i|| / (||v_i|| + ||v_{i-1}||), with
// v_i = c_{i+1} - c_i and a_i = v_i - v_{i-1}. Requires T >= 3.
double translational_smoothness_error(const std::vector<Vec3>& centers,
                                      const RewardConfig& cfg);

// Same form with angular velocities w_i = so3_log(R_i^T R_{i+1}).
double rotational_smoothness_error(const std::vector<Mat3>& rotations,
                                   const RewardConfig& cfg);

double motion_reward(const std::vector<GeometryFrame>& frames,
                     const RewardConfig& cfg);

// Union of valid point-map entries across frames; when flow is present,
// entries with ||flow|| > threshold are excluded as dynamic.
// Throws EmptyCloudError when nothing survives.
std::vector<Vec3> build_static_cloud(const std::vector<GeometryFrame>& frames,
                                     const RewardConfig& cfg);

struct DepthRender {
  std::vector<double> depth;   // H*W, meaningful where mask set
  std::vector<unsigned char> mask;
};

// Nearest-pixel splat (ties at half-integer boundaries round toward the
// smaller index), z-buffer minimum, points with camera z <= z_near skipped.
DepthRender render_depth(const std::vector<Vec3>& cloud,
                         const CameraPose& pose, const Intrinsics& k,
                         double z_near);

// Pixel index for a continuous coordinate, ties toward the smaller index.
inline long raster_index(double u) {
  return static_cast<long>(std::ceil(u - 0.5));
}

// Per-view mean |rendered depth - predicted depth| over valid projected
// pixels. A view with an empty valid set contributes 0 (counted in the
// bundle's diagnostic).
std::vector<double> reprojection_error_per_view(
    const std::vector<GeometryFrame>& frames, const RewardConfig& cfg,
    int* empty_view_count = nullptr);

// Negated mean of the worst_k largest per-view errors (all views when
// N < worst_k).
double geometry_reward(const std::vector<GeometryFrame>& frames,
                       const RewardConfig& cfg);

double worst_k_mean_negated(const std::vector<double>& errors, int worst_k);

RewardBundle reward_bundle(const std::vector<GeometryFrame>& frames,
                           const RewardConfig& cfg);

// 0.05 x diagonal of the bounding box of valid point-map entries.
double default_flow_threshold(const std::vector<GeometryFrame>& frames);

}  // namespace geoflow
