#include "geoflow/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geoflow {

namespace {

double smoothness_from_velocities(const std::vector<Vec3>& v,
                                  const RewardConfig& cfg) {
  // v has T-1 entries; terms indexed by interior frames.
  double sum = 0.0;
  const std::size_t n_terms = v.size() - 1;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const Vec3 a = v[i] - v[i - 1];
    const double denom = v[i].norm() + v[i - 1].norm();
    if (denom >= cfg.eps_div) {
      sum += a.norm() / denom;
    }
  }
  return sum / static_cast<double>(n_terms);
}

}  // namespace

double translational_smoothness_error(const std::vector<Vec3>& centers,
                                      const RewardConfig& cfg) {
  if (centers.size() < 3) {
    throw InsufficientFramesError(
        "translational_smoothness_error: need at least 3 frames");
  }
  std::vector<Vec3> v(centers.size() - 1);
  for (std::size_t i = 0; i + 1 < centers.size(); ++i) {
    v[i] = centers[i + 1] - centers[i];
  }
  return smoothness_from_velocities(v, cfg);
}

double rotational_smoothness_error(const std::vector<Mat3>& rotations,
                                   const RewardConfig& cfg) {
  if (rotations.size() < 3) {
    throw InsufficientFramesError(
        "rotational_smoothness_error: need at least 3 frames");
  }
  std::vector<Vec3> w(rotations.size() - 1);
  for (std::size_t i = 0; i + 1 < rotations.size(); ++i) {
    w[i] = so3_log(relative_rotation(rotations[i], rotations[i + 1]));
  }
  return smoothness_from_velocities(w, cfg);
}

double motion_reward(const std::vector<GeometryFrame>& frames,
                     const RewardConfig& cfg) {
  std::vector<Vec3> centers;
  std::vector<Mat3> rotations;
  centers.reserve(frames.size());
  rotations.reserve(frames.size());
  for (const auto& f : frames) {
    centers.push_back(camera_center(f.pose));
    rotations.push_back(f.pose.rotation);
  }
  const double e_trans = translational_smoothness_error(centers, cfg);
  const double e_rot = rotational_smoothness_error(rotations, cfg);
  return 0.5 * (1.0 / (1.0 + e_trans) + 1.0 / (1.0 + e_rot));
}

double default_flow_threshold(const std::vector<GeometryFrame>& frames) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  bool any = false;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.point_map.size(); ++i) {
      if (!std::isfinite(f.depth[i])) continue;
      lo = lo.cwiseMin(f.point_map[i]);
      hi = hi.cwiseMax(f.point_map[i]);
      any = true;
    }
  }
  if (!any) return 0.0;
  return 0.05 * (hi - lo).norm();
}

std::vector<Vec3> build_static_cloud(const std::vector<GeometryFrame>& frames,
                                     const RewardConfig& cfg) {
  const double threshold =
      cfg.flow_threshold ? *cfg.flow_threshold : default_flow_threshold(frames);
  std::vector<Vec3> cloud;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.point_map.size(); ++i) {
      if (!std::isfinite(f.depth[i])) continue;
      if (f.flow && (*f.flow)[i].norm() > threshold) continue;
      cloud.push_back(f.point_map[i]);
    }
  }
  if (cloud.empty()) {
    throw EmptyCloudError("build_static_cloud: no static points");
  }
  return cloud;
}

DepthRender render_depth(const std::vector<Vec3>& cloud,
                         const CameraPose& pose, const Intrinsics& k,
                         double z_near) {
  DepthRender out;
  out.depth.assign(static_cast<std::size_t>(k.width) * k.height,
                   std::numeric_limits<double>::infinity());
  out.mask.assign(out.depth.size(), 0);
  for (const auto& p : cloud) {
    const Projection pr = project(p, pose, k);
    if (pr.degenerate || pr.depth <= z_near) continue;
    const long px = raster_index(pr.pixel.x());
    const long py = raster_index(pr.pixel.y());
    if (px < 0 || px >= k.width || py < 0 || py >= k.height) continue;
    const std::size_t idx = static_cast<std::size_t>(py) * k.width + px;
    if (pr.depth < out.depth[idx]) out.depth[idx] = pr.depth;
    out.mask[idx] = 1;
  }
  return out;
}

std::vector<double> reprojection_error_per_view(
    const std::vector<GeometryFrame>& frames, const RewardConfig& cfg,
    int* empty_view_count) {
  const std::vector<Vec3> cloud = build_static_cloud(frames, cfg);
  std::vector<double> errors;
  errors.reserve(frames.size());
  int empties = 0;
  for (const auto& f : frames) {
    const DepthRender render =
        render_depth(cloud, f.pose, f.intrinsics, cfg.z_near);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < render.depth.size(); ++i) {
      if (!render.mask[i] || !std::isfinite(f.depth[i])) continue;
      sum += std::abs(render.depth[i] - f.depth[i]);
      ++count;
    }
    if (count == 0) {
      ++empties;
      errors.push_back(0.0);
    } else {
      errors.push_back(sum / static_cast<double>(count));
    }
  }
  if (empty_view_count) *empty_view_count = empties;
  return errors;
}

double worst_k_mean_negated(const std::vector<double>& errors, int worst_k) {
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const std::size_t n =
      std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(worst_k));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += sorted[i];
  return -sum / static_cast<double>(n);
}

double geometry_reward(const std::vector<GeometryFrame>& frames,
                       const RewardConfig& cfg) {
  return worst_k_mean_negated(reprojection_error_per_view(frames, cfg),
                              cfg.worst_k);
}

RewardBundle reward_bundle(const std::vector<GeometryFrame>& frames,
                           const RewardConfig& cfg) {
  RewardBundle out;
  std::vector<Vec3> centers;
  std::vector<Mat3> rotations;
  for (const auto& f : frames) {
    centers.push_back(camera_center(f.pose));
    rotations.push_back(f.pose.rotation);
  }
  out.e_trans = translational_smoothness_error(centers, cfg);
  out.e_rot = rotational_smoothness_error(rotations, cfg);
  out.r_motion =
      0.5 * (1.0 / (1.0 + out.e_trans) + 1.0 / (1.0 + out.e_rot));
  out.per_view_errors =
      reprojection_error_per_view(frames, cfg, &out.empty_view_count);
  out.r_geo = worst_k_mean_negated(out.per_view_errors, cfg.worst_k);
  return out;
}

}  // namespace geoflow
