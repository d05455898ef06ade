// Sampson epipolar error and relative-pose accuracy metrics.
#pragma once

#include <vector>

#include "geoflow/rigid_geometry.hpp"

namespace geoflow {

struct Correspondence {
  Vec2 pixel_i = Vec2::Zero();
  Vec2 pixel_j = Vec2::Zero();
};

// Mean first-order Sampson error over matches; per-match denominators below
// 1e-12 are skipped (counted in *skipped when given).
double sampson_error(const Mat3& f, const std::vector<Correspondence>& matches,
                     int* skipped = nullptr);

// Fraction of unordered distinct frame pairs whose relative-rotation angular
// error is below tau_deg.
double rotation_accuracy(const std::vector<CameraPose>& pred,
                         const std::vector<CameraPose>& gt, double tau_deg);

// Same over relative-translation directions (scale-free); pairs with
// ground-truth baseline below 1e-9 are skipped.
double translation_accuracy(const std::vector<CameraPose>& pred,
                            const std::vector<CameraPose>& gt, double tau_deg);

// Area under the cumulative accuracy of max(rotation, translation-direction)
// error over a 100-point threshold grid on [0, tau_max_deg], normalized.
double pose_auc(const std::vector<CameraPose>& pred,
                const std::vector<CameraPose>& gt, double tau_max_deg);

// Relative pose j relative to i: x_j = R x_i + t.
struct RelativePose {
  Mat3 rotation;
  Vec3 translation;
};
RelativePose relative_pose(const CameraPose& pose_i, const CameraPose& pose_j);

}  // namespace geoflow
