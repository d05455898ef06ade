#include "geoflow/eval_metrics.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace geoflow {

double sampson_error(const Mat3& f, const std::vector<Correspondence>& matches,
                     int* skipped) {
  if (matches.empty()) {
    throw std::invalid_argument("sampson_error: empty match set");
  }
  double sum = 0.0;
  int used = 0;
  int skip = 0;
  for (const auto& m : matches) {
    const Vec3 x(m.pixel_i.x(), m.pixel_i.y(), 1.0);
    const Vec3 xp(m.pixel_j.x(), m.pixel_j.y(), 1.0);
    const Vec3 fx = f * x;
    const Vec3 ftxp = f.transpose() * xp;
    const double num = xp.dot(fx);
    const double denom = fx.x() * fx.x() + fx.y() * fx.y() +
                         ftxp.x() * ftxp.x() + ftxp.y() * ftxp.y();
    if (denom < 1e-12) {
      ++skip;
      continue;
    }
    sum += num * num / denom;
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0) return 0.0;
  return sum / used;
}

RelativePose relative_pose(const CameraPose& pose_i, const CameraPose& pose_j) {
  RelativePose rel;
  rel.rotation = pose_j.rotation * pose_i.rotation.transpose();
  rel.translation = pose_j.translation - rel.rotation * pose_i.translation;
  return rel;
}

namespace {

double rotation_error_deg(const RelativePose& a, const RelativePose& b) {
  const Vec3 w = so3_log(a.rotation.transpose() * b.rotation);
  return w.norm() * 180.0 / M_PI;
}

// Angle between translation directions; returns -1 when either baseline is
// degenerate.
double translation_error_deg(const RelativePose& a, const RelativePose& b,
                             double baseline_floor = 1e-9) {
  if (b.translation.norm() < baseline_floor ||
      a.translation.norm() < baseline_floor) {
    return -1.0;
  }
  const Vec3 an = a.translation.normalized();
  const Vec3 bn = b.translation.normalized();
  // atan2 form is exact at 0 and pi, unlike acos of a rounded dot product
  return std::atan2(an.cross(bn).norm(), an.dot(bn)) * 180.0 / M_PI;
}

void check_lengths(const std::vector<CameraPose>& pred,
                   const std::vector<CameraPose>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("pose metric: sequence length mismatch");
  }
  if (pred.size() < 2) {
    throw std::invalid_argument("pose metric: need at least 2 poses");
  }
}

template <typename ErrFn>
double pair_fraction(const std::vector<CameraPose>& pred,
                     const std::vector<CameraPose>& gt, ErrFn&& err) {
  long hits = 0;
  long total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const int verdict = err(i, j);
      if (verdict < 0) continue;  // skipped pair
      ++total;
      hits += verdict;
    }
  }
  return total ? static_cast<double>(hits) / total : 0.0;
}

}  // namespace

double rotation_accuracy(const std::vector<CameraPose>& pred,
                         const std::vector<CameraPose>& gt, double tau_deg) {
  check_lengths(pred, gt);
  return pair_fraction(pred, gt, [&](std::size_t i, std::size_t j) {
    const double e = rotation_error_deg(relative_pose(pred[i], pred[j]),
                                        relative_pose(gt[i], gt[j]));
    return e < tau_deg ? 1 : 0;
  });
}

double translation_accuracy(const std::vector<CameraPose>& pred,
                            const std::vector<CameraPose>& gt,
                            double tau_deg) {
  check_lengths(pred, gt);
  return pair_fraction(pred, gt, [&](std::size_t i, std::size_t j) {
    const double e = translation_error_deg(relative_pose(pred[i], pred[j]),
                                           relative_pose(gt[i], gt[j]));
    if (e < 0.0) return -1;
    return e < tau_deg ? 1 : 0;
  });
}

double pose_auc(const std::vector<CameraPose>& pred,
                const std::vector<CameraPose>& gt, double tau_max_deg) {
  check_lengths(pred, gt);
  std::vector<double> errors;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const RelativePose rp = relative_pose(pred[i], pred[j]);
      const RelativePose rg = relative_pose(gt[i], gt[j]);
      const double er = rotation_error_deg(rp, rg);
      const double et = translation_error_deg(rp, rg);
      errors.push_back(et < 0.0 ? er : std::max(er, et));
    }
  }
  // trapezoid rule over a uniform grid, kept as a plain sum of accuracy
  // values so that an all-exact input integrates to exactly 1
  const int grid = 100;
  double acc_sum = 0.0;
  double prev_acc = 0.0;
  for (int g = 0; g <= grid; ++g) {
    const double tau = tau_max_deg * g / grid;
    long hits = 0;
    for (double e : errors) {
      if (e <= tau) ++hits;
    }
    const double acc = static_cast<double>(hits) / errors.size();
    if (g > 0) acc_sum += acc + prev_acc;
    prev_acc = acc;
  }
  return acc_sum / (2.0 * grid);
}

}  // namespace geoflow
