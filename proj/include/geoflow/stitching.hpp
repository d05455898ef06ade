// Toy-scale latent geometry model construction: stitch-layer search over a
// layered reference network, connector fitting, alignment fine-tuning, and
// the latent-perturbation robustness study.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "geoflow/rewards.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

using Feature = Eigen::VectorXd;

struct Layer {
  enum Kind { kAffine, kTanhAffine, kAtanhAffine };
  Kind kind = kAffine;
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  Feature forward(const Feature& x) const;
};

// Per-frame geometric predictions as flat head outputs.
struct ModalityOutputs {
  Eigen::VectorXd pose;   // num_frames x 12 (9 rotation + 3 translation)
  Eigen::VectorXd depth;  // num_frames x (h * w), pre-activation
  Eigen::VectorXd point;  // num_frames x (h * w * 3)
  Eigen::VectorXd flow;   // num_frames x (h * w * 3)
};

struct GeometryHeads {
  Layer pose;   // all kAffine
  Layer depth;
  Layer point;
  Layer flow;

  ModalityOutputs apply(const Feature& feature) const;
};

// Phi = T_L o ... o T_1 plus output heads.
struct LayeredGeometryNet {
  std::vector<Layer> layers;
  GeometryHeads heads;
  int num_frames = 4;
  int grid_h = 4;
  int grid_w = 4;

  int depth_count() const { return static_cast<int>(layers.size()); }
  // Phi_{1:l}; l = 0 returns the input.
  Feature forward_prefix(const Feature& x, int l) const;
  ModalityOutputs predict(const Feature& x) const;
};

struct AffineEncoder {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Feature forward(const Feature& x) const { return a * x + b; }
};

struct AlignConfig {
  double lambda_pose = 1.0;
  double lambda_depth = 1.0;
  double lambda_point = 1.0;
  double lambda_flow = 1.0;
  int calib_size = 64;
  double search_learning_rate = 1e-2;  // unused by the closed-form fit
  double finetune_learning_rate = 2e-3;
  // Per-epoch geometric step decay; sign gradients stall at a loss floor
  // proportional to the step size unless it shrinks.
  double finetune_lr_decay = 0.995;
  int epochs = 200;
};

struct StitchSearchResult {
  int stitch_layer = 0;  // 1-based
  Eigen::MatrixXd connector_w;
  Eigen::VectorXd connector_b;
  std::vector<double> per_layer_errors;  // index l-1 -> mean squared residual
  bool low_rank = false;
};

// For each candidate l fits an affine connector by least squares to the
// layer-l features over the calibration inputs and returns the argmin
// (ties toward smaller l). The connector is re-fit from scratch per
// candidate. Throws std::invalid_argument on an empty calibration set.
StitchSearchResult stitch_search(const AffineEncoder& encoder,
                                 const LayeredGeometryNet& net,
                                 const std::vector<Feature>& calib,
                                 const AlignConfig& cfg);

// Connector + downstream layers + heads.
struct StitchedModel {
  Layer connector;  // kAffine
  int stitch_layer = 0;
  std::vector<Layer> downstream;  // T_{l+1} .. T_L
  GeometryHeads heads;
  int num_frames = 4;
  int grid_h = 4;
  int grid_w = 4;

  ModalityOutputs predict(const Feature& latent) const;
  // Head outputs materialized as GeometryFrame (rotation projected onto
  // SO(3), depth through softplus).
  std::vector<GeometryFrame> predict_frames(const Feature& latent,
                                            const Intrinsics& k) const;
};

StitchedModel make_stitched(const LayeredGeometryNet& net,
                            const StitchSearchResult& search);

// Pose list from a pose head output.
std::vector<CameraPose> poses_from_head(const Eigen::VectorXd& pose_vec,
                                        int num_frames);

struct FinetuneRecord {
  int epoch = 0;
  double loss = 0.0;
};

// Gradient descent on sum_j lambda_j * mean-abs residual between the
// stitched and reference head outputs; trains connector, downstream layers,
// and heads. Throws std::invalid_argument when all lambdas are zero.
std::vector<FinetuneRecord> align_finetune(StitchedModel& stitched,
                                           const LayeredGeometryNet& reference,
                                           const AffineEncoder& encoder,
                                           const std::vector<Feature>& data,
                                           const AlignConfig& cfg);

// Weighted loss at the current parameters (the quantity align_finetune
// minimizes).
double align_loss(const StitchedModel& stitched,
                  const LayeredGeometryNet& reference,
                  const AffineEncoder& encoder,
                  const std::vector<Feature>& data, const AlignConfig& cfg);

// A reference net / encoder pair where Phi_{1:2} is exactly affine in the
// encoder output while Phi_{1:1} and Phi_{1:3} are not.
struct PlantedProblem {
  AffineEncoder encoder;
  LayeredGeometryNet net;
  int planted_layer = 2;
  std::vector<Feature> calib;
};
PlantedProblem make_planted_problem(std::uint64_t seed, int calib_size = 64);

struct PerturbationRow {
  double alpha = 0.0;
  std::string pipeline;  // "latent" or "decoded"
  std::uint64_t seed = 0;
  double racc = 0.0;
  double tacc = 0.0;
  double auc = 0.0;
};

// Injects z' = z + alpha ||z|| eps and evaluates pose accuracy of the
// stitched model on z' against the reference model's clean predictions; the
// "decoded" pipeline first maps z' back to observation space through the
// encoder's lossy pseudo-inverse and re-runs the reference network.
std::vector<PerturbationRow> perturbation_study(
    const StitchedModel& stitched, const LayeredGeometryNet& reference,
    const AffineEncoder& encoder, const std::vector<Feature>& inputs,
    const std::vector<double>& alphas, int num_seeds, std::uint64_t seed,
    double tau_deg = 5.0);

}  // namespace geoflow
