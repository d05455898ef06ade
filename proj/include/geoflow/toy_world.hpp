// The synthetic generator/geometry stack: a small fully connected velocity
// field with exact reverse-mode gradients, and a fixed deterministic decoder
// from latents to camera trajectories over a point lattice.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "geoflow/flow_core.hpp"
#include "geoflow/rewards.hpp"

namespace geoflow {

// v_theta(x, t, cond): two tanh hidden layers, linear output.
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(int latent_dim, int cond_dim, int hidden_dim,
                std::uint64_t seed);

  struct Cache {
    Eigen::VectorXd input;
    Eigen::VectorXd h1;
    Eigen::VectorXd h2;
  };

  Latent forward(const Latent& x, double t, const Latent& cond,
                 Cache* cache = nullptr) const;

  // Accumulates d(adjoint . v)/d(params) into grad (size num_params()).
  void backward(const Cache& cache, const Eigen::VectorXd& adjoint,
                Eigen::VectorXd& grad) const;

  int latent_dim() const { return latent_dim_; }
  int cond_dim() const { return cond_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int num_params() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& p);

  // Bound to this object by reference; the network must outlive the functor.
  VelocityFn as_velocity_fn() const;

 private:
  int latent_dim_ = 0;
  int cond_dim_ = 0;
  int hidden_dim_ = 0;
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

// Flow-matching loss mean_b ||(eps - x0) - v(x_t, t, cond)||^2 and its exact
// parameter gradient.
struct FmBatchItem {
  Latent x0;
  Latent eps;
  double t = 0.0;
  Latent cond;
};
struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
LossAndGrad fm_loss_and_grad(const PolicyNetwork& policy,
                             const std::vector<FmBatchItem>& batch);

// Mixture of Gaussians over latents used as the pretraining target
// distribution.
struct LatentPrior {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::VectorXd> stds;
  std::vector<double> weights;  // sums to 1

  Latent sample(Rng& rng) const;
};

// Deterministic map from a latent vector to N GeometryFrame.
//
// Latent layout: coords 0..5 are cubic control-point offsets bending the
// preset's base camera path, coords 6..8 are per-frame alternating jitter
// amplitudes (the high-frequency coordinates), coord 9 injects an
// alternating per-view depth bias (the inconsistency knob). Remaining
// coordinates are inert.
class ToyDecoder {
 public:
  static constexpr int kPathCoords = 6;
  static constexpr int kJitterOffset = 6;
  static constexpr int kKnobCoord = 9;

  static ToyDecoder make_default();

  std::vector<GeometryFrame> decode(const Latent& z, const Latent& cond) const;

  int latent_dim() const { return latent_dim_; }
  int num_frames() const { return num_frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  double jitter_scale() const { return jitter_scale_; }
  double knob_scale() const { return knob_scale_; }

  // Scene presets selected by argmax of the condition vector.
  enum Preset { kStaticIndoor = 0, kDynamicObject, kFastPan, kOrbit };
  static int preset_of(const Latent& cond);

 private:
  int latent_dim_ = 16;
  int num_frames_ = 8;
  int height_ = 16;
  int width_ = 16;
  Intrinsics intrinsics_;
  std::vector<Vec3> lattice_;
  std::vector<unsigned char> dynamic_mask_;
  Vec3 dynamic_velocity_ = Vec3::Zero();
  Vec3 lattice_centroid_ = Vec3::Zero();
  double path_scale_ = 0.4;
  double jitter_scale_ = 0.15;
  double knob_scale_ = 0.3;

  std::vector<Vec3> base_centers(int preset) const;
};

struct ToyWorld {
  ToyDecoder decoder;
  RewardConfig reward_cfg;
  LatentPrior prior;
  int num_conditions = 4;

  static ToyWorld make_default();
  Latent condition(int idx) const;
};

// Flow-matching pretraining; returns final average loss per log window.
struct PretrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  int log_every = 100;
};
struct PretrainRecord {
  int step = 0;
  double loss = 0.0;
};
std::vector<PretrainRecord> pretrain_flow(PolicyNetwork& policy,
                                          const ToyWorld& world,
                                          const PretrainConfig& cfg);

}  // namespace geoflow
