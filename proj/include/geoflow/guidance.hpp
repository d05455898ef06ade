// Training-free test-time reward guidance: sparse finite-difference gradient
// nudges of the sampling velocity toward higher reward.
#pragma once

#include <cstdint>
#include <functional>

#include "geoflow/flow_core.hpp"

namespace geoflow {

using RewardFn = std::function<double(const Latent&)>;

struct GuidanceConfig {
  double s_reward = 0.1;     // chosen by tools/sweep_s_reward.sh
  int guidance_interval = 20;
  int total_steps = 50;
  double cfg_scale = 1.0;
  double lambda_motion = 1.0;
  double lambda_geo = 1.0;
  double fd_step = 1e-3;
};

// Central finite differences of reward, coordinate-wise with step h.
Latent reward_gradient(const RewardFn& reward, const Latent& z, double h);

// v_uncond + scale * (v_cond - v_uncond).
Latent cfg_combine(const Latent& v_cond, const Latent& v_uncond, double scale);

struct GuidedSampleResult {
  LatentTrajectory trajectory;
  int guidance_steps_applied = 0;
};

// Standard sampler over a uniform total_steps schedule with noise level a,
// except that at step indices where (i + 1) % guidance_interval == 0 and
// t < 1 the velocity is replaced by
//   v - s_reward * (t' / (1 - t')) * grad_z reward(x_t)
// before the solver update (t' clamped as in the sampler). With
// s_reward = 0 the output is bit-identical to the unguided sampler for the
// same seed.
GuidedSampleResult guided_sample(const VelocityFn& conditional,
                                 const VelocityFn& unconditional,
                                 const RewardFn& reward, const Latent& cond,
                                 int dim, double a, const GuidanceConfig& cfg,
                                 std::uint64_t seed);

}  // namespace geoflow
