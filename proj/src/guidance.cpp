#include "geoflow/guidance.hpp"

#include <cmath>
#include <stdexcept>

namespace geoflow {

Latent reward_gradient(const RewardFn& reward, const Latent& z, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("reward_gradient: step must be positive");
  }
  Latent grad(z.size());
  Latent probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    probe[i] = z[i] + h;
    const double up = reward(probe);
    probe[i] = z[i] - h;
    const double down = reward(probe);
    probe[i] = z[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("reward_gradient: reward evaluation failed at "
                               "coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Latent cfg_combine(const Latent& v_cond, const Latent& v_uncond,
                   double scale) {
  if (v_cond.size() != v_uncond.size()) {
    throw std::invalid_argument("cfg_combine: shape mismatch");
  }
  return v_uncond + scale * (v_cond - v_uncond);
}

GuidedSampleResult guided_sample(const VelocityFn& conditional,
                                 const VelocityFn& unconditional,
                                 const RewardFn& reward, const Latent& cond,
                                 int dim, double a, const GuidanceConfig& cfg,
                                 std::uint64_t seed) {
  const NoiseSchedule schedule = make_uniform_schedule(cfg.total_steps, a);
  GuidedSampleResult result;
  LatentTrajectory& traj = result.trajectory;
  traj.condition = cond;
  traj.seed = seed;
  traj.deterministic = (a == 0.0);

  Rng rng(seed);
  Latent x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.normal();
  traj.states.push_back(x);

  Latent noise(dim);
  for (int s = 0; s < cfg.total_steps; ++s) {
    const double t = schedule.timesteps[s];
    const double t_next = schedule.timesteps[s + 1];
    for (int i = 0; i < dim; ++i) noise[i] = rng.normal();

    Latent v = conditional(x, t, cond);
    if (cfg.cfg_scale != 1.0) {
      v = cfg_combine(v, unconditional(x, t, cond), cfg.cfg_scale);
    }
    if (cfg.s_reward != 0.0 && (s + 1) % cfg.guidance_interval == 0 &&
        t < 1.0) {
      const double tc = clamp_t(t, schedule);
      v -= cfg.s_reward * (tc / (1.0 - tc)) *
           reward_gradient(reward, x, cfg.fd_step);
      ++result.guidance_steps_applied;
    }

    const SdeStep step = sde_step(v, x, t, t_next, noise, schedule);
    x = step.x_next;
    traj.step_means.push_back(step.mean);
    traj.step_stds.push_back(step.std);
    if (!traj.deterministic) {
      traj.step_log_probs.push_back(step_log_prob(x, step.mean, step.std));
    }
    traj.states.push_back(x);
  }
  return result;
}

}  // namespace geoflow
