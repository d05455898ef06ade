#include "geoflow/flow_core.hpp"

#include <cmath>

namespace geoflow {

NoiseSchedule make_uniform_schedule(int num_steps, double a) {
  NoiseSchedule s;
  s.a = a;
  s.timesteps.resize(num_steps + 1);
  for (int i = 0; i <= num_steps; ++i) {
    s.timesteps[i] = static_cast<double>(i) / num_steps;
  }
  std::reverse(s.timesteps.begin(), s.timesteps.end());
  s.timesteps.front() = 1.0;
  s.timesteps.back() = 0.0;
  return s;
}

Latent forward_interpolate(const Latent& x0, const Latent& eps, double t) {
  if (x0.size() != eps.size()) {
    throw std::invalid_argument("forward_interpolate: shape mismatch");
  }
  return (1.0 - t) * x0 + t * eps;
}

double clamp_t(double t, const NoiseSchedule& schedule) {
  return std::min(schedule.t_max, std::max(schedule.t_min, t));
}

double sigma_t(double t, const NoiseSchedule& schedule) {
  const double tc = clamp_t(t, schedule);
  return schedule.a * std::sqrt(tc / (1.0 - tc));
}

Latent em_mean(const Latent& x, const Latent& v, double t, double t_next,
               const NoiseSchedule& schedule) {
  const double dt = t - t_next;
  const double tc = clamp_t(t, schedule);
  const double sig = sigma_t(t, schedule);
  const double drift_coef = sig * sig / (2.0 * tc);
  return x - dt * (v + drift_coef * (x + (1.0 - t) * v));
}

double em_velocity_coeff(double t, double t_next,
                         const NoiseSchedule& schedule) {
  const double dt = t - t_next;
  const double tc = clamp_t(t, schedule);
  const double sig = sigma_t(t, schedule);
  return -dt * (1.0 + sig * sig * (1.0 - t) / (2.0 * tc));
}

SdeStep sde_step(const Latent& v, const Latent& x, double t, double t_next,
                 const Latent& noise, const NoiseSchedule& schedule) {
  if (!(t > t_next)) {
    throw ScheduleOrderError("sde_step: t must be greater than t_next");
  }
  const double dt = t - t_next;
  SdeStep out;
  out.mean = em_mean(x, v, t, t_next, schedule);
  out.std = sigma_t(t, schedule) * std::sqrt(dt);
  out.x_next = out.mean + out.std * noise;
  return out;
}

double step_log_prob(const Latent& x, const Latent& mean, double std) {
  if (!(std > 0.0)) {
    throw DegenerateKernelError("step_log_prob: std must be positive");
  }
  const double d = static_cast<double>(x.size());
  const double sq = (x - mean).squaredNorm();
  return -0.5 * d * std::log(2.0 * M_PI * std * std) -
         sq / (2.0 * std * std);
}

LatentTrajectory sample_trajectory(const VelocityFn& velocity,
                                   const NoiseSchedule& schedule,
                                   const Latent& cond, int dim,
                                   std::uint64_t seed) {
  const int num_steps = static_cast<int>(schedule.timesteps.size()) - 1;
  LatentTrajectory traj;
  traj.condition = cond;
  traj.seed = seed;
  traj.deterministic = (schedule.a == 0.0);

  Rng rng(seed);
  Latent x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.normal();
  traj.states.push_back(x);

  Latent noise(dim);
  for (int s = 0; s < num_steps; ++s) {
    const double t = schedule.timesteps[s];
    const double t_next = schedule.timesteps[s + 1];
    if (!(t > t_next)) {
      throw ScheduleOrderError("sample_trajectory: non-decreasing schedule");
    }
    for (int i = 0; i < dim; ++i) noise[i] = rng.normal();
    const Latent v = velocity(x, t, cond);
    const SdeStep step = sde_step(v, x, t, t_next, noise, schedule);
    x = step.x_next;
    traj.step_means.push_back(step.mean);
    traj.step_stds.push_back(step.std);
    if (!traj.deterministic) {
      traj.step_log_probs.push_back(step_log_prob(x, step.mean, step.std));
    }
    traj.states.push_back(x);
  }
  return traj;
}

}  // namespace geoflow
