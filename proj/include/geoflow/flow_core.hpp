// Rectified-flow interpolation, the stochastic sampler obtained from the
// ODE-to-SDE conversion, and exact per-step Gaussian log-probabilities.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "geoflow/rng.hpp"

namespace geoflow {

using Latent = Eigen::VectorXd;

// v(x, t, cond) -> velocity. PolicyNetwork provides one; tests may supply
// analytic fields.
using VelocityFn =
    std::function<Latent(const Latent&, double, const Latent&)>;

struct NoiseSchedule {
  // Strictly decreasing, timesteps.front() == 1, timesteps.back() == 0.
  std::vector<double> timesteps;
  double a = 0.0;  // noise level; sigma_t = a sqrt(t / (1 - t))
  double t_min = 0.02;
  double t_max = 0.98;
};

// Uniformly spaced schedule with num_steps transitions.
NoiseSchedule make_uniform_schedule(int num_steps, double a);

struct ScheduleOrderError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateKernelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// (1 - t) x0 + t eps.
Latent forward_interpolate(const Latent& x0, const Latent& eps, double t);

double clamp_t(double t, const NoiseSchedule& schedule);

// a sqrt(t' / (1 - t')), t' clamped to [t_min, t_max].
double sigma_t(double t, const NoiseSchedule& schedule);

struct SdeStep {
  Latent x_next;
  Latent mean;
  double std = 0.0;
};

// Euler-Maruyama mean for one reverse step from t to t_next (dt = t - t_next):
//   mean = x - dt [v + sigma^2/(2 t') (x + (1 - t) v)]
// With a = 0 this is exactly the Euler ODE step x - dt v.
Latent em_mean(const Latent& x, const Latent& v, double t, double t_next,
               const NoiseSchedule& schedule);

// Coefficient of v in em_mean: -dt (1 + sigma^2 (1 - t) / (2 t')).
double em_velocity_coeff(double t, double t_next,
                         const NoiseSchedule& schedule);

// v is the velocity prediction at (x, t). Requires t > t_next.
SdeStep sde_step(const Latent& v, const Latent& x, double t, double t_next,
                 const Latent& noise, const NoiseSchedule& schedule);

// Isotropic Gaussian log-density of x given (mean, std).
double step_log_prob(const Latent& x, const Latent& mean, double std);

struct LatentTrajectory {
  std::vector<Latent> states;      // x_{t_T} .. x_{t_0}, T+1 entries
  std::vector<Latent> step_means;  // T entries
  std::vector<double> step_stds;
  std::vector<double> step_log_probs;  // empty when deterministic
  Latent condition;
  std::uint64_t seed = 0;
  bool deterministic = false;  // a == 0

  const Latent& final_latent() const { return states.back(); }
  int num_steps() const { return static_cast<int>(step_means.size()); }
};

// Draws the initial state and all step noises from a generator seeded with
// `seed`; fully deterministic given (seed, velocity, schedule, cond).
LatentTrajectory sample_trajectory(const VelocityFn& velocity,
                                   const NoiseSchedule& schedule,
                                   const Latent& cond, int dim,
                                   std::uint64_t seed);

}  // namespace geoflow
