#include "geoflow/grpo.hpp"

#include <chrono>
#include <cmath>

#include "geoflow/parallel.hpp"

namespace geoflow {

Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards,
                                 double std_floor) {
  if (rewards.size() < 2) {
    throw GroupTooSmallError("group_advantages: need at least 2 rewards");
  }
  const double mean = rewards.mean();
  const double var = (rewards.array() - mean).square().mean();
  const double std = std::sqrt(var);
  if (std < std_floor) {
    return Eigen::VectorXd::Zero(rewards.size());
  }
  return (rewards.array() - mean) / std;
}

Eigen::VectorXd dual_advantages(const Eigen::VectorXd& motion,
                                const Eigen::VectorXd& geo, double std_floor) {
  if (motion.size() != geo.size()) {
    throw std::invalid_argument("dual_advantages: length mismatch");
  }
  return 0.5 * (group_advantages(motion, std_floor) +
                group_advantages(geo, std_floor));
}

double importance_ratio(double logp_new, double logp_old, bool* clamped) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) {
    throw std::invalid_argument("importance_ratio: non-finite log-probs");
  }
  const double raw = std::exp(logp_new - logp_old);
  const double lo = 1e-6, hi = 1e6;
  if (clamped) *clamped = (raw < lo || raw > hi);
  return std::min(hi, std::max(lo, raw));
}

double clipped_surrogate(double rho, double advantage, double eps) {
  const double clipped = std::min(1.0 + eps, std::max(1.0 - eps, rho));
  return std::min(rho * advantage, clipped * advantage);
}

double kl_closed_form(const Latent& v_theta, const Latent& v_ref, double t,
                      double sigma, double dt, const NoiseSchedule& schedule) {
  if (!(sigma > 0.0)) {
    throw DegenerateKernelError("kl_closed_form: sigma must be positive");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("kl_closed_form: dt must be positive");
  }
  const double tc = clamp_t(t, schedule);
  const double c = sigma * (1.0 - t) / (2.0 * tc) + 1.0 / sigma;
  return 0.5 * dt * c * c * (v_theta - v_ref).squaredNorm();
}

ObjectiveResult grpo_objective_and_grad(const PolicyNetwork& policy,
                                        const PolicyNetwork& ref_policy,
                                        const RolloutGroup& group,
                                        const GrpoConfig& cfg) {
  ObjectiveResult out;
  out.grad = Eigen::VectorXd::Zero(policy.num_params());
  const int num_members = static_cast<int>(group.members.size());
  long total_steps = 0;
  long clipped_steps = 0;
  double kl_sum = 0.0;

  PolicyNetwork::Cache cache;
  for (int k = 0; k < num_members; ++k) {
    const LatentTrajectory& traj = group.members[k];
    const double advantage = group.advantages[k];
    const int num_steps = traj.num_steps();
    const double scale = 1.0 / (static_cast<double>(num_members) * num_steps);
    for (int s = 0; s < num_steps; ++s) {
      const double t = group.schedule.timesteps[s];
      const double t_next = group.schedule.timesteps[s + 1];
      const double dt = t - t_next;
      const double std = traj.step_stds[s];
      const Latent& x = traj.states[s];
      const Latent& x_next = traj.states[s + 1];

      const Latent v_new = policy.forward(x, t, group.condition, &cache);
      const Latent mean_new = em_mean(x, v_new, t, t_next, group.schedule);
      const double logp_new = step_log_prob(x_next, mean_new, std);
      bool clamped = false;
      const double rho =
          importance_ratio(logp_new, traj.step_log_probs[s], &clamped);
      if (clamped) ++out.diagnostics.ratio_clamp_count;

      const double sur = clipped_surrogate(rho, advantage, cfg.clip_eps);
      const double clipped_val =
          std::min(1.0 + cfg.clip_eps, std::max(1.0 - cfg.clip_eps, rho)) *
          advantage;
      const bool clip_branch = rho * advantage > clipped_val;
      if (clip_branch) ++clipped_steps;

      const Latent v_ref = ref_policy.forward(x, t, group.condition);
      const double sig = sigma_t(t, group.schedule);
      const double kl =
          kl_closed_form(v_new, v_ref, t, sig, dt, group.schedule);
      kl_sum += kl;
      ++total_steps;

      out.value += scale * (sur - cfg.kl_weight * kl);

      // Surrogate gradient flows through rho only on the unclipped branch
      // and when the ratio clamp did not fire.
      double dsur_dlogp = 0.0;
      if (!clamped && !clip_branch) dsur_dlogp = rho * advantage;
      const double vcoef = em_velocity_coeff(t, t_next, group.schedule);
      Latent adjoint =
          (scale * dsur_dlogp * vcoef / (std * std)) * (x_next - mean_new);
      const double tc = clamp_t(t, group.schedule);
      const double kc = sig * (1.0 - t) / (2.0 * tc) + 1.0 / sig;
      adjoint -=
          (scale * cfg.kl_weight * dt * kc * kc) * (v_new - v_ref);
      policy.backward(cache, adjoint, out.grad);
    }
  }
  out.diagnostics.mean_kl = total_steps ? kl_sum / total_steps : 0.0;
  out.diagnostics.clip_fraction =
      total_steps ? static_cast<double>(clipped_steps) / total_steps : 0.0;
  return out;
}

StepResult vggrpo_step(PolicyNetwork& policy, const PolicyNetwork& ref_policy,
                       const RolloutGroup& group, const GrpoConfig& cfg,
                       AdamState* opt) {
  for (const auto& member : group.members) {
    if (member.deterministic) {
      throw std::invalid_argument(
          "vggrpo_step: deterministic (a = 0) trajectories have no "
          "importance ratios");
    }
  }
  const ObjectiveResult obj =
      grpo_objective_and_grad(policy, ref_policy, group, cfg);
  Eigen::VectorXd p = policy.params();
  if (cfg.adam && opt) {
    if (opt->m.size() != p.size()) {
      opt->m = Eigen::VectorXd::Zero(p.size());
      opt->v = Eigen::VectorXd::Zero(p.size());
      opt->step = 0;
    }
    ++opt->step;
    opt->m = 0.9 * opt->m + 0.1 * obj.grad;
    opt->v = 0.999 * opt->v.array() + 0.001 * obj.grad.array().square();
    const double bc1 = 1.0 - std::pow(0.9, opt->step);
    const double bc2 = 1.0 - std::pow(0.999, opt->step);
    p.array() += cfg.learning_rate * (opt->m.array() / bc1) /
                 ((opt->v.array() / bc2).sqrt() + 1e-8);
    p -= cfg.learning_rate * cfg.weight_decay * p;
  } else {
    p += cfg.learning_rate * obj.grad -
         cfg.learning_rate * cfg.weight_decay * p;
  }
  policy.set_params(p);
  return {obj.value, obj.diagnostics};
}

namespace {

struct ScoredRollout {
  LatentTrajectory trajectory;
  RewardBundle rewards;
};

ScoredRollout roll_and_score(const ToyWorld& world,
                             const PolicyNetwork& policy,
                             const NoiseSchedule& schedule, const Latent& cond,
                             std::uint64_t seed) {
  ScoredRollout out;
  out.trajectory = sample_trajectory(policy.as_velocity_fn(), schedule, cond,
                                     policy.latent_dim(), seed);
  const auto frames = world.decoder.decode(out.trajectory.final_latent(), cond);
  out.rewards = reward_bundle(frames, world.reward_cfg);
  return out;
}

}  // namespace

EvalRecord evaluate_policy(const ToyWorld& world, const PolicyNetwork& policy,
                           const GrpoConfig& cfg, std::uint64_t seed) {
  const NoiseSchedule schedule =
      make_uniform_schedule(cfg.t_infer, cfg.sigma_a);
  const int total = world.num_conditions * cfg.eval_rollouts;
  std::vector<ScoredRollout> results(total);
  parallel_for(total, [&](int i) {
    const int cond_idx = i / cfg.eval_rollouts;
    results[i] = roll_and_score(world, policy, schedule,
                                world.condition(cond_idx),
                                mix_seed(seed, 0xe0000 + i));
  });
  EvalRecord rec;
  for (const auto& r : results) {
    rec.mean_r_motion += r.rewards.r_motion / total;
    rec.mean_r_geo += r.rewards.r_geo / total;
  }
  return rec;
}

TrainingLog train(const ToyWorld& world, PolicyNetwork& policy,
                  const GrpoConfig& cfg) {
  if (cfg.sigma_a == 0.0) {
    throw std::invalid_argument("train: sigma_a = 0 gives deterministic "
                                "trajectories; GRPO requires noise");
  }
  TrainingLog log;
  const PolicyNetwork ref_policy = policy;  // frozen at alignment start
  log.initial_eval = evaluate_policy(world, policy, cfg, cfg.seed);

  const NoiseSchedule schedule =
      make_uniform_schedule(cfg.t_train, cfg.sigma_a);
  AdamState adam;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto t_start = std::chrono::steady_clock::now();
    RolloutGroup group;
    group.schedule = schedule;
    group.condition = world.condition(iter % world.num_conditions);

    std::vector<ScoredRollout> rollouts(cfg.group_size);
    parallel_for(cfg.group_size, [&](int k) {
      rollouts[k] = roll_and_score(
          world, policy, schedule, group.condition,
          mix_seed(cfg.seed, static_cast<std::uint64_t>(iter) * 10007 + k));
    });

    Eigen::VectorXd motion(cfg.group_size), geo(cfg.group_size);
    for (int k = 0; k < cfg.group_size; ++k) {
      group.members.push_back(std::move(rollouts[k].trajectory));
      motion[k] = rollouts[k].rewards.r_motion;
      geo[k] = rollouts[k].rewards.r_geo;
      group.rewards.push_back(std::move(rollouts[k].rewards));
    }
    group.advantages = dual_advantages(motion, geo, cfg.std_floor);

    const StepResult step = vggrpo_step(policy, ref_policy, group, cfg,
                                        cfg.adam ? &adam : nullptr);
    const auto t_end = std::chrono::steady_clock::now();

    IterationRecord rec;
    rec.iteration = iter;
    rec.mean_r_motion = motion.mean();
    rec.mean_r_geo = geo.mean();
    rec.mean_advantage = group.advantages.mean();
    rec.kl = step.diagnostics.mean_kl;
    rec.clip_fraction = step.diagnostics.clip_fraction;
    rec.wall_time_ms =
        std::chrono::duration<double, std::milli>(t_end - t_start).count();
    log.iterations.push_back(rec);
  }
  log.final_eval = evaluate_policy(world, policy, cfg, cfg.seed + 1);
  return log;
}

}  // namespace geoflow
