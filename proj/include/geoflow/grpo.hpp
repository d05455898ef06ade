// Group-relative policy optimization over flow trajectories: standardized
// advantages, clipped surrogate, closed-form KL, and the training loop with
// denoising reduction.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "geoflow/flow_core.hpp"
#include "geoflow/toy_world.hpp"

namespace geoflow {

struct GrpoConfig {
  int group_size = 8;
  double clip_eps = 1e-3;
  double kl_weight = 0.004;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int t_train = 10;
  int t_infer = 40;
  double sigma_a = 0.7;
  double std_floor = 1e-6;
  int iterations = 200;
  std::uint64_t seed = 0;
  bool adam = false;       // adaptive moments instead of plain ascent
  int eval_rollouts = 16;  // per condition at iteration 0 and at the end
};

struct GroupTooSmallError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// (r - mean) / population std; all zeros when the std is below std_floor.
Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards,
                                 double std_floor);

// Average of the per-channel standardized rewards.
Eigen::VectorXd dual_advantages(const Eigen::VectorXd& motion,
                                const Eigen::VectorXd& geo, double std_floor);

// exp(logp_new - logp_old), clamped to [1e-6, 1e6]; *clamped is set when the
// clamp fires.
double importance_ratio(double logp_new, double logp_old,
                        bool* clamped = nullptr);

double clipped_surrogate(double rho, double advantage, double eps);

// (dt/2) (sigma (1-t)/(2 t') + 1/sigma)^2 ||v_theta - v_ref||^2, with t
// clamped inside the 1/(2t) factor exactly as the sampler's drift term.
double kl_closed_form(const Latent& v_theta, const Latent& v_ref, double t,
                      double sigma, double dt, const NoiseSchedule& schedule);

struct RolloutGroup {
  std::vector<LatentTrajectory> members;
  std::vector<RewardBundle> rewards;
  Eigen::VectorXd advantages;
  NoiseSchedule schedule;
  Latent condition;
};

struct GrpoDiagnostics {
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  int ratio_clamp_count = 0;
};

struct ObjectiveResult {
  double value = 0.0;
  Eigen::VectorXd grad;
  GrpoDiagnostics diagnostics;
};

// (1/K) sum_k (1/T) sum_t [min(rho A, clip(rho) A) - beta KL] with the
// ratios recomputed under the current parameters against the stored old
// log-probs, and its exact parameter gradient.
ObjectiveResult grpo_objective_and_grad(const PolicyNetwork& policy,
                                        const PolicyNetwork& ref_policy,
                                        const RolloutGroup& group,
                                        const GrpoConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int step = 0;
};

struct StepResult {
  double objective = 0.0;
  GrpoDiagnostics diagnostics;
};

// One gradient-ascent step with decoupled weight decay (Adam moments when
// cfg.adam). Rejects deterministic (a = 0) trajectories.
StepResult vggrpo_step(PolicyNetwork& policy, const PolicyNetwork& ref_policy,
                       const RolloutGroup& group, const GrpoConfig& cfg,
                       AdamState* opt = nullptr);

struct IterationRecord {
  int iteration = 0;
  double mean_r_motion = 0.0;
  double mean_r_geo = 0.0;
  double mean_advantage = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double wall_time_ms = 0.0;
};

struct EvalRecord {
  double mean_r_motion = 0.0;
  double mean_r_geo = 0.0;
};

struct TrainingLog {
  std::vector<IterationRecord> iterations;
  EvalRecord initial_eval;
  EvalRecord final_eval;
};

// Mean rewards over eval_rollouts stochastic rollouts per condition at
// t_infer steps.
EvalRecord evaluate_policy(const ToyWorld& world, const PolicyNetwork& policy,
                           const GrpoConfig& cfg, std::uint64_t seed);

// Rollout -> decode -> score -> dual advantages -> one update, iterated.
// Conditions cycle through the world's presets.
TrainingLog train(const ToyWorld& world, PolicyNetwork& policy,
                  const GrpoConfig& cfg);

}  // namespace geoflow
