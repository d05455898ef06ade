// Acceptance gate: twelve checks, one [PASS]/[FAIL] line each, nonzero exit
// when any fails. The optional first argument is the path to the CLI binary
// used by the reproducibility check.
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "geoflow/eval_metrics.hpp"
#include "geoflow/grpo.hpp"
#include "geoflow/guidance.hpp"
#include "geoflow/serialization.hpp"
#include "geoflow/stitching.hpp"
#include "geoflow/toy_world.hpp"

using namespace geoflow;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Outcome {
  bool ok = true;
  std::ostringstream detail;
};

#define EXPECT(out, cond)                                     \
  do {                                                        \
    if (!(cond)) {                                            \
      (out).ok = false;                                       \
      (out).detail << " [" << #cond << " at line " << __LINE__ << "]"; \
    }                                                         \
  } while (0)

CameraPose pose_at(const Vec3& center,
                   const Mat3& rotation = Mat3::Identity()) {
  CameraPose p;
  p.rotation = rotation;
  p.translation = -(rotation * center);
  return p;
}

Intrinsics small_k() { return Intrinsics{10, 10, 7.5, 7.5, 16, 16}; }

// Multi-view scene over a fixed point set; each pixel's point-map entry is
// the z-buffer winner, making the scene self-consistent by construction.
std::vector<GeometryFrame> consistent_scene(
    const std::vector<Vec3>& points, const std::vector<CameraPose>& poses) {
  const Intrinsics k = small_k();
  std::vector<GeometryFrame> frames;
  for (const auto& pose : poses) {
    GeometryFrame f;
    f.pose = pose;
    f.intrinsics = k;
    f.height = k.height;
    f.width = k.width;
    f.depth.assign(k.width * k.height, kNaN);
    f.point_map.assign(k.width * k.height, Vec3::Zero());
    for (const auto& p : points) {
      const Projection pr = project(p, pose, k);
      if (pr.degenerate || pr.depth <= 1e-6) continue;
      const long px = raster_index(pr.pixel.x());
      const long py = raster_index(pr.pixel.y());
      if (px < 0 || px >= k.width || py < 0 || py >= k.height) continue;
      const std::size_t idx = static_cast<std::size_t>(py) * k.width + px;
      if (!std::isfinite(f.depth[idx]) || pr.depth < f.depth[idx]) {
        f.depth[idx] = pr.depth;
        f.point_map[idx] = p;
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Vec3> grid_points() {
  std::vector<Vec3> pts;
  for (int iy = 0; iy < 20; ++iy) {
    for (int ix = 0; ix < 20; ++ix) {
      const double x = -1.5 + 3.0 * ix / 19.0;
      const double y = -1.5 + 3.0 * iy / 19.0;
      pts.emplace_back(x, y, 0.3 * std::sin(2.0 * x) * std::cos(y));
    }
  }
  return pts;
}

std::vector<CameraPose> approach_poses(int n) {
  std::vector<CameraPose> poses;
  for (int i = 0; i < n; ++i) {
    poses.push_back(pose_at(Vec3(0.05 * i, -0.03 * i, -6.0 + 0.4 * i)));
  }
  return poses;
}

// Independent re-derivation of reprojection_error_per_view from its written
// contract, matching the library's loop order exactly.
std::vector<double> brute_force_reprojection(
    const std::vector<GeometryFrame>& frames, const RewardConfig& cfg) {
  const double threshold = cfg.flow_threshold
                               ? *cfg.flow_threshold
                               : default_flow_threshold(frames);
  std::vector<Vec3> cloud;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.point_map.size(); ++i) {
      if (!std::isfinite(f.depth[i])) continue;
      if (f.flow && (*f.flow)[i].norm() > threshold) continue;
      cloud.push_back(f.point_map[i]);
    }
  }
  std::vector<double> errors;
  for (const auto& f : frames) {
    const int w = f.intrinsics.width;
    const int h = f.intrinsics.height;
    std::vector<double> depth(static_cast<std::size_t>(w) * h,
                              std::numeric_limits<double>::infinity());
    std::vector<unsigned char> mask(depth.size(), 0);
    for (const auto& p : cloud) {
      const Projection pr = project(p, f.pose, f.intrinsics);
      if (pr.degenerate || pr.depth <= cfg.z_near) continue;
      const long px = static_cast<long>(std::ceil(pr.pixel.x() - 0.5));
      const long py = static_cast<long>(std::ceil(pr.pixel.y() - 0.5));
      if (px < 0 || px >= w || py < 0 || py >= h) continue;
      const std::size_t idx = static_cast<std::size_t>(py) * w + px;
      if (pr.depth < depth[idx]) depth[idx] = pr.depth;
      mask[idx] = 1;
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
      if (!mask[i] || !std::isfinite(f.depth[i])) continue;
      sum += std::abs(depth[i] - f.depth[i]);
      ++count;
    }
    errors.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  return errors;
}

// Analytic rectified-flow velocity for zero-mean Gaussian data with std s.
VelocityFn gaussian_field(double s) {
  return [s](const Latent& x, double t, const Latent&) {
    const double var = (1.0 - t) * (1.0 - t) * s * s + t * t;
    return Latent((t - (1.0 - t) * s * s) / var * x);
  };
}

std::vector<std::size_t> argsort(const Eigen::VectorXd& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

// One-sided sign-test p-value: P(Binomial(n, 1/2) >= wins).
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double c = 0.0;  // log C(n, k)
    for (int i = 0; i < k; ++i) {
      c += std::log(static_cast<double>(n - i)) -
           std::log(static_cast<double>(i + 1));
    }
    p += std::exp(c - n * std::log(2.0));
  }
  return p;
}

// ---------------------------------------------------------------------------

Outcome criterion_1_rewards() {
  Outcome out;
  RewardConfig cfg;

  const std::vector<Vec3> reversal{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1, 0, 0}};
  EXPECT(out,
         std::abs(translational_smoothness_error(reversal, cfg) - 0.5) < 1e-6);

  std::vector<GeometryFrame> motion_frames(4);
  for (int i = 0; i < 4; ++i) motion_frames[i].pose = pose_at(reversal[i]);
  EXPECT(out, std::abs(motion_reward(motion_frames, cfg) - 0.833333) < 1e-6);

  // constant velocity and rotation rate: perfectly smooth
  for (int i = 0; i < 4; ++i) {
    motion_frames[i].pose =
        pose_at(Vec3(0.5 * i, 0, 0), so3_exp(Vec3(0, 0, 0.1 * i)));
  }
  EXPECT(out, std::abs(motion_reward(motion_frames, cfg) - 1.0) < 1e-9);

  auto frames = consistent_scene(grid_points(), approach_poses(4));
  EXPECT(out, std::abs(geometry_reward(frames, cfg)) < 1e-9);

  for (double& d : frames[2].depth) {
    if (std::isfinite(d)) d += 0.2;
  }
  EXPECT(out, std::abs(geometry_reward(frames, cfg) - (-0.066667)) < 1e-6);
  return out;
}

Outcome criterion_2_brute_force() {
  Outcome out;
  RewardConfig cfg;
  Rng rng(4040);
  const Intrinsics k = small_k();
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<GeometryFrame> frames;
    const bool with_flow = scene % 2 == 0;
    for (int i = 0; i < 8; ++i) {
      GeometryFrame f;
      f.pose = pose_at(Vec3(rng.normal(), rng.normal(), -5.0 + rng.normal()),
                       so3_exp(0.1 * Vec3(rng.normal(), rng.normal(),
                                          rng.normal())));
      f.intrinsics = k;
      f.height = k.height;
      f.width = k.width;
      for (int p = 0; p < k.width * k.height; ++p) {
        if (rng.uniform() < 0.1) {
          f.depth.push_back(kNaN);
          f.point_map.push_back(Vec3::Zero());
        } else {
          f.depth.push_back(1.0 + 4.0 * rng.uniform());
          f.point_map.push_back(
              Vec3(2.0 * rng.normal(), 2.0 * rng.normal(), rng.normal()));
        }
      }
      if (with_flow) {
        std::vector<Vec3> flow(f.depth.size());
        for (auto& fl : flow) {
          fl = 0.2 * Vec3(rng.normal(), rng.normal(), rng.normal());
        }
        f.flow = std::move(flow);
      }
      frames.push_back(std::move(f));
    }
    const auto got = reprojection_error_per_view(frames, cfg);
    const auto want = brute_force_reprojection(frames, cfg);
    EXPECT(out, got.size() == want.size());
    for (std::size_t i = 0; i < got.size() && out.ok; ++i) {
      EXPECT(out, got[i] == want[i]);  // bit-for-bit
    }
    if (!out.ok) {
      out.detail << " scene " << scene;
      break;
    }
  }
  return out;
}

Outcome criterion_3_sde() {
  Outcome out;
  const Latent cond = Latent::Zero(1);

  // (a) a = 0 reduces to the explicit Euler ODE update
  const VelocityFn field = gaussian_field(1.0);
  const NoiseSchedule ode = make_uniform_schedule(64, 0.0);
  const LatentTrajectory traj = sample_trajectory(field, ode, cond, 3, 11);
  Latent x = traj.states.front();
  double max_dev = 0.0;
  for (std::size_t i = 0; i + 1 < ode.timesteps.size(); ++i) {
    const double t = ode.timesteps[i];
    const double dt = t - ode.timesteps[i + 1];
    x = Latent(x - dt * field(x, t, cond));
    max_dev = std::max(max_dev,
                       (x - traj.states[i + 1]).cwiseAbs().maxCoeff());
  }
  EXPECT(out, max_dev <= 1e-12);
  EXPECT(out, traj.deterministic);

  // (b) Gaussian data with s = 2: marginal variance at t = 0.5 is
  // 0.25 * 4 + 0.25 * 1 = 1.25
  const VelocityFn field2 = gaussian_field(2.0);
  const int steps = 200;
  const int dim = 2;
  const int rollouts = 10000;
  for (double a : {0.3, 0.7}) {
    const NoiseSchedule sched = make_uniform_schedule(steps, a);
    // timesteps[100] == 0.5 on the uniform grid
    double sum = 0.0, sum_sq = 0.0;
    long n = 0;
    for (int r = 0; r < rollouts; ++r) {
      const LatentTrajectory tr =
          sample_trajectory(field2, sched, cond, dim, mix_seed(909, r));
      const Latent& mid = tr.states[steps / 2];
      for (int d = 0; d < dim; ++d) {
        sum += mid[d];
        sum_sq += mid[d] * mid[d];
        ++n;
      }
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    out.detail << " var(a=" << a << ")=" << var;
    EXPECT(out, std::abs(var - 1.25) <= 0.05 * 1.25);
  }
  return out;
}

Outcome criterion_4_kl_surrogate() {
  Outcome out;
  Rng rng(77);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 6);
    NoiseSchedule sched = make_uniform_schedule(8, 0.1 + 0.9 * rng.uniform());
    const double t = 0.05 + 0.93 * rng.uniform();
    const double dt = t * (0.05 + 0.9 * rng.uniform());
    const double sigma = sigma_t(t, sched);
    Latent v_theta(dim), v_ref(dim), xcur(dim);
    for (int i = 0; i < dim; ++i) {
      v_theta[i] = rng.normal();
      v_ref[i] = rng.normal();
      xcur[i] = rng.normal();
    }
    const double closed = kl_closed_form(v_theta, v_ref, t, sigma, dt, sched);
    const Latent m_new = em_mean(xcur, v_theta, t, t - dt, sched);
    const Latent m_ref = em_mean(xcur, v_ref, t, t - dt, sched);
    const double generic =
        (m_new - m_ref).squaredNorm() / (2.0 * sigma * sigma * dt);
    worst = std::max(worst, std::abs(closed - generic));
  }
  out.detail << " max |closed - generic| = " << worst;
  EXPECT(out, worst < 1e-10);

  EXPECT(out, clipped_surrogate(1.5, 1.0, 1e-3) == 1.001);
  EXPECT(out, clipped_surrogate(0.5, -1.0, 1e-3) == -0.999);
  return out;
}

Outcome criterion_5_gradients() {
  Outcome out;
  Rng rng(55);
  int instances = 0;
  const auto rel_ok = [](double g, double fd) {
    return std::abs(g - fd) <=
           1e-3 * std::max({std::abs(g), std::abs(fd), 1e-6});
  };

  // policy network reverse-mode gradients
  for (int inst = 0; inst < 60; ++inst) {
    PolicyNetwork policy(2, 1, 4, mix_seed(500, inst));
    Latent x(2), adjoint(2);
    const Latent cond = Latent::Constant(1, 1.0);
    for (int i = 0; i < 2; ++i) {
      x[i] = rng.normal();
      adjoint[i] = rng.normal();
    }
    const double t = rng.uniform();
    PolicyNetwork::Cache cache;
    policy.forward(x, t, cond, &cache);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    policy.backward(cache, adjoint, grad);
    const Eigen::VectorXd p = policy.params();
    const double h = 1e-5;
    for (int check = 0; check < 4; ++check) {
      const int i = static_cast<int>(rng.next_u64() %
                                     static_cast<std::uint64_t>(p.size()));
      Eigen::VectorXd pp = p;
      pp[i] = p[i] + h;
      policy.set_params(pp);
      const double up = adjoint.dot(policy.forward(x, t, cond));
      pp[i] = p[i] - h;
      policy.set_params(pp);
      const double down = adjoint.dot(policy.forward(x, t, cond));
      policy.set_params(p);
      EXPECT(out, rel_ok(grad[i], (up - down) / (2.0 * h)));
      if (!out.ok) {
        out.detail << " policy inst " << inst;
        return out;
      }
    }
    ++instances;
  }

  // full objective gradients against central differences
  for (int inst = 0; inst < 50; ++inst) {
    PolicyNetwork policy(2, 1, 4, mix_seed(600, inst));
    PolicyNetwork ref = policy;
    Eigen::VectorXd ref_p = ref.params();
    for (Eigen::Index i = 0; i < ref_p.size(); ++i) {
      ref_p[i] += 0.05 * rng.normal();
    }
    ref.set_params(ref_p);

    GrpoConfig cfg;
    cfg.clip_eps = 0.5;  // keep the surrogate on its smooth branch
    RolloutGroup group;
    group.schedule = make_uniform_schedule(4, 0.5);
    group.condition = Latent::Constant(1, 1.0);
    const int K = 3;
    Eigen::VectorXd motion(K), geo(K);
    for (int k = 0; k < K; ++k) {
      group.members.push_back(sample_trajectory(policy.as_velocity_fn(),
                                                group.schedule,
                                                group.condition, 2,
                                                mix_seed(700 + inst, k)));
      motion[k] = rng.normal();
      geo[k] = rng.normal();
    }
    group.rewards.resize(K);
    group.advantages = dual_advantages(motion, geo, cfg.std_floor);

    const ObjectiveResult res =
        grpo_objective_and_grad(policy, ref, group, cfg);
    const Eigen::VectorXd p = policy.params();
    const double h = 1e-5;
    for (int check = 0; check < 4; ++check) {
      const int i = static_cast<int>(rng.next_u64() %
                                     static_cast<std::uint64_t>(p.size()));
      Eigen::VectorXd pp = p;
      pp[i] = p[i] + h;
      policy.set_params(pp);
      const double up = grpo_objective_and_grad(policy, ref, group, cfg).value;
      pp[i] = p[i] - h;
      policy.set_params(pp);
      const double down =
          grpo_objective_and_grad(policy, ref, group, cfg).value;
      policy.set_params(p);
      EXPECT(out, rel_ok(res.grad[i], (up - down) / (2.0 * h)));
      if (!out.ok) {
        out.detail << " objective inst " << inst;
        return out;
      }
    }
    ++instances;
  }
  out.detail << " instances=" << instances;
  EXPECT(out, instances >= 100);
  return out;
}

Outcome criterion_6_advantages() {
  Outcome out;
  Rng rng(66);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 2 + static_cast<int>(rng.next_u64() % 15);
    Eigen::VectorXd motion(K), geo(K);
    for (int k = 0; k < K; ++k) {
      motion[k] = 2.0 * rng.normal();
      geo[k] = 0.5 * rng.normal() - 1.0;
    }
    const Eigen::VectorXd adv = group_advantages(motion, 1e-6);
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().mean());
    EXPECT(out, std::abs(mean) <= 1e-9);
    EXPECT(out, std::abs(sd - 1.0) <= 1e-6);

    const Eigen::VectorXd dual = dual_advantages(motion, geo, 1e-6);
    const double sm = 0.1 + 5.0 * rng.uniform();
    const double sg = 0.1 + 5.0 * rng.uniform();
    const Eigen::VectorXd dual2 = dual_advantages(
        (sm * motion.array() + rng.normal()).matrix(),
        (sg * geo.array() + rng.normal()).matrix(), 1e-6);
    // ranking invariance up to standardization rounding noise
    const auto order = argsort(dual);
    for (int i = 0; i + 1 < K; ++i) {
      EXPECT(out, dual2[order[i + 1]] >= dual2[order[i]] - 1e-9);
    }
    if (!out.ok) {
      out.detail << " trial " << trial;
      break;
    }
  }
  return out;
}

Outcome criterion_7_alignment() {
  Outcome out;
  const ToyWorld world = ToyWorld::make_default();
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PolicyNetwork policy(world.decoder.latent_dim(), world.num_conditions, 32,
                         mix_seed(seed, 1));
    PretrainConfig pc;
    pc.seed = seed;
    pretrain_flow(policy, world, pc);

    GrpoConfig gc;
    gc.seed = seed;
    gc.learning_rate = 1e-2;  // toy-scale policy wants a larger step size
    gc.adam = true;           // adaptive moments stabilize the geo channel
    gc.eval_rollouts = 64;    // tighter before/after estimates
    const TrainingLog log = train(world, policy, gc);
    const double dm =
        log.final_eval.mean_r_motion - log.initial_eval.mean_r_motion;
    const double dg = log.final_eval.mean_r_geo - log.initial_eval.mean_r_geo;
    const bool ok = dm >= 0.05 && dg >= 0.02;
    out.detail << " seed" << seed << "(dm=" << dm << ",dg=" << dg << ")";
    if (ok) ++passed;
  }
  out.detail << " passed " << passed << "/5";
  EXPECT(out, passed >= 4);
  return out;
}

Outcome criterion_8_stitching() {
  Outcome out;
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const PlantedProblem prob = make_planted_problem(seed, 64);
    AlignConfig cfg;
    const StitchSearchResult res =
        stitch_search(prob.encoder, prob.net, prob.calib, cfg);
    bool ok = res.stitch_layer == 2 && res.per_layer_errors[1] < 1e-6 &&
              res.per_layer_errors[0] > 1e-2 && res.per_layer_errors[2] > 1e-2;

    // perturb the fitted connector and require fine-tuning to recover
    StitchedModel model = make_stitched(prob.net, res);
    Rng noise(mix_seed(seed, 7));
    for (Eigen::Index r = 0; r < model.connector.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < model.connector.w.cols(); ++c) {
        model.connector.w(r, c) += 0.05 * noise.normal();
      }
    }
    for (Eigen::Index i = 0; i < model.connector.b.size(); ++i) {
      model.connector.b[i] += 0.05 * noise.normal();
    }
    const double initial =
        align_loss(model, prob.net, prob.encoder, prob.calib, cfg);
    cfg.epochs = 400;
    align_finetune(model, prob.net, prob.encoder, prob.calib, cfg);
    const double final_loss =
        align_loss(model, prob.net, prob.encoder, prob.calib, cfg);
    ok = ok && final_loss < 0.1 * initial;
    out.detail << " seed" << seed << "(layer=" << res.stitch_layer
               << ",ratio=" << final_loss / initial << ")";
    if (ok) ++passed;
  }
  out.detail << " passed " << passed << "/5";
  EXPECT(out, passed == 5);
  return out;
}

Outcome criterion_9_guidance() {
  Outcome out;
  const VelocityFn field = gaussian_field(1.0);
  const Latent target = Latent::Constant(4, 0.75);
  const RewardFn reward = [target](const Latent& z) {
    return -(z - target).squaredNorm();
  };
  const Latent cond = Latent::Zero(1);

  GuidanceConfig cfg;
  cfg.s_reward = 0.1;
  cfg.total_steps = 50;
  cfg.guidance_interval = 20;
  GuidanceConfig off = cfg;
  off.s_reward = 0.0;

  int wins = 0, n = 0;
  for (int s = 0; s < 20; ++s) {
    const std::uint64_t seed = mix_seed(9000, s);
    const auto g = guided_sample(field, field, reward, cond, 4, 0.5, cfg,
                                 seed);
    const auto u = guided_sample(field, field, reward, cond, 4, 0.5, off,
                                 seed);
    const double rg = reward(g.trajectory.final_latent());
    const double ru = reward(u.trajectory.final_latent());
    if (rg != ru) {
      ++n;
      if (rg > ru) ++wins;
    }
  }
  const double p = sign_test_p(wins, n);
  out.detail << " wins " << wins << "/" << n << " p=" << p;
  EXPECT(out, p < 0.05);

  // s_reward = 0 is bit-identical to the plain sampler
  for (double a : {0.0, 0.5}) {
    const auto g = guided_sample(field, field, reward, cond, 4, a, off, 77);
    const LatentTrajectory plain = sample_trajectory(
        field, make_uniform_schedule(off.total_steps, a), cond, 4, 77);
    EXPECT(out, g.guidance_steps_applied == 0);
    EXPECT(out, g.trajectory.states.size() == plain.states.size());
    for (std::size_t i = 0; i < plain.states.size() && out.ok; ++i) {
      EXPECT(out, (g.trajectory.states[i] - plain.states[i])
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
    }
    EXPECT(out, g.trajectory.step_log_probs == plain.step_log_probs);
  }
  return out;
}

Outcome criterion_10_metrics() {
  Outcome out;

  // noiseless correspondences
  Rng rng(101);
  const Intrinsics k{12, 12, 8, 8, 16, 16};
  const CameraPose pa = pose_at(Vec3(0.3, -0.2, -5.0), so3_exp(Vec3(0.1, 0.2, 0)));
  const CameraPose pb = pose_at(Vec3(-0.5, 0.4, -4.2), so3_exp(Vec3(0, -0.15, 0.1)));
  const Mat3 f = fundamental_matrix(pa, pb, k);
  std::vector<Correspondence> matches;
  while (matches.size() < 40) {
    const Vec3 p(2.0 * rng.normal(), 2.0 * rng.normal(), rng.normal());
    const Projection a = project(p, pa, k);
    const Projection b = project(p, pb, k);
    if (a.degenerate || b.degenerate || a.depth <= 0 || b.depth <= 0) continue;
    matches.push_back({a.pixel, b.pixel});
  }
  EXPECT(out, sampson_error(f, matches) <= 1e-10);

  // hand-built substitution case: (x'Fx)^2 = 1, gradient norms sum to 4
  Mat3 fh;
  fh << 0, 0, 1, 0, 0, 1, 1, 1, -1;
  const std::vector<Correspondence> one{{Vec2(0, 0), Vec2(0, 0)}};
  EXPECT(out, std::abs(sampson_error(fh, one) - 0.25) < 1e-12);

  // Racc@5 pair counting: one of four frames rotated 10 degrees disturbs
  // 3 of the 6 pairs
  Rng prng(7);
  std::vector<CameraPose> gt;
  for (int i = 0; i < 4; ++i) {
    gt.push_back(pose_at(Vec3(i, 0.2 * i, -5.0),
                         so3_exp(0.2 * Vec3(prng.normal(), prng.normal(),
                                            prng.normal()))));
  }
  auto pred = gt;
  pred[2].rotation =
      so3_exp(Vec3(0, 10.0 * M_PI / 180.0, 0)) * pred[2].rotation;
  EXPECT(out, rotation_accuracy(pred, gt, 5.0) == 0.5);

  // AUC step case: two frames with rotation and baseline-direction errors
  // both exactly tau_max / 2 -> step function with area 0.5
  const std::vector<CameraPose> ident{pose_at(Vec3(0, 0, 0)),
                                      pose_at(Vec3(1, 0, 0))};
  const std::vector<CameraPose> off{
      pose_at(Vec3(0, 0, 0)),
      pose_at(Vec3(1, 0, 0), so3_exp(Vec3(0, 0, 15.0 * M_PI / 180.0)))};
  const double auc = pose_auc(off, ident, 30.0);
  out.detail << " auc=" << auc;
  EXPECT(out, std::abs(auc - 0.5) <= 0.01);
  return out;
}

Outcome criterion_11_perturbation() {
  Outcome out;
  const PlantedProblem prob = make_planted_problem(3, 64);
  const StitchSearchResult res =
      stitch_search(prob.encoder, prob.net, prob.calib, AlignConfig{});
  const StitchedModel model = make_stitched(prob.net, res);
  const std::vector<Feature> inputs(prob.calib.begin(),
                                    prob.calib.begin() + 8);
  const std::vector<double> alphas{0.0, 0.1, 0.2, 0.4};
  const auto rows = perturbation_study(model, prob.net, prob.encoder, inputs,
                                       alphas, 20, 424242, 5.0);
  for (const std::string pipeline : {"latent", "decoded"}) {
    std::vector<double> racc(alphas.size(), 0.0), tacc(alphas.size(), 0.0),
        auc(alphas.size(), 0.0);
    std::vector<int> count(alphas.size(), 0);
    for (const auto& row : rows) {
      if (row.pipeline != pipeline) continue;
      for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (row.alpha == alphas[i]) {
          racc[i] += row.racc;
          tacc[i] += row.tacc;
          auc[i] += row.auc;
          ++count[i];
        }
      }
    }
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      EXPECT(out, count[i] == 20);
      racc[i] /= count[i];
      tacc[i] /= count[i];
      auc[i] /= count[i];
    }
    out.detail << " " << pipeline << " racc=[";
    for (double v : racc) out.detail << v << " ";
    out.detail << "] auc=[";
    for (double v : auc) out.detail << v << " ";
    out.detail << "]";
    for (std::size_t i = 1; i < alphas.size(); ++i) {
      EXPECT(out, racc[i] <= racc[i - 1]);
      EXPECT(out, tacc[i] <= tacc[i - 1]);
      EXPECT(out, auc[i] <= auc[i - 1]);
    }
  }
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_12_reproducibility(const std::string& cli) {
  Outcome out;

  // round-trip identities
  {
    auto frames = consistent_scene(grid_points(), approach_poses(3));
    std::vector<Vec3> flow(frames[0].depth.size(), Vec3(0.01, 0, 0));
    frames[1].flow = flow;
    const Json doc = scene_to_json(frames);
    const auto back = scene_from_json(doc);
    EXPECT(out, scene_to_json(back).dump(2) == doc.dump(2));

    Rng rng(31);
    Checkpoint ckpt;
    ckpt.latent_dim = 4;
    ckpt.cond_dim = 2;
    ckpt.hidden_dim = 8;
    ckpt.params.resize(200);
    for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) {
      ckpt.params[i] = rng.normal() * std::pow(10.0, 2.0 * rng.normal());
    }
    const Checkpoint back_ckpt = checkpoint_from_json(checkpoint_to_json(ckpt));
    EXPECT(out, back_ckpt.params.size() == ckpt.params.size());
    for (Eigen::Index i = 0; i < ckpt.params.size() && out.ok; ++i) {
      EXPECT(out, back_ckpt.params[i] == ckpt.params[i]);
    }
  }

  // CLI byte-determinism
  if (cli.empty()) {
    out.ok = false;
    out.detail << " no CLI binary path given";
    return out;
  }
  namespace fs = std::filesystem;
  const fs::path base = "acceptance_tmp";
  fs::remove_all(base);
  fs::create_directories(base);
  const auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  std::ofstream(base / "pre.json")
      << R"({"seed": 9, "steps": 80, "hidden_dim": 8})";
  std::ofstream(base / "guide.json")
      << R"({"seed": 2, "num_seeds": 6, "total_steps": 30})";
  for (const auto& [name, cfg] :
       std::vector<std::pair<std::string, std::string>>{
           {"pretrain", "pre.json"}, {"guide", "guide.json"}}) {
    EXPECT(out, run(name + " --config " + (base / cfg).string() + " --out " +
                    (base / (name + "_a")).string()));
    EXPECT(out, run(name + " --config " + (base / cfg).string() + " --out " +
                    (base / (name + "_b")).string()));
    if (!out.ok) return out;
    for (const auto& entry : fs::directory_iterator(base / (name + "_a"))) {
      const std::string fname = entry.path().filename().string();
      if (fname == "run_meta.json") continue;  // timestamps only
      EXPECT(out,
             slurp(entry.path()) == slurp(base / (name + "_b") / fname));
      if (!out.ok) {
        out.detail << " differing file " << name << "/" << fname;
        return out;
      }
    }
  }
  fs::remove_all(base);
  return out;
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> fn;
  double budget_s;  // 0 = no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<Criterion> criteria{
      {1, "reward hand-case and self-consistency oracles",
       criterion_1_rewards, 1.0},
      {2, "bit-for-bit brute-force reprojection equivalence",
       criterion_2_brute_force, 30.0},
      {3, "stochastic sampler validity (ODE limit, Gaussian marginals)",
       criterion_3_sde, 60.0},
      {4, "closed-form KL equivalence and clipped-surrogate examples",
       criterion_4_kl_surrogate, 0.0},
      {5, "policy and objective gradients vs finite differences",
       criterion_5_gradients, 0.0},
      {6, "advantage standardization and ranking invariance",
       criterion_6_advantages, 0.0},
      {7, "end-to-end alignment raises both rewards across seeds",
       criterion_7_alignment, 300.0},
      {8, "stitch-layer recovery and fine-tune convergence",
       criterion_8_stitching, 120.0},
      {9, "reward guidance sign test and zero-strength identity",
       criterion_9_guidance, 0.0},
      {10, "Sampson and pose-accuracy metric oracles",
       criterion_10_metrics, 0.0},
      {11, "pose accuracy non-increasing under latent perturbation",
       criterion_11_perturbation, 0.0},
      {12, "byte-deterministic CLI and serialization round-trips",
       [&cli] { return criterion_12_reproducibility(cli); }, 0.0},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out = c.fn();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (c.budget_s > 0.0 && elapsed >= c.budget_s) {
      out.ok = false;
      out.detail << " [exceeded " << c.budget_s << " s budget]";
    }
    std::cout << (out.ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id
              << ": " << c.name << " (" << elapsed << " s)"
              << out.detail.str() << "\n";
    if (!out.ok) ++failures;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED"
                              : "FAILED CRITERIA: " + std::to_string(failures))
            << "\n";
  return failures == 0 ? 0 : 1;
}
