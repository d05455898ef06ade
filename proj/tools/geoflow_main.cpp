// Experiment driver: pretrain / align / eval-rewards / stitch / guide /
// perturb / metrics subcommands over JSON configs, with deterministic
// CSV/JSONL payloads and a segregated run_meta.json for timestamps.
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoflow/eval_metrics.hpp"
#include "geoflow/grpo.hpp"
#include "geoflow/guidance.hpp"
#include "geoflow/serialization.hpp"
#include "geoflow/stitching.hpp"
#include "geoflow/toy_world.hpp"

namespace gf = geoflow;
using gf::Json;

namespace {

struct RunContext {
  Json config;
  std::filesystem::path out_dir;
  std::string command;
  std::chrono::system_clock::time_point started;
};

double get_num(const Json& cfg, const char* key, double fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_number()) {
    throw gf::ConfigError(std::string("config key '") + key +
                          "' must be a number");
  }
  return cfg.at(key).get<double>();
}

int get_int(const Json& cfg, const char* key, int fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_number_integer()) {
    throw gf::ConfigError(std::string("config key '") + key +
                          "' must be an integer");
  }
  return cfg.at(key).get<int>();
}

bool get_bool(const Json& cfg, const char* key, bool fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg.at(key).is_boolean()) {
    throw gf::ConfigError(std::string("config key '") + key +
                          "' must be a boolean");
  }
  return cfg.at(key).get<bool>();
}

std::uint64_t get_seed(const Json& cfg, std::uint64_t fallback) {
  if (!cfg.contains("seed")) return fallback;
  if (!cfg.at("seed").is_number_unsigned() &&
      !cfg.at("seed").is_number_integer()) {
    throw gf::ConfigError("config key 'seed' must be an integer");
  }
  return cfg.at("seed").get<std::uint64_t>();
}

RunContext start_run(const std::string& command, const std::string& config_path,
                     std::optional<std::uint64_t> seed_override,
                     const std::string& out_dir) {
  RunContext ctx;
  ctx.command = command;
  ctx.started = std::chrono::system_clock::now();
  ctx.config = config_path.empty() ? Json::object()
                                   : gf::read_json_file(config_path);
  if (!ctx.config.is_object()) {
    throw gf::ConfigError("config root must be an object");
  }
  if (seed_override) ctx.config["seed"] = *seed_override;
  ctx.out_dir = out_dir.empty() ? ("run_" + command) : out_dir;
  std::filesystem::create_directories(ctx.out_dir);
  gf::write_text_file((ctx.out_dir / "resolved_config.json").string(),
                      ctx.config.dump(2) + "\n");
  return ctx;
}

void finish_run(const RunContext& ctx) {
  const auto ended = std::chrono::system_clock::now();
  const auto to_ms = [](std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               t.time_since_epoch())
        .count();
  };
  Json meta;
  meta["command"] = ctx.command;
  meta["started_unix_ms"] = to_ms(ctx.started);
  meta["ended_unix_ms"] = to_ms(ended);
  gf::write_text_file((ctx.out_dir / "run_meta.json").string(),
                      meta.dump(2) + "\n");
}

gf::Checkpoint policy_checkpoint(const gf::PolicyNetwork& policy,
                                 int iteration, std::uint64_t seed,
                                 const Json& config) {
  gf::Checkpoint ckpt;
  ckpt.latent_dim = policy.latent_dim();
  ckpt.cond_dim = policy.cond_dim();
  ckpt.hidden_dim = policy.hidden_dim();
  ckpt.params = policy.params();
  ckpt.iteration = iteration;
  ckpt.seed = seed;
  ckpt.config = config;
  return ckpt;
}

gf::PolicyNetwork policy_from_checkpoint(const gf::Checkpoint& ckpt) {
  gf::PolicyNetwork policy(ckpt.latent_dim, ckpt.cond_dim, ckpt.hidden_dim,
                           /*seed=*/0);
  if (ckpt.params.size() != policy.num_params()) {
    throw gf::ConfigError("checkpoint parameter count mismatch");
  }
  policy.set_params(ckpt.params);
  return policy;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw gf::NumericError(std::string(what) + " became non-finite");
  }
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg, {"seed", "steps", "batch_size", "learning_rate", "log_every",
            "hidden_dim"},
      "pretrain config");
  const std::uint64_t seed = get_seed(cfg, 0);
  gf::PretrainConfig pc;
  pc.steps = get_int(cfg, "steps", pc.steps);
  pc.batch_size = get_int(cfg, "batch_size", pc.batch_size);
  pc.learning_rate = get_num(cfg, "learning_rate", pc.learning_rate);
  pc.log_every = get_int(cfg, "log_every", pc.log_every);
  pc.seed = seed;
  const int hidden = get_int(cfg, "hidden_dim", 32);

  const gf::ToyWorld world = gf::ToyWorld::make_default();
  gf::PolicyNetwork policy(world.decoder.latent_dim(), world.num_conditions,
                           hidden, gf::mix_seed(seed, 1));
  const auto log = gf::pretrain_flow(policy, world, pc);

  std::ostringstream jsonl;
  for (const auto& rec : log) {
    check_finite(rec.loss, "pretraining loss");
    Json row{{"step", rec.step}, {"loss", rec.loss}};
    jsonl << row.dump() << "\n";
  }
  gf::write_text_file((ctx.out_dir / "pretrain_log.jsonl").string(),
                      jsonl.str());
  gf::save_checkpoint((ctx.out_dir / "checkpoint.json").string(),
                      policy_checkpoint(policy, pc.steps, seed, cfg));
  return 0;
}

int cmd_align(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg,
      {"seed", "group_size", "clip_eps", "kl_weight", "learning_rate",
       "weight_decay", "t_train", "t_infer", "sigma_a", "std_floor",
       "iterations", "adam", "eval_rollouts", "init_checkpoint", "hidden_dim",
       "pretrain_steps", "pretrain_learning_rate"},
      "align config");
  gf::GrpoConfig gc;
  gc.seed = get_seed(cfg, 0);
  gc.group_size = get_int(cfg, "group_size", gc.group_size);
  gc.clip_eps = get_num(cfg, "clip_eps", gc.clip_eps);
  gc.kl_weight = get_num(cfg, "kl_weight", gc.kl_weight);
  gc.learning_rate = get_num(cfg, "learning_rate", gc.learning_rate);
  gc.weight_decay = get_num(cfg, "weight_decay", gc.weight_decay);
  gc.t_train = get_int(cfg, "t_train", gc.t_train);
  gc.t_infer = get_int(cfg, "t_infer", gc.t_infer);
  gc.sigma_a = get_num(cfg, "sigma_a", gc.sigma_a);
  gc.std_floor = get_num(cfg, "std_floor", gc.std_floor);
  gc.iterations = get_int(cfg, "iterations", gc.iterations);
  gc.adam = get_bool(cfg, "adam", gc.adam);
  gc.eval_rollouts = get_int(cfg, "eval_rollouts", gc.eval_rollouts);

  const gf::ToyWorld world = gf::ToyWorld::make_default();
  gf::PolicyNetwork policy;
  if (cfg.contains("init_checkpoint")) {
    policy = policy_from_checkpoint(
        gf::load_checkpoint(cfg.at("init_checkpoint").get<std::string>()));
  } else {
    gf::PretrainConfig pc;
    pc.steps = get_int(cfg, "pretrain_steps", pc.steps);
    pc.learning_rate =
        get_num(cfg, "pretrain_learning_rate", pc.learning_rate);
    pc.seed = gc.seed;
    policy = gf::PolicyNetwork(world.decoder.latent_dim(),
                               world.num_conditions,
                               get_int(cfg, "hidden_dim", 32),
                               gf::mix_seed(gc.seed, 1));
    gf::pretrain_flow(policy, world, pc);
  }

  const gf::TrainingLog log = gf::train(world, policy, gc);

  std::ostringstream jsonl;
  for (const auto& it : log.iterations) {
    check_finite(it.mean_r_motion, "training reward");
    Json row{{"iteration", it.iteration},
             {"mean_r_motion", it.mean_r_motion},
             {"mean_r_geo", it.mean_r_geo},
             {"mean_advantage", it.mean_advantage},
             {"kl", it.kl},
             {"clip_fraction", it.clip_fraction}};
    jsonl << row.dump() << "\n";
  }
  gf::write_text_file((ctx.out_dir / "align_log.jsonl").string(), jsonl.str());
  // wall times are machine-dependent; keep them out of the payload files
  std::ostringstream times;
  for (const auto& it : log.iterations) {
    times << it.iteration << "," << it.wall_time_ms << "\n";
  }
  gf::write_text_file((ctx.out_dir / "wall_times.csv").string(), times.str());
  Json eval{{"initial", {{"mean_r_motion", log.initial_eval.mean_r_motion},
                         {"mean_r_geo", log.initial_eval.mean_r_geo}}},
            {"final", {{"mean_r_motion", log.final_eval.mean_r_motion},
                       {"mean_r_geo", log.final_eval.mean_r_geo}}}};
  gf::write_text_file((ctx.out_dir / "eval.json").string(),
                      eval.dump(2) + "\n");
  gf::save_checkpoint((ctx.out_dir / "checkpoint.json").string(),
                      policy_checkpoint(policy, gc.iterations, gc.seed, cfg));
  return 0;
}

int cmd_eval_rewards(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg, {"seed", "scenes", "eps_div", "flow_threshold", "z_near",
            "worst_k"},
      "eval-rewards config");
  if (!cfg.contains("scenes") || !cfg.at("scenes").is_array() ||
      cfg.at("scenes").empty()) {
    throw gf::ConfigError("eval-rewards config needs a non-empty 'scenes'");
  }
  gf::RewardConfig rc;
  rc.eps_div = get_num(cfg, "eps_div", rc.eps_div);
  rc.z_near = get_num(cfg, "z_near", rc.z_near);
  rc.worst_k = get_int(cfg, "worst_k", rc.worst_k);
  if (cfg.contains("flow_threshold") && !cfg.at("flow_threshold").is_null()) {
    rc.flow_threshold = get_num(cfg, "flow_threshold", 0.0);
  }

  std::ostringstream csv;
  csv << "scene,r_motion,r_geo,e_trans,e_rot,empty_view_count\n";
  for (const Json& entry : cfg.at("scenes")) {
    const std::string path = entry.get<std::string>();
    const auto frames = gf::load_scene(path);
    const gf::RewardBundle b = gf::reward_bundle(frames, rc);
    check_finite(b.r_motion, "r_motion");
    check_finite(b.r_geo, "r_geo");
    csv << std::filesystem::path(path).filename().string() << ","
        << gf::format_double(b.r_motion) << "," << gf::format_double(b.r_geo)
        << "," << gf::format_double(b.e_trans) << ","
        << gf::format_double(b.e_rot) << "," << b.empty_view_count << "\n";
  }
  gf::write_text_file((ctx.out_dir / "rewards.csv").string(), csv.str());
  return 0;
}

Json layer_to_json(const gf::Layer& layer) {
  Json w = Json::array();
  for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
      w.push_back(gf::format_double(layer.w(r, c)));
    }
  }
  Json b = Json::array();
  for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
    b.push_back(gf::format_double(layer.b[i]));
  }
  return Json{{"kind", static_cast<int>(layer.kind)},
              {"rows", layer.w.rows()},
              {"cols", layer.w.cols()},
              {"w", std::move(w)},
              {"b", std::move(b)}};
}

int cmd_stitch(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg,
      {"seed", "calib_size", "lambda_pose", "lambda_depth", "lambda_point",
       "lambda_flow", "epochs", "finetune_learning_rate",
       "finetune_lr_decay"},
      "stitch config");
  const std::uint64_t seed = get_seed(cfg, 0);
  gf::AlignConfig ac;
  ac.calib_size = get_int(cfg, "calib_size", ac.calib_size);
  ac.lambda_pose = get_num(cfg, "lambda_pose", ac.lambda_pose);
  ac.lambda_depth = get_num(cfg, "lambda_depth", ac.lambda_depth);
  ac.lambda_point = get_num(cfg, "lambda_point", ac.lambda_point);
  ac.lambda_flow = get_num(cfg, "lambda_flow", ac.lambda_flow);
  ac.epochs = get_int(cfg, "epochs", ac.epochs);
  ac.finetune_learning_rate =
      get_num(cfg, "finetune_learning_rate", ac.finetune_learning_rate);
  ac.finetune_lr_decay = get_num(cfg, "finetune_lr_decay", ac.finetune_lr_decay);

  const gf::PlantedProblem problem =
      gf::make_planted_problem(seed, ac.calib_size);
  const gf::StitchSearchResult search =
      gf::stitch_search(problem.encoder, problem.net, problem.calib, ac);

  std::ostringstream csv;
  csv << "layer,error\n";
  for (std::size_t l = 0; l < search.per_layer_errors.size(); ++l) {
    csv << (l + 1) << "," << gf::format_double(search.per_layer_errors[l])
        << "\n";
  }
  gf::write_text_file((ctx.out_dir / "layer_errors.csv").string(), csv.str());

  gf::StitchedModel stitched = gf::make_stitched(problem.net, search);
  const auto log =
      gf::align_finetune(stitched, problem.net, problem.encoder,
                         problem.calib, ac);
  std::ostringstream jsonl;
  for (const auto& rec : log) {
    check_finite(rec.loss, "alignment loss");
    jsonl << Json{{"epoch", rec.epoch}, {"loss", rec.loss}}.dump() << "\n";
  }
  gf::write_text_file((ctx.out_dir / "finetune_log.jsonl").string(),
                      jsonl.str());

  Json model;
  model["format_version"] = 1;
  model["stitch_layer"] = stitched.stitch_layer;
  model["connector"] = layer_to_json(stitched.connector);
  Json downstream = Json::array();
  for (const auto& layer : stitched.downstream) {
    downstream.push_back(layer_to_json(layer));
  }
  model["downstream"] = std::move(downstream);
  model["heads"] = Json{{"pose", layer_to_json(stitched.heads.pose)},
                        {"depth", layer_to_json(stitched.heads.depth)},
                        {"point", layer_to_json(stitched.heads.point)},
                        {"flow", layer_to_json(stitched.heads.flow)}};
  gf::write_text_file((ctx.out_dir / "stitched_model.json").string(),
                      model.dump(2) + "\n");
  return 0;
}

int cmd_guide(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg,
      {"seed", "num_seeds", "s_reward", "guidance_interval", "total_steps",
       "cfg_scale", "fd_step", "sigma_a", "dim"},
      "guide config");
  const std::uint64_t seed = get_seed(cfg, 0);
  const int num_seeds = get_int(cfg, "num_seeds", 20);
  const int dim = get_int(cfg, "dim", 4);
  const double a = get_num(cfg, "sigma_a", 0.5);
  gf::GuidanceConfig gcfg;
  gcfg.s_reward = get_num(cfg, "s_reward", gcfg.s_reward);
  gcfg.guidance_interval =
      get_int(cfg, "guidance_interval", gcfg.guidance_interval);
  gcfg.total_steps = get_int(cfg, "total_steps", gcfg.total_steps);
  gcfg.cfg_scale = get_num(cfg, "cfg_scale", gcfg.cfg_scale);
  gcfg.fd_step = get_num(cfg, "fd_step", gcfg.fd_step);

  // Unit-Gaussian data velocity field; the reward pulls samples toward a
  // fixed target, so guided final rewards should dominate unguided ones.
  const gf::VelocityFn field = [](const gf::Latent& x, double t,
                                  const gf::Latent&) {
    const double denom = (1.0 - t) * (1.0 - t) + t * t;
    return gf::Latent((t - (1.0 - t)) / denom * x);
  };
  gf::Latent target = gf::Latent::Constant(dim, 0.75);
  const gf::RewardFn reward = [target](const gf::Latent& z) {
    return -(z - target).squaredNorm();
  };
  const gf::Latent cond = gf::Latent::Zero(1);

  std::ostringstream csv;
  csv << "seed,reward_guided,reward_unguided\n";
  for (int s = 0; s < num_seeds; ++s) {
    const std::uint64_t rollout_seed = gf::mix_seed(seed, s);
    gf::GuidanceConfig unguided = gcfg;
    unguided.s_reward = 0.0;
    const auto g =
        gf::guided_sample(field, field, reward, cond, dim, a, gcfg,
                          rollout_seed);
    const auto u =
        gf::guided_sample(field, field, reward, cond, dim, a, unguided,
                          rollout_seed);
    const double rg = reward(g.trajectory.final_latent());
    const double ru = reward(u.trajectory.final_latent());
    check_finite(rg, "guided reward");
    check_finite(ru, "unguided reward");
    csv << s << "," << gf::format_double(rg) << "," << gf::format_double(ru)
        << "\n";
  }
  gf::write_text_file((ctx.out_dir / "guide_rewards.csv").string(), csv.str());
  return 0;
}

int cmd_perturb(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg,
      {"seed", "num_seeds", "calib_size", "alphas", "tau_deg", "num_inputs"},
      "perturb config");
  const std::uint64_t seed = get_seed(cfg, 0);
  const int num_seeds = get_int(cfg, "num_seeds", 20);
  const double tau_deg = get_num(cfg, "tau_deg", 5.0);
  const int calib_size = get_int(cfg, "calib_size", 64);
  const int num_inputs = get_int(cfg, "num_inputs", 8);
  std::vector<double> alphas{0.0, 0.05, 0.1, 0.2, 0.4};
  if (cfg.contains("alphas")) {
    alphas.clear();
    for (const Json& a : cfg.at("alphas")) alphas.push_back(a.get<double>());
    if (alphas.empty()) throw gf::ConfigError("'alphas' must be non-empty");
  }

  const gf::PlantedProblem problem =
      gf::make_planted_problem(seed, calib_size);
  gf::AlignConfig ac;
  ac.calib_size = calib_size;
  const gf::StitchSearchResult search =
      gf::stitch_search(problem.encoder, problem.net, problem.calib, ac);
  const gf::StitchedModel stitched = gf::make_stitched(problem.net, search);

  std::vector<gf::Feature> inputs(
      problem.calib.begin(),
      problem.calib.begin() +
          std::min<std::size_t>(num_inputs, problem.calib.size()));
  const auto rows = gf::perturbation_study(
      stitched, problem.net, problem.encoder, inputs, alphas, num_seeds,
      gf::mix_seed(seed, 99), tau_deg);

  std::ostringstream csv;
  csv << "alpha,pipeline,seed,racc,tacc,auc\n";
  for (const auto& row : rows) {
    check_finite(row.auc, "perturbation metric");
    csv << gf::format_double(row.alpha) << "," << row.pipeline << ","
        << row.seed << "," << gf::format_double(row.racc) << ","
        << gf::format_double(row.tacc) << "," << gf::format_double(row.auc)
        << "\n";
  }
  gf::write_text_file((ctx.out_dir / "robustness.csv").string(), csv.str());
  return 0;
}

std::vector<gf::CameraPose> load_pose_file(const std::string& path) {
  const Json doc = gf::read_json_file(path);
  gf::reject_unknown_keys(doc, {"format_version", "poses"}, "pose file");
  if (doc.at("format_version").get<int>() != 1) {
    throw gf::ConfigError(path + ": unsupported format_version");
  }
  std::vector<gf::CameraPose> poses;
  for (const Json& jp : doc.at("poses")) {
    if (!jp.is_array() || jp.size() != 12) {
      throw gf::ConfigError(path + ": each pose needs 12 floats");
    }
    gf::CameraPose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        p.rotation(r, c) = jp[3 * r + c].get<double>();
      }
    }
    for (int i = 0; i < 3; ++i) p.translation[i] = jp[9 + i].get<double>();
    poses.push_back(p);
  }
  if (poses.empty()) throw gf::ConfigError(path + ": no poses");
  return poses;
}

int cmd_metrics(const RunContext& ctx) {
  const Json& cfg = ctx.config;
  gf::reject_unknown_keys(
      cfg, {"seed", "pred", "gt", "taus", "tau_max", "matches"},
      "metrics config");
  if (!cfg.contains("pred") || !cfg.contains("gt")) {
    throw gf::ConfigError("metrics config needs 'pred' and 'gt' pose files");
  }
  const auto pred = load_pose_file(cfg.at("pred").get<std::string>());
  const auto gt = load_pose_file(cfg.at("gt").get<std::string>());
  if (pred.size() != gt.size()) {
    throw gf::ConfigError("pred/gt pose counts differ");
  }
  std::vector<double> taus{5.0, 10.0, 15.0};
  if (cfg.contains("taus")) {
    taus.clear();
    for (const Json& t : cfg.at("taus")) taus.push_back(t.get<double>());
  }
  const double tau_max = get_num(cfg, "tau_max", 30.0);
  const std::size_t n_pairs = pred.size() * (pred.size() - 1) / 2;

  std::ostringstream csv;
  csv << "metric,tau,value,n_pairs\n";
  for (double tau : taus) {
    csv << "racc," << gf::format_double(tau) << ","
        << gf::format_double(gf::rotation_accuracy(pred, gt, tau)) << ","
        << n_pairs << "\n";
    csv << "tacc," << gf::format_double(tau) << ","
        << gf::format_double(gf::translation_accuracy(pred, gt, tau)) << ","
        << n_pairs << "\n";
  }
  csv << "pose_auc," << gf::format_double(tau_max) << ","
      << gf::format_double(gf::pose_auc(pred, gt, tau_max)) << "," << n_pairs
      << "\n";

  if (cfg.contains("matches")) {
    const Json mdoc =
        gf::read_json_file(cfg.at("matches").get<std::string>());
    gf::reject_unknown_keys(
        mdoc,
        {"format_version", "intrinsics", "frame_i", "frame_j", "matches"},
        "matches file");
    const int fi = mdoc.at("frame_i").get<int>();
    const int fj = mdoc.at("frame_j").get<int>();
    if (fi < 0 || fj < 0 || fi >= static_cast<int>(gt.size()) ||
        fj >= static_cast<int>(gt.size()) || fi == fj) {
      throw gf::ConfigError("matches file frame indices out of range");
    }
    gf::Intrinsics k;
    const Json& jk = mdoc.at("intrinsics");
    k.fx = jk.at("fx").get<double>();
    k.fy = jk.at("fy").get<double>();
    k.cx = jk.at("cx").get<double>();
    k.cy = jk.at("cy").get<double>();
    k.width = jk.value("width", 0);
    k.height = jk.value("height", 0);
    std::vector<gf::Correspondence> matches;
    for (const Json& jm : mdoc.at("matches")) {
      if (!jm.is_array() || jm.size() != 4) {
        throw gf::ConfigError("each match needs 4 floats");
      }
      gf::Correspondence c;
      c.pixel_i = gf::Vec2(jm[0].get<double>(), jm[1].get<double>());
      c.pixel_j = gf::Vec2(jm[2].get<double>(), jm[3].get<double>());
      matches.push_back(c);
    }
    const gf::Mat3 f = gf::fundamental_matrix(gt[fi], gt[fj], k);
    int skipped = 0;
    const double sampson = gf::sampson_error(f, matches, &skipped);
    check_finite(sampson, "sampson error");
    csv << "sampson,0," << gf::format_double(sampson) << ","
        << (matches.size() - skipped) << "\n";
  }
  gf::write_text_file((ctx.out_dir / "metrics.csv").string(), csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-geometry alignment experiment driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;

  const std::vector<std::pair<std::string, int (*)(const RunContext&)>>
      commands = {{"pretrain", cmd_pretrain},   {"align", cmd_align},
                  {"eval-rewards", cmd_eval_rewards},
                  {"stitch", cmd_stitch},       {"guide", cmd_guide},
                  {"perturb", cmd_perturb},     {"metrics", cmd_metrics}};
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--out", out_dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunContext ctx = start_run(command, config_path, seed_override, out_dir);
    int rc = 1;
    for (const auto& [name, fn] : commands) {
      if (name == command) {
        rc = fn(ctx);
        break;
      }
    }
    finish_run(ctx);
    return rc;
  } catch (const gf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
