#include "geoflow/stitching.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "geoflow/eval_metrics.hpp"

namespace geoflow {

Feature Layer::forward(const Feature& x) const {
  switch (kind) {
    case kAffine:
      return w * x + b;
    case kTanhAffine:
      return (w * x + b).array().tanh();
    case kAtanhAffine:
      return w * x.array().atanh().matrix() + b;
  }
  throw std::logic_error("Layer::forward: unknown kind");
}

ModalityOutputs GeometryHeads::apply(const Feature& feature) const {
  ModalityOutputs out;
  out.pose = pose.forward(feature);
  out.depth = depth.forward(feature);
  out.point = point.forward(feature);
  out.flow = flow.forward(feature);
  return out;
}

Feature LayeredGeometryNet::forward_prefix(const Feature& x, int l) const {
  Feature f = x;
  for (int i = 0; i < l; ++i) f = layers[i].forward(f);
  return f;
}

ModalityOutputs LayeredGeometryNet::predict(const Feature& x) const {
  return heads.apply(forward_prefix(x, depth_count()));
}

StitchSearchResult stitch_search(const AffineEncoder& encoder,
                                 const LayeredGeometryNet& net,
                                 const std::vector<Feature>& calib,
                                 const AlignConfig& cfg) {
  (void)cfg;
  if (calib.empty()) {
    throw std::invalid_argument("stitch_search: empty calibration set");
  }
  const int m = static_cast<int>(calib.size());
  const int dz = static_cast<int>(encoder.b.size());

  Eigen::MatrixXd design(m, dz + 1);
  for (int i = 0; i < m; ++i) {
    design.row(i).head(dz) = encoder.forward(calib[i]).transpose();
    design(i, dz) = 1.0;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  const bool low_rank = qr.rank() < std::min<Eigen::Index>(dz + 1, m);

  StitchSearchResult result;
  result.low_rank = low_rank;
  double best_err = 0.0;
  for (int l = 1; l <= net.depth_count(); ++l) {
    const int df = static_cast<int>(net.forward_prefix(calib[0], l).size());
    Eigen::MatrixXd target(m, df);
    for (int i = 0; i < m; ++i) {
      target.row(i) = net.forward_prefix(calib[i], l).transpose();
    }
    const Eigen::MatrixXd coef = qr.solve(target);  // (dz+1) x df
    const double err =
        (design * coef - target).rowwise().squaredNorm().mean();
    result.per_layer_errors.push_back(err);
    if (l == 1 || err < best_err) {
      best_err = err;
      result.stitch_layer = l;
      result.connector_w = coef.topRows(dz).transpose();
      result.connector_b = coef.row(dz).transpose();
    }
  }
  return result;
}

StitchedModel make_stitched(const LayeredGeometryNet& net,
                            const StitchSearchResult& search) {
  StitchedModel model;
  model.connector.kind = Layer::kAffine;
  model.connector.w = search.connector_w;
  model.connector.b = search.connector_b;
  model.stitch_layer = search.stitch_layer;
  model.downstream.assign(net.layers.begin() + search.stitch_layer,
                          net.layers.end());
  model.heads = net.heads;
  model.num_frames = net.num_frames;
  model.grid_h = net.grid_h;
  model.grid_w = net.grid_w;
  return model;
}

ModalityOutputs StitchedModel::predict(const Feature& latent) const {
  if (latent.size() != connector.w.cols()) {
    throw std::invalid_argument("StitchedModel::predict: dim mismatch");
  }
  Feature f = connector.forward(latent);
  for (const auto& layer : downstream) f = layer.forward(f);
  return heads.apply(f);
}

std::vector<CameraPose> poses_from_head(const Eigen::VectorXd& pose_vec,
                                        int num_frames) {
  std::vector<CameraPose> poses(num_frames);
  for (int i = 0; i < num_frames; ++i) {
    Mat3 raw;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) raw(r, c) = pose_vec[i * 12 + 3 * r + c];
    }
    // Nearest rotation in Frobenius norm.
    Eigen::JacobiSVD<Mat3> svd(raw,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 rot = svd.matrixU() * svd.matrixV().transpose();
    if (rot.determinant() < 0.0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      rot = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    poses[i].rotation = rot;
    poses[i].translation =
        Vec3(pose_vec[i * 12 + 9], pose_vec[i * 12 + 10],
             pose_vec[i * 12 + 11]);
  }
  return poses;
}

std::vector<GeometryFrame> StitchedModel::predict_frames(
    const Feature& latent, const Intrinsics& k) const {
  const ModalityOutputs out = predict(latent);
  const auto poses = poses_from_head(out.pose, num_frames);
  const int npx = grid_h * grid_w;
  std::vector<GeometryFrame> frames(num_frames);
  for (int i = 0; i < num_frames; ++i) {
    GeometryFrame& f = frames[i];
    f.pose = poses[i];
    f.intrinsics = k;
    f.height = grid_h;
    f.width = grid_w;
    f.depth.resize(npx);
    f.point_map.resize(npx);
    std::vector<Vec3> flow(npx);
    for (int p = 0; p < npx; ++p) {
      const double u = out.depth[i * npx + p];
      // softplus keeps depth positive
      f.depth[p] = std::log1p(std::exp(-std::abs(u))) + std::max(u, 0.0) + 0.05;
      for (int c = 0; c < 3; ++c) {
        f.point_map[p][c] = out.point[(i * npx + p) * 3 + c];
        flow[p][c] = out.flow[(i * npx + p) * 3 + c];
      }
    }
    f.flow = std::move(flow);
  }
  return frames;
}

namespace {

struct ModalityLambdas {
  double pose, depth, point, flow;
};

double weighted_l1(const ModalityOutputs& a, const ModalityOutputs& b,
                   const ModalityLambdas& lam) {
  double loss = 0.0;
  loss += lam.pose * (a.pose - b.pose).cwiseAbs().mean();
  loss += lam.depth * (a.depth - b.depth).cwiseAbs().mean();
  loss += lam.point * (a.point - b.point).cwiseAbs().mean();
  loss += lam.flow * (a.flow - b.flow).cwiseAbs().mean();
  return loss;
}

Eigen::VectorXd sign_grad(const Eigen::VectorXd& residual, double lambda) {
  const double scale = lambda / static_cast<double>(residual.size());
  // residuals at numerical noise level take the 0 element of the
  // subdifferential so an already-converged fit stays put
  return residual.unaryExpr([scale](double r) {
    return std::abs(r) > 1e-9 ? (r > 0.0 ? scale : -scale) : 0.0;
  });
}

// Gradients for one layer application; returns the input adjoint.
Feature layer_backward(const Layer& layer, const Feature& input,
                       const Feature& output, const Feature& out_adj,
                       Eigen::MatrixXd& gw, Eigen::VectorXd& gb) {
  switch (layer.kind) {
    case Layer::kAffine: {
      gw += out_adj * input.transpose();
      gb += out_adj;
      return layer.w.transpose() * out_adj;
    }
    case Layer::kTanhAffine: {
      const Feature du =
          (out_adj.array() * (1.0 - output.array().square())).matrix();
      gw += du * input.transpose();
      gb += du;
      return layer.w.transpose() * du;
    }
    case Layer::kAtanhAffine: {
      gw += out_adj * input.array().atanh().matrix().transpose();
      gb += out_adj;
      const Feature wt = layer.w.transpose() * out_adj;
      return (wt.array() / (1.0 - input.array().square())).matrix();
    }
  }
  throw std::logic_error("layer_backward: unknown kind");
}

}  // namespace

double align_loss(const StitchedModel& stitched,
                  const LayeredGeometryNet& reference,
                  const AffineEncoder& encoder,
                  const std::vector<Feature>& data, const AlignConfig& cfg) {
  const ModalityLambdas lam{cfg.lambda_pose, cfg.lambda_depth,
                            cfg.lambda_point, cfg.lambda_flow};
  double total = 0.0;
  for (const auto& x : data) {
    total += weighted_l1(stitched.predict(encoder.forward(x)),
                         reference.predict(x), lam);
  }
  return total / static_cast<double>(data.size());
}

std::vector<FinetuneRecord> align_finetune(StitchedModel& stitched,
                                           const LayeredGeometryNet& reference,
                                           const AffineEncoder& encoder,
                                           const std::vector<Feature>& data,
                                           const AlignConfig& cfg) {
  if (cfg.lambda_pose == 0.0 && cfg.lambda_depth == 0.0 &&
      cfg.lambda_point == 0.0 && cfg.lambda_flow == 0.0) {
    throw std::invalid_argument("align_finetune: all modality weights zero");
  }
  const ModalityLambdas lam{cfg.lambda_pose, cfg.lambda_depth,
                            cfg.lambda_point, cfg.lambda_flow};
  const double inv_m = 1.0 / static_cast<double>(data.size());

  std::vector<FinetuneRecord> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // zero grads
    Eigen::MatrixXd g_conn_w = Eigen::MatrixXd::Zero(
        stitched.connector.w.rows(), stitched.connector.w.cols());
    Eigen::VectorXd g_conn_b =
        Eigen::VectorXd::Zero(stitched.connector.b.size());
    std::vector<Eigen::MatrixXd> g_layer_w;
    std::vector<Eigen::VectorXd> g_layer_b;
    for (const auto& layer : stitched.downstream) {
      g_layer_w.push_back(
          Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()));
      g_layer_b.push_back(Eigen::VectorXd::Zero(layer.b.size()));
    }
    GeometryHeads& heads = stitched.heads;
    Eigen::MatrixXd g_hp = Eigen::MatrixXd::Zero(heads.pose.w.rows(),
                                                 heads.pose.w.cols());
    Eigen::MatrixXd g_hd = Eigen::MatrixXd::Zero(heads.depth.w.rows(),
                                                 heads.depth.w.cols());
    Eigen::MatrixXd g_hpt = Eigen::MatrixXd::Zero(heads.point.w.rows(),
                                                  heads.point.w.cols());
    Eigen::MatrixXd g_hf = Eigen::MatrixXd::Zero(heads.flow.w.rows(),
                                                 heads.flow.w.cols());
    Eigen::VectorXd g_bp = Eigen::VectorXd::Zero(heads.pose.b.size());
    Eigen::VectorXd g_bd = Eigen::VectorXd::Zero(heads.depth.b.size());
    Eigen::VectorXd g_bpt = Eigen::VectorXd::Zero(heads.point.b.size());
    Eigen::VectorXd g_bf = Eigen::VectorXd::Zero(heads.flow.b.size());

    double loss = 0.0;
    for (const auto& x : data) {
      // forward with caches
      const Feature z = encoder.forward(x);
      std::vector<Feature> acts;  // connector output, then each downstream
      acts.push_back(stitched.connector.forward(z));
      for (const auto& layer : stitched.downstream) {
        acts.push_back(layer.forward(acts.back()));
      }
      const Feature& feat = acts.back();
      const ModalityOutputs pred = heads.apply(feat);
      const ModalityOutputs target = reference.predict(x);
      loss += inv_m * weighted_l1(pred, target, lam);

      const Eigen::VectorXd dp =
          inv_m * sign_grad(pred.pose - target.pose, lam.pose);
      const Eigen::VectorXd dd =
          inv_m * sign_grad(pred.depth - target.depth, lam.depth);
      const Eigen::VectorXd dpt =
          inv_m * sign_grad(pred.point - target.point, lam.point);
      const Eigen::VectorXd df =
          inv_m * sign_grad(pred.flow - target.flow, lam.flow);
      g_hp += dp * feat.transpose();
      g_bp += dp;
      g_hd += dd * feat.transpose();
      g_bd += dd;
      g_hpt += dpt * feat.transpose();
      g_bpt += dpt;
      g_hf += df * feat.transpose();
      g_bf += df;

      Feature adj = heads.pose.w.transpose() * dp +
                    heads.depth.w.transpose() * dd +
                    heads.point.w.transpose() * dpt +
                    heads.flow.w.transpose() * df;
      for (int l = static_cast<int>(stitched.downstream.size()) - 1; l >= 0;
           --l) {
        adj = layer_backward(stitched.downstream[l], acts[l], acts[l + 1],
                             adj, g_layer_w[l], g_layer_b[l]);
      }
      // connector (affine from z)
      g_conn_w += adj * z.transpose();
      g_conn_b += adj;
    }

    const double lr =
        cfg.finetune_learning_rate * std::pow(cfg.finetune_lr_decay, epoch);
    stitched.connector.w -= lr * g_conn_w;
    stitched.connector.b -= lr * g_conn_b;
    for (std::size_t l = 0; l < stitched.downstream.size(); ++l) {
      stitched.downstream[l].w -= lr * g_layer_w[l];
      stitched.downstream[l].b -= lr * g_layer_b[l];
    }
    heads.pose.w -= lr * g_hp;
    heads.pose.b -= lr * g_bp;
    heads.depth.w -= lr * g_hd;
    heads.depth.b -= lr * g_bd;
    heads.point.w -= lr * g_hpt;
    heads.point.b -= lr * g_bpt;
    heads.flow.w -= lr * g_hf;
    heads.flow.b -= lr * g_bf;

    log.push_back({epoch, loss});
  }
  return log;
}

PlantedProblem make_planted_problem(std::uint64_t seed, int calib_size) {
  PlantedProblem prob;
  Rng rng(seed);
  const int dx = 12, dz = 10, df = 12;
  auto randn_mat = [&rng](int r, int c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j) {
      for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    }
    return m;
  };
  auto randn_vec = [&rng](int n, double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
  };

  prob.encoder.a = randn_mat(dz, dx, 0.5);
  prob.encoder.b = randn_vec(dz, 0.2);

  // T1 factors through the encoder row space so that T2 o T1 is exactly
  // affine in E(x); T1 alone and T3 o T2 o T1 are not.
  // Small first-layer gain keeps tanh pre-activations away from saturation,
  // where the planted inverse reconstruction loses precision.
  const Eigen::MatrixXd w1p = randn_mat(df, dz, 0.22);
  Layer t1;
  t1.kind = Layer::kTanhAffine;
  t1.w = w1p * prob.encoder.a;
  t1.b = randn_vec(df, 0.1);
  Layer t2;
  t2.kind = Layer::kAtanhAffine;
  t2.w = randn_mat(df, df, 0.4);
  t2.b = randn_vec(df, 0.2);
  Layer t3;
  t3.kind = Layer::kTanhAffine;
  t3.w = randn_mat(df, df, 0.8);
  t3.b = randn_vec(df, 0.2);
  Layer t4;
  t4.kind = Layer::kTanhAffine;
  t4.w = randn_mat(df, df, 0.8);
  t4.b = randn_vec(df, 0.2);
  prob.net.layers = {t1, t2, t3, t4};

  auto head = [&](int out_dim, double scale) {
    Layer h;
    h.kind = Layer::kAffine;
    h.w = randn_mat(out_dim, df, scale);
    h.b = randn_vec(out_dim, scale);
    return h;
  };
  const int nf = prob.net.num_frames;
  const int npx = prob.net.grid_h * prob.net.grid_w;
  prob.net.heads.pose = head(nf * 12, 0.8);
  prob.net.heads.depth = head(nf * npx, 0.8);
  prob.net.heads.point = head(nf * npx * 3, 0.8);
  prob.net.heads.flow = head(nf * npx * 3, 0.8);

  prob.calib.reserve(calib_size);
  for (int i = 0; i < calib_size; ++i) {
    prob.calib.push_back(randn_vec(dx, 1.0));
  }
  return prob;
}

std::vector<PerturbationRow> perturbation_study(
    const StitchedModel& stitched, const LayeredGeometryNet& reference,
    const AffineEncoder& encoder, const std::vector<Feature>& inputs,
    const std::vector<double>& alphas, int num_seeds, std::uint64_t seed,
    double tau_deg) {
  // Lossy observation recovery through the encoder pseudo-inverse.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(encoder.a);

  std::vector<PerturbationRow> rows;
  for (double alpha : alphas) {
    for (int s = 0; s < num_seeds; ++s) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s) * 977 +
                                 static_cast<std::uint64_t>(alpha * 1e6)));
      double racc_lat = 0.0, tacc_lat = 0.0, auc_lat = 0.0;
      double racc_dec = 0.0, tacc_dec = 0.0, auc_dec = 0.0;
      for (const auto& x : inputs) {
        const auto gt =
            poses_from_head(reference.predict(x).pose, reference.num_frames);
        Feature z = encoder.forward(x);
        Feature noise(z.size());
        for (Eigen::Index i = 0; i < noise.size(); ++i) {
          noise[i] = rng.normal();
        }
        const Feature zp = z + alpha * z.norm() * noise;

        const auto pred_lat =
            poses_from_head(stitched.predict(zp).pose, stitched.num_frames);
        const Feature x_dec = cod.solve(zp - encoder.b);
        const auto pred_dec =
            poses_from_head(reference.predict(x_dec).pose,
                            reference.num_frames);

        const double inv_n = 1.0 / static_cast<double>(inputs.size());
        racc_lat += inv_n * rotation_accuracy(pred_lat, gt, tau_deg);
        tacc_lat += inv_n * translation_accuracy(pred_lat, gt, tau_deg);
        auc_lat += inv_n * pose_auc(pred_lat, gt, tau_deg);
        racc_dec += inv_n * rotation_accuracy(pred_dec, gt, tau_deg);
        tacc_dec += inv_n * translation_accuracy(pred_dec, gt, tau_deg);
        auc_dec += inv_n * pose_auc(pred_dec, gt, tau_deg);
      }
      rows.push_back({alpha, "latent", static_cast<std::uint64_t>(s),
                      racc_lat, tacc_lat, auc_lat});
      rows.push_back({alpha, "decoded", static_cast<std::uint64_t>(s),
                      racc_dec, tacc_dec, auc_dec});
    }
  }
  return rows;
}

}  // namespace geoflow
