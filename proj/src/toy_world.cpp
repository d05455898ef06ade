#include "geoflow/toy_world.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace geoflow {

PolicyNetwork::PolicyNetwork(int latent_dim, int cond_dim, int hidden_dim,
                             std::uint64_t seed)
    : latent_dim_(latent_dim), cond_dim_(cond_dim), hidden_dim_(hidden_dim) {
  const int in = latent_dim + 1 + cond_dim;
  Rng rng(seed);
  auto init = [&rng](Eigen::MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
    }
  };
  init(w1_, hidden_dim, in);
  init(w2_, hidden_dim, hidden_dim);
  init(w3_, latent_dim, hidden_dim);
  b1_ = Eigen::VectorXd::Zero(hidden_dim);
  b2_ = Eigen::VectorXd::Zero(hidden_dim);
  b3_ = Eigen::VectorXd::Zero(latent_dim);
}

Latent PolicyNetwork::forward(const Latent& x, double t, const Latent& cond,
                              Cache* cache) const {
  Eigen::VectorXd u(latent_dim_ + 1 + cond_dim_);
  u.head(latent_dim_) = x;
  u[latent_dim_] = t;
  u.tail(cond_dim_) = cond;
  const Eigen::VectorXd h1 = (w1_ * u + b1_).array().tanh();
  const Eigen::VectorXd h2 = (w2_ * h1 + b2_).array().tanh();
  if (cache) {
    cache->input = u;
    cache->h1 = h1;
    cache->h2 = h2;
  }
  return w3_ * h2 + b3_;
}

int PolicyNetwork::num_params() const {
  return static_cast<int>(w1_.size() + b1_.size() + w2_.size() + b2_.size() +
                          w3_.size() + b3_.size());
}

void PolicyNetwork::backward(const Cache& cache,
                             const Eigen::VectorXd& adjoint,
                             Eigen::VectorXd& grad) const {
  if (cache.input.size() == 0) {
    throw std::logic_error("PolicyNetwork::backward: missing forward cache");
  }
  const Eigen::VectorXd d2 =
      (w3_.transpose() * adjoint).array() * (1.0 - cache.h2.array().square());
  const Eigen::VectorXd d1 =
      (w2_.transpose() * d2).array() * (1.0 - cache.h1.array().square());

  Eigen::Index off = 0;
  auto add_mat = [&grad, &off](const Eigen::MatrixXd& contrib) {
    Eigen::Map<const Eigen::VectorXd> flat(contrib.data(), contrib.size());
    grad.segment(off, contrib.size()) += flat;
    off += contrib.size();
  };
  auto add_vec = [&grad, &off](const Eigen::VectorXd& contrib) {
    grad.segment(off, contrib.size()) += contrib;
    off += contrib.size();
  };
  add_mat(d1 * cache.input.transpose());
  add_vec(d1);
  add_mat(d2 * cache.h1.transpose());
  add_vec(d2);
  add_mat(adjoint * cache.h2.transpose());
  add_vec(adjoint);
}

Eigen::VectorXd PolicyNetwork::params() const {
  Eigen::VectorXd p(num_params());
  Eigen::Index off = 0;
  auto put_mat = [&p, &off](const Eigen::MatrixXd& m) {
    p.segment(off, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(),
                                                                 m.size());
    off += m.size();
  };
  auto put_vec = [&p, &off](const Eigen::VectorXd& v) {
    p.segment(off, v.size()) = v;
    off += v.size();
  };
  put_mat(w1_);
  put_vec(b1_);
  put_mat(w2_);
  put_vec(b2_);
  put_mat(w3_);
  put_vec(b3_);
  return p;
}

void PolicyNetwork::set_params(const Eigen::VectorXd& p) {
  if (p.size() != num_params()) {
    throw std::invalid_argument("PolicyNetwork::set_params: size mismatch");
  }
  Eigen::Index off = 0;
  auto get_mat = [&p, &off](Eigen::MatrixXd& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) =
        p.segment(off, m.size());
    off += m.size();
  };
  auto get_vec = [&p, &off](Eigen::VectorXd& v) {
    v = p.segment(off, v.size());
    off += v.size();
  };
  get_mat(w1_);
  get_vec(b1_);
  get_mat(w2_);
  get_vec(b2_);
  get_mat(w3_);
  get_vec(b3_);
}

VelocityFn PolicyNetwork::as_velocity_fn() const {
  return [this](const Latent& x, double t, const Latent& cond) {
    return forward(x, t, cond);
  };
}

LossAndGrad fm_loss_and_grad(const PolicyNetwork& policy,
                             const std::vector<FmBatchItem>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("fm_loss_and_grad: empty batch");
  }
  LossAndGrad out;
  out.grad = Eigen::VectorXd::Zero(policy.num_params());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  PolicyNetwork::Cache cache;
  for (const auto& item : batch) {
    const Latent xt = forward_interpolate(item.x0, item.eps, item.t);
    const Latent v = policy.forward(xt, item.t, item.cond, &cache);
    const Latent residual = (item.eps - item.x0) - v;
    out.loss += residual.squaredNorm() * inv_b;
    // d loss / d v = -2 residual / B
    policy.backward(cache, (-2.0 * inv_b) * residual, out.grad);
  }
  return out;
}

Latent LatentPrior::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t comp = means.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u <= acc) {
      comp = i;
      break;
    }
  }
  Latent z(means[comp].size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = means[comp][i] + stds[comp][i] * rng.normal();
  }
  return z;
}

int ToyDecoder::preset_of(const Latent& cond) {
  int best = 0;
  for (Eigen::Index i = 1; i < cond.size(); ++i) {
    if (cond[i] > cond[best]) best = static_cast<int>(i);
  }
  return best;
}

ToyDecoder ToyDecoder::make_default() {
  ToyDecoder d;
  d.intrinsics_.fx = 14.0;
  d.intrinsics_.fy = 14.0;
  d.intrinsics_.cx = 7.5;
  d.intrinsics_.cy = 7.5;
  d.intrinsics_.width = 16;
  d.intrinsics_.height = 16;

  // Gently curved surface lattice around the origin.
  const int n = 28;
  const double half = 2.4;
  Vec3 sum = Vec3::Zero();
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double x = -half + 2.0 * half * ix / (n - 1);
      const double y = -half + 2.0 * half * iy / (n - 1);
      const double z = 0.25 * std::sin(1.3 * x) * std::cos(1.1 * y);
      d.lattice_.emplace_back(x, y, z);
      sum += d.lattice_.back();
    }
  }
  d.lattice_centroid_ = sum / static_cast<double>(d.lattice_.size());

  // Central block of dynamic points, displaced along +x per frame.
  d.dynamic_mask_.assign(d.lattice_.size(), 0);
  for (int iy = 12; iy < 16; ++iy) {
    for (int ix = 12; ix < 16; ++ix) {
      d.dynamic_mask_[static_cast<std::size_t>(iy) * n + ix] = 1;
    }
  }
  d.dynamic_velocity_ = Vec3(0.6, 0.0, 0.0);
  return d;
}

std::vector<Vec3> ToyDecoder::base_centers(int preset) const {
  std::vector<Vec3> centers(num_frames_);
  for (int i = 0; i < num_frames_; ++i) {
    const double s = static_cast<double>(i) / (num_frames_ - 1);
    switch (preset) {
      case kFastPan:
        centers[i] = Vec3(-2.5 + 5.0 * s, 0.0, -7.0);
        break;
      case kOrbit: {
        const double ang = -0.5 + 1.0 * s;
        centers[i] = Vec3(7.0 * std::sin(ang), 0.0, -7.0 * std::cos(ang));
        break;
      }
      default:  // static indoor / dynamic object: straight approach
        centers[i] = Vec3(0.0, 0.0, -8.0 + 3.0 * s);
        break;
    }
  }
  return centers;
}

namespace {

Mat3 look_at_rotation(const Vec3& center, const Vec3& target) {
  const Vec3 forward = (target - center).normalized();
  const Vec3 up_hint(0.0, 1.0, 0.0);
  Vec3 right = up_hint.cross(forward);
  const double n = right.norm();
  if (n < 1e-9) {
    right = Vec3(1.0, 0.0, 0.0);
  } else {
    right /= n;
  }
  const Vec3 up = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = up;
  r.row(2) = forward;
  return r;
}

}  // namespace

std::vector<GeometryFrame> ToyDecoder::decode(const Latent& z,
                                              const Latent& cond) const {
  if (z.size() != latent_dim_) {
    throw std::invalid_argument("ToyDecoder::decode: latent dim mismatch");
  }
  const int preset = preset_of(cond);
  const bool dynamic_scene = (preset == kDynamicObject);

  std::vector<Vec3> centers = base_centers(preset);
  const Vec3 o1(z[0], z[1], z[2]);
  const Vec3 o2(z[3], z[4], z[5]);
  const Vec3 jitter(z[6], z[7], z[8]);
  for (int i = 0; i < num_frames_; ++i) {
    const double s = static_cast<double>(i) / (num_frames_ - 1);
    // Middle cubic Bernstein basis; zero offsets leave the base path intact.
    const double b1 = 3.0 * s * (1.0 - s) * (1.0 - s);
    const double b2 = 3.0 * s * s * (1.0 - s);
    centers[i] += path_scale_ * (b1 * o1 + b2 * o2);
    centers[i] += ((i % 2 == 0) ? 1.0 : -1.0) * jitter_scale_ * jitter;
  }

  const double knob = z[kKnobCoord];
  std::vector<GeometryFrame> frames(num_frames_);
  const std::size_t npx =
      static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  for (int i = 0; i < num_frames_; ++i) {
    GeometryFrame& f = frames[i];
    f.intrinsics = intrinsics_;
    f.height = height_;
    f.width = width_;
    f.pose.rotation = look_at_rotation(centers[i], lattice_centroid_);
    f.pose.translation = -(f.pose.rotation * centers[i]);

    // Z-buffer render of the (per-frame displaced) lattice. The point map
    // stores the winning lattice point itself, which makes the static scene
    // exactly self-consistent under reprojection for arbitrary poses.
    f.depth.assign(npx, std::numeric_limits<double>::quiet_NaN());
    f.point_map.assign(npx, Vec3::Zero());
    std::vector<Vec3> frame_flow(npx, Vec3::Zero());
    std::vector<double> zbuf(npx, std::numeric_limits<double>::infinity());
    for (std::size_t p = 0; p < lattice_.size(); ++p) {
      Vec3 pw = lattice_[p];
      Vec3 flow_p = Vec3::Zero();
      if (dynamic_scene && dynamic_mask_[p]) {
        pw += static_cast<double>(i) * dynamic_velocity_ / (num_frames_ - 1);
        flow_p = dynamic_velocity_ / (num_frames_ - 1);
      }
      const Projection pr = project(pw, f.pose, intrinsics_);
      if (pr.degenerate || pr.depth <= 1e-6) continue;
      const long px = raster_index(pr.pixel.x());
      const long py = raster_index(pr.pixel.y());
      if (px < 0 || px >= width_ || py < 0 || py >= height_) continue;
      const std::size_t idx = static_cast<std::size_t>(py) * width_ + px;
      if (pr.depth < zbuf[idx]) {
        zbuf[idx] = pr.depth;
        f.depth[idx] = pr.depth;
        f.point_map[idx] = pw;
        frame_flow[idx] = flow_p;
      }
    }
    if (dynamic_scene) {
      f.flow = std::move(frame_flow);
    }

    // Inconsistency knob: alternating per-view bias added to the depth map
    // only, leaving the point maps untouched.
    const double bias = knob_scale_ * knob * ((i % 2 == 0) ? 1.0 : -1.0);
    if (bias != 0.0) {
      for (double& dpx : f.depth) {
        if (std::isfinite(dpx)) dpx += bias;
      }
    }
  }
  return frames;
}

ToyWorld ToyWorld::make_default() {
  ToyWorld w;
  w.decoder = ToyDecoder::make_default();
  w.reward_cfg = RewardConfig{};
  const int dim = w.decoder.latent_dim();

  auto component = [dim](double path_a, double path_b, double jitter,
                         double knob) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    m[0] = path_a;
    m[3] = path_b;
    m[1] = -0.5 * path_a;
    m[4] = 0.5 * path_b;
    for (int j = ToyDecoder::kJitterOffset; j < ToyDecoder::kJitterOffset + 3;
         ++j) {
      m[j] = jitter;
    }
    m[ToyDecoder::kKnobCoord] = knob;
    return m;
  };
  w.prior.means = {component(0.5, -0.3, 0.35, 0.45),
                   component(-0.4, 0.5, 0.25, -0.5),
                   component(0.2, 0.2, 0.45, 0.35)};
  w.prior.stds.assign(3, Eigen::VectorXd::Constant(dim, 0.15));
  w.prior.weights = {0.4, 0.3, 0.3};
  return w;
}

Latent ToyWorld::condition(int idx) const {
  Latent c = Latent::Zero(num_conditions);
  c[idx % num_conditions] = 1.0;
  return c;
}

std::vector<PretrainRecord> pretrain_flow(PolicyNetwork& policy,
                                          const ToyWorld& world,
                                          const PretrainConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x9f));
  const int dim = policy.latent_dim();

  // Adam
  Eigen::VectorXd m = Eigen::VectorXd::Zero(policy.num_params());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(policy.num_params());
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  std::vector<PretrainRecord> log;
  double window_loss = 0.0;
  int window_count = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<FmBatchItem> batch(cfg.batch_size);
    for (auto& item : batch) {
      item.x0 = world.prior.sample(rng);
      item.eps.resize(dim);
      for (int i = 0; i < dim; ++i) item.eps[i] = rng.normal();
      item.t = rng.uniform();
      item.cond = world.condition(
          static_cast<int>(rng.next_u64() % world.num_conditions));
    }
    const LossAndGrad lg = fm_loss_and_grad(policy, batch);
    m = beta1 * m + (1.0 - beta1) * lg.grad;
    v = beta2 * v.array() + (1.0 - beta2) * lg.grad.array().square();
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    Eigen::VectorXd p = policy.params();
    p.array() -= cfg.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + eps);
    policy.set_params(p);

    window_loss += lg.loss;
    ++window_count;
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      log.push_back({step, window_loss / window_count});
      window_loss = 0.0;
      window_count = 0;
    }
  }
  return log;
}

}  // namespace geoflow
