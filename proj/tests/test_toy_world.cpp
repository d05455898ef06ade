#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "geoflow/rewards.hpp"
#include "geoflow/toy_world.hpp"

using namespace geoflow;

TEST_CASE("policy network basics") {
  PolicyNetwork policy(3, 2, 8, 42);
  const Latent x = Latent::Constant(3, 0.4);
  const Latent cond = Latent::Constant(2, 1.0);

  PolicyNetwork zero(3, 2, 8, 42);
  zero.set_params(Eigen::VectorXd::Zero(zero.num_params()));
  CHECK(zero.forward(x, 0.5, cond).cwiseAbs().maxCoeff() == 0.0);

  // params round-trip
  const Eigen::VectorXd p = policy.params();
  PolicyNetwork copy(3, 2, 8, 1);
  copy.set_params(p);
  CHECK((copy.forward(x, 0.5, cond) - policy.forward(x, 0.5, cond))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((copy.params() - p).cwiseAbs().maxCoeff() == 0.0);

  // output stays finite far from the origin
  const Latent big = Latent::Constant(3, 1e3);
  CHECK(policy.forward(big, 0.9, cond).allFinite());

  CHECK_THROWS_AS(policy.set_params(Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("policy gradient of squared output wrt final bias is 2v") {
  PolicyNetwork policy(3, 1, 6, 9);
  const Latent x = Latent::Constant(3, -0.2);
  const Latent cond = Latent::Constant(1, 1.0);
  PolicyNetwork::Cache cache;
  const Latent v = policy.forward(x, 0.3, cond, &cache);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
  policy.backward(cache, 2.0 * v, grad);  // d||v||^2/dv = 2v
  // final bias occupies the last latent_dim slots
  const Eigen::VectorXd b3_grad = grad.tail(3);
  CHECK((b3_grad - 2.0 * v).cwiseAbs().maxCoeff() <= 1e-14);

  // zero adjoint -> zero gradient
  grad.setZero();
  policy.backward(cache, Eigen::VectorXd::Zero(3), grad);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);

  PolicyNetwork::Cache empty;
  CHECK_THROWS_AS(policy.backward(empty, v, grad), std::logic_error);
}

TEST_CASE("policy backward matches finite differences") {
  PolicyNetwork policy(2, 2, 5, 33);
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Latent x(2), adjoint(2), cond(2);
    for (int i = 0; i < 2; ++i) {
      x[i] = rng.normal();
      adjoint[i] = rng.normal();
      cond[i] = rng.normal();
    }
    const double t = rng.uniform();

    PolicyNetwork::Cache cache;
    policy.forward(x, t, cond, &cache);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
    policy.backward(cache, adjoint, grad);

    const Eigen::VectorXd p = policy.params();
    const double h = 1e-5;
    for (int check = 0; check < 20; ++check) {
      const int i = static_cast<int>(rng.next_u64() %
                                     static_cast<std::uint64_t>(p.size()));
      Eigen::VectorXd pp = p;
      pp[i] += h;
      policy.set_params(pp);
      const double up = adjoint.dot(policy.forward(x, t, cond));
      pp[i] = p[i] - h;
      policy.set_params(pp);
      const double down = adjoint.dot(policy.forward(x, t, cond));
      policy.set_params(p);
      const double fd = (up - down) / (2.0 * h);
      CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("decoder determinism and dimension checks") {
  const ToyDecoder dec = ToyDecoder::make_default();
  const ToyWorld world = ToyWorld::make_default();
  const Latent cond = world.condition(0);
  Latent z = Latent::Zero(dec.latent_dim());
  z[0] = 0.3;
  z[7] = -0.2;

  const auto a = dec.decode(z, cond);
  const auto b = dec.decode(z, cond);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t p = 0; p < a[i].depth.size(); ++p) {
      if (std::isfinite(a[i].depth[p]) || std::isfinite(b[i].depth[p])) {
        CHECK(a[i].depth[p] == b[i].depth[p]);
      }
    }
    CHECK((a[i].pose.rotation - b[i].pose.rotation).cwiseAbs().maxCoeff() ==
          0.0);
  }

  CHECK_THROWS_AS(dec.decode(Latent::Zero(3), cond), std::invalid_argument);
}

TEST_CASE("zero latent decodes to a smooth self-consistent scene") {
  const ToyWorld world = ToyWorld::make_default();
  const Latent z = Latent::Zero(world.decoder.latent_dim());
  for (int preset = 0; preset < 4; ++preset) {
    const auto frames = world.decoder.decode(z, world.condition(preset));
    const RewardBundle bundle = reward_bundle(frames, world.reward_cfg);
    INFO("preset ", preset);
    // the pan and orbit paths are curved, so a small acceleration term remains
    CHECK(bundle.r_motion >= (preset >= 2 ? 0.95 : 0.999));
    if (preset == ToyDecoder::kDynamicObject) {
      // moving-object pixels leave a small reprojection residue
      CHECK(bundle.r_geo >= -0.01);
    } else {
      CHECK(bundle.r_geo >= -1e-9);
    }
    CHECK(bundle.r_geo <= 0.0);
  }
}

TEST_CASE("jitter coordinates degrade motion, knob degrades geometry") {
  const ToyWorld world = ToyWorld::make_default();
  const Latent cond = world.condition(0);
  const int dim = world.decoder.latent_dim();

  const RewardBundle clean =
      reward_bundle(world.decoder.decode(Latent::Zero(dim), cond),
                    world.reward_cfg);

  Latent jittered = Latent::Zero(dim);
  jittered[ToyDecoder::kJitterOffset] = 1.0;
  jittered[ToyDecoder::kJitterOffset + 1] = -0.8;
  const RewardBundle jb =
      reward_bundle(world.decoder.decode(jittered, cond), world.reward_cfg);
  CHECK(jb.e_trans > clean.e_trans + 0.01);
  CHECK(jb.r_motion < clean.r_motion - 0.01);

  Latent knobbed = Latent::Zero(dim);
  knobbed[ToyDecoder::kKnobCoord] = 1.0;
  const RewardBundle kb =
      reward_bundle(world.decoder.decode(knobbed, cond), world.reward_cfg);
  CHECK(kb.r_geo < clean.r_geo - 0.01);
  // the knob only biases depth maps, not poses
  CHECK(kb.r_motion == doctest::Approx(clean.r_motion).epsilon(1e-9));

  // inert coordinates change nothing
  Latent inert = Latent::Zero(dim);
  inert[12] = 2.0;
  inert[15] = -3.0;
  const RewardBundle ib =
      reward_bundle(world.decoder.decode(inert, cond), world.reward_cfg);
  CHECK(ib.r_motion == clean.r_motion);
  CHECK(ib.r_geo == clean.r_geo);
}

TEST_CASE("dynamic preset produces flow on moving points only") {
  const ToyWorld world = ToyWorld::make_default();
  const Latent z = Latent::Zero(world.decoder.latent_dim());
  const auto frames =
      world.decoder.decode(z, world.condition(ToyDecoder::kDynamicObject));
  bool any_flow = false;
  for (const auto& f : frames) {
    REQUIRE(f.flow.has_value());
    for (const auto& fl : *f.flow) {
      if (fl.norm() > 0) any_flow = true;
    }
  }
  CHECK(any_flow);
  // geometry reward still well-defined (dynamic points filtered)
  const RewardBundle bundle = reward_bundle(frames, world.reward_cfg);
  CHECK(std::isfinite(bundle.r_geo));

  const auto static_frames = world.decoder.decode(z, world.condition(0));
  for (const auto& f : static_frames) CHECK(!f.flow.has_value());
}

TEST_CASE("latent prior sampling is deterministic and mixes components") {
  const ToyWorld world = ToyWorld::make_default();
  Rng rng_a(10), rng_b(10);
  for (int i = 0; i < 20; ++i) {
    const Latent a = world.prior.sample(rng_a);
    const Latent b = world.prior.sample(rng_b);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.size() == world.decoder.latent_dim());
  }
}

TEST_CASE("pretraining reduces the flow-matching loss") {
  const ToyWorld world = ToyWorld::make_default();
  PolicyNetwork policy(world.decoder.latent_dim(), world.num_conditions, 32,
                       mix_seed(3, 1));
  PretrainConfig cfg;
  cfg.steps = 600;
  cfg.log_every = 50;
  cfg.seed = 3;
  const auto log = pretrain_flow(policy, world, cfg);
  REQUIRE(log.size() >= 2);
  CHECK(log.back().loss < 0.5 * log.front().loss);
}

TEST_CASE("oracle velocity gives zero flow-matching loss") {
  // a policy cannot represent the oracle exactly, so check the loss formula
  // directly with a hand-made batch whose target velocity is zero
  PolicyNetwork policy(2, 1, 4, 8);
  policy.set_params(Eigen::VectorXd::Zero(policy.num_params()));
  std::vector<FmBatchItem> batch(3);
  for (auto& item : batch) {
    item.x0 = Latent::Constant(2, 0.7);
    item.eps = item.x0;  // eps - x0 = 0 = policy output
    item.t = 0.4;
    item.cond = Latent::Constant(1, 1.0);
  }
  const LossAndGrad lg = fm_loss_and_grad(policy, batch);
  CHECK(lg.loss == 0.0);
  CHECK(lg.grad.cwiseAbs().maxCoeff() == 0.0);
}
