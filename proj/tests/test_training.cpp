#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "hamopt/dynamics.hpp"
#include "hamopt/environments.hpp"
#include "hamopt/error.hpp"
#include "hamopt/evaluation.hpp"
#include "hamopt/random.hpp"
#include "hamopt/training.hpp"
#include "oracles.hpp"

using namespace hamopt;
using hamopt::ad::Tape;
using hamopt::ad::Var;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

// h = (|q|^2 - |p|^2) / 2 and its gradient (q, -p), the reduced LQ Hamiltonian.
HamiltonianExpr lq_hamiltonian(Tape& tape, std::size_t n) {
  return [&tape, n](const Var& x) {
    const Var q = tape.slice(x, 0, n);
    const Var p = tape.slice(x, n, n);
    return HamiltonianTerms{tape.scale(tape.sub(tape.squared_norm(q), tape.squared_norm(p)), 0.5),
                            tape.concat(q, tape.neg(p))};
  };
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 8;
  cfg.iterations = 5;
  return cfg;
}

Phase1Nets zero_nets(const Environment& env) {
  const Architecture a = architecture(env);
  return {Mlp(a.hamiltonian), Mlp(a.costate)};
}

}  // namespace

TEST_CASE("phase-1 loss vanishes at the analytic LQ solution") {
  const auto env = make_lq();
  for (FhatMode mode : {FhatMode::Blackbox, FhatMode::Dhdp}) {
    TrainConfig cfg;
    cfg.fhat = mode;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Vec q0 = env->sample_q0(s);
      Tape tape;
      const Phase1Exprs e = phase1_sample_loss(tape, lq_hamiltonian(tape, 2), tape.constant(q0), *env, q0, cfg);
      CHECK(e.term1.scalar() < 1e-24);
      CHECK(e.term2.scalar() < 1e-24);
      CHECK(e.term3.scalar() < 1e-24);
    }
  }
}

TEST_CASE("phase-1 loss with zero networks") {
  const auto env = make_lq();
  const Phase1Terms t = phase1_loss(zero_nets(*env), *env, {Vec{1.0, 0.0}}, TrainConfig{});
  CHECK(t.term1 == doctest::Approx(1.0));
  CHECK(t.term2 == doctest::Approx(1.0));
  CHECK(t.term3 == doctest::Approx(0.25));
  CHECK(t.loss == doctest::Approx(2.25));

  CHECK(kind_of([&] { phase1_loss(zero_nets(*env), *env, {}, TrainConfig{}); }) == ErrorKind::EmptyBatch);
}

TEST_CASE("phase-1 loss terms are non-negative and scale linearly with their weights") {
  const auto env = make_mountain_car();
  const Phase1Nets nets = init_phase1(*env, 4);
  const auto batch = sample_batch(*env, 4, 1, 8);
  TrainConfig cfg = small_config();
  const Phase1Terms base = phase1_loss(nets, *env, batch, cfg);
  CHECK(base.term1 >= 0.0);
  CHECK(base.term2 >= 0.0);
  CHECK(base.term3 >= 0.0);
  cfg.beta = 2.0;
  const Phase1Terms doubled = phase1_loss(nets, *env, batch, cfg);
  CHECK(doubled.loss - base.loss == doctest::Approx(base.term3).epsilon(1e-10));
}

TEST_CASE("phase-1 gradient matches central differences on a random slice") {
  for (FhatMode mode : {FhatMode::Blackbox, FhatMode::Dhdp}) {
    const auto env = make_cartpole();
    Phase1Nets nets = init_phase1(*env, 8);
    const auto batch = sample_batch(*env, 8, 1, 4);
    TrainConfig cfg = small_config();
    cfg.fhat = mode;
    const Phase1Evaluation ev = phase1_loss_and_gradient(nets, *env, batch, cfg);
    CHECK(ev.terms.loss == doctest::Approx(phase1_loss(nets, *env, batch, cfg).loss).epsilon(1e-12));
    const Vec theta = flatten(nets);
    REQUIRE(ev.gradient.size() == theta.size());
    Rng rng(9);
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(theta.size()));
      const double step = 1e-5;
      Vec probe = theta;
      probe[i] += step;
      unflatten(nets, probe);
      const double up = phase1_loss(nets, *env, batch, cfg).loss;
      probe[i] -= 2.0 * step;
      unflatten(nets, probe);
      const double down = phase1_loss(nets, *env, batch, cfg).loss;
      unflatten(nets, theta);
      const double fd = (up - down) / (2.0 * step);
      CHECK(std::abs(ev.gradient[i] - fd) / std::max(1e-3, std::abs(fd)) < 1e-4);
    }
  }
}

TEST_CASE("a small step along the negative gradient does not increase the phase-1 loss") {
  const auto env = make_lq();
  Phase1Nets nets = init_phase1(*env, 13);
  const auto batch = sample_batch(*env, 13, 1, 8);
  const TrainConfig cfg = small_config();
  const Phase1Evaluation ev = phase1_loss_and_gradient(nets, *env, batch, cfg);
  Vec theta = flatten(nets);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= 1e-4 * ev.gradient[i];
  unflatten(nets, theta);
  CHECK(phase1_loss(nets, *env, batch, cfg).loss <= ev.terms.loss);
}

TEST_CASE("train_phase1: null update, metrics and determinism") {
  const auto env = make_lq();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  const Phase1Run frozen = train_phase1(*env, cfg);
  const Phase1Nets init = init_phase1(*env, cfg.seed);
  CHECK(phase1_nets(frozen.checkpoint).hamiltonian.parameters() == init.hamiltonian.parameters());
  CHECK(phase1_nets(frozen.checkpoint).costate.parameters() == init.costate.parameters());
  CHECK(frozen.metrics.size() == cfg.iterations);
  CHECK(frozen.metrics.front().step == 1);

  cfg.learning_rate = 1e-3;
  cfg.policy = ExecutionPolicy::Serial;
  const Phase1Run a = train_phase1(*env, cfg);
  cfg.policy = ExecutionPolicy::Parallel;
  const Phase1Run b = train_phase1(*env, cfg);
  CHECK(checkpoint_to_json(a.checkpoint) == checkpoint_to_json(b.checkpoint));
  CHECK(metrics_rows(a.metrics) == metrics_rows(b.metrics));
}

TEST_CASE("train_phase1 reports divergence with the step index") {
  const auto env = make_lq();
  TrainConfig cfg = small_config();
  Phase1Nets init = init_phase1(*env, cfg.seed);
  std::vector<double> params = init.costate.parameters();
  params.back() = 1e200;
  init.costate.set_parameters(params);
  try {
    train_phase1(*env, cfg, init);
    FAIL("expected TrainingDiverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrainingDiverged);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("LQ phase-1 training drives the loss below 5% of its initial value" * doctest::timeout(600)) {
  const auto env = make_lq();
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.iterations = 5000;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  const Phase1Run run = train_phase1(*env, cfg);
  const auto held_out = sample_batch(*env, 99, 1, 64);
  const double before = phase1_loss(init_phase1(*env, cfg.seed), *env, held_out, cfg).loss;
  const double after = phase1_loss(phase1_nets(run.checkpoint), *env, held_out, cfg).loss;
  CHECK(after < 0.05 * before);
}

TEST_CASE("kl_gaussian") {
  CHECK(kl_gaussian({{0.0}, {0.0}}) == 0.0);
  CHECK(kl_gaussian({{1.0}, {0.0}}) == doctest::Approx(0.5));
  CHECK(kl_gaussian({{0.0}, {std::log(2.0)}}) == doctest::Approx(0.5 * (1.0 - std::log(2.0))));
  CHECK(kl_gaussian({{0.0}, {std::log(2.0)}}) == doctest::Approx(0.15343).epsilon(1e-4));
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const GaussianLatent z{{rng.uniform(-2, 2), rng.uniform(-2, 2)}, {rng.uniform(-3, 3), rng.uniform(-3, 3)}};
    CHECK(kl_gaussian(z) > 0.0);
  }
  CHECK(kind_of([] { kl_gaussian({{std::nan("")}, {0.0}}); }) == ErrorKind::NonFiniteValue);

  Tape tape;
  const Var mu = tape.variable(std::vector<double>{0.3, -0.2});
  const Var lv = tape.variable(std::vector<double>{0.1, 0.5});
  CHECK(kl_gaussian_expr(tape, mu, lv).scalar() == doctest::Approx(kl_gaussian({{0.3, -0.2}, {0.1, 0.5}})));
}

TEST_CASE("phase-2 loss: perfect reconstruction and term isolation") {
  const std::size_t n = 2;
  const Vec x{0.4, -0.3, 0.4, -0.3};
  // y is x carried by the same Hamiltonian the decoder flow inverts.
  const FunctionHamiltonian h(n, [](Tape& t, Var v) {
    return t.scale(t.sub(t.squared_norm(t.slice(v, 0, 2)), t.squared_norm(t.slice(v, 2, 2))), 0.5);
  });
  VaeConfig cfg;
  cfg.steps = 50;
  const Vec y = rollout(h, PhasePoint::split(x), cfg.horizon, cfg.steps).back().joined();

  auto model_with = [&](Tape& tape, Vec mean) {
    Phase2Model model;
    model.encode = [&tape, mean](const Var&) {
      return BoundGaussianEncoder::Latent{tape.constant(mean), tape.constant(Vec(mean.size(), 0.0))};
    };
    model.decode = [&tape, &y](const Var&) { return tape.constant(y); };
    model.hamiltonian = lq_hamiltonian(tape, n);
    return model;
  };

  {
    Tape tape;
    const Phase2Exprs e = phase2_sample_loss(tape, model_with(tape, {0.0, 0.0}), x, y, Vec{0.7, -1.2}, cfg);
    CHECK(e.loss.scalar() < 1e-12);
    CHECK(e.kl.scalar() == 0.0);
  }
  {
    VaeConfig isolated = cfg;
    isolated.recon_weight = 0.0;
    isolated.kl_weight = 0.3;
    Tape tape;
    const Phase2Exprs e = phase2_sample_loss(tape, model_with(tape, {1.0, 0.0}), x, y, Vec{0.1, 0.2}, isolated);
    CHECK(e.loss.scalar() == doctest::Approx(0.3 * 0.5));
  }
  {
    Tape tape;
    CHECK(kind_of([&] { phase2_sample_loss(tape, model_with(tape, {0.0, 0.0}), x, y, Vec{0.1, 0.2, 0.3}, cfg); }) ==
          ErrorKind::ShapeError);
  }
}

TEST_CASE("phase-2 needs phase 1") {
  const auto env = make_lq();
  const Phase1Nets p1 = init_phase1(*env, 1);
  const Phase2Nets p2 = init_phase2(*env, p1, 0, 1);
  CHECK(kind_of([&] { phase2_loss(nullptr, p2, *env, sample_batch(*env, 1, 1, 4), VaeConfig{}, 0); }) ==
        ErrorKind::MissingPhase1);
  Checkpoint empty;
  empty.env = "lq";
  CHECK(kind_of([&] { train_phase2(*env, empty, VaeConfig{}); }) == ErrorKind::MissingPhase1);
  TrainConfig cfg = small_config();
  const Checkpoint cp = train_phase1(*make_cartpole(), cfg).checkpoint;
  CHECK(kind_of([&] { train_phase2(*env, cp, VaeConfig{}); }) == ErrorKind::EnvMismatch);
}

TEST_CASE("phase-2 gradient matches central differences on a random slice") {
  const auto env = make_mountain_car();
  const Phase1Nets p1 = init_phase1(*env, 2);
  Phase2Nets p2 = init_phase2(*env, p1, 0, 3);
  const auto batch = sample_batch(*env, 2, 1, 4);
  VaeConfig cfg;
  cfg.steps = 10;
  const Phase2Evaluation ev = phase2_loss_and_gradient(&p1, p2, *env, batch, cfg, 77);
  const Vec theta = flatten(p2);
  REQUIRE(ev.gradient.size() == theta.size());
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(theta.size()));
    const double step = 1e-5;
    Vec probe = theta;
    probe[i] += step;
    unflatten(p2, probe);
    const double up = phase2_loss(&p1, p2, *env, batch, cfg, 77).loss;
    probe[i] -= 2.0 * step;
    unflatten(p2, probe);
    const double down = phase2_loss(&p1, p2, *env, batch, cfg, 77).loss;
    unflatten(p2, theta);
    const double fd = (up - down) / (2.0 * step);
    CHECK(std::abs(ev.gradient[i] - fd) / std::max(1e-3, std::abs(fd)) < 1e-4);
  }
}

TEST_CASE("train_phase2: KL stays non-negative, runs are reproducible, rollouts stay finite") {
  const auto env = make_lq();
  TrainConfig cfg1 = small_config();
  const Checkpoint phase1 = train_phase1(*env, cfg1).checkpoint;
  VaeConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 8;
  cfg.iterations = 20;
  bool kl_ok = true;
  const Phase2Run a = train_phase2(*env, phase1, cfg, [&](const Phase2Metrics& m) { kl_ok = kl_ok && m.terms.kl >= 0.0; });
  CHECK(kl_ok);
  CHECK(a.checkpoint.phase == 2);
  const Phase2Run b = train_phase2(*env, phase1, cfg);
  CHECK(checkpoint_to_json(a.checkpoint) == checkpoint_to_json(b.checkpoint));

  const Planner planner = Planner::from_checkpoint(a.checkpoint, *env);
  CHECK(planner.hamiltonian.parameters() == a.checkpoint.network(kNetHamiltonianPhase2).parameters());
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (const auto& pt : plan(planner, env->sample_q0(s), 1.0, 20).points) {
      for (double v : pt.joined()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("Adam") {
  Adam adam(2, 0.1);
  Vec params{1.0, -1.0};
  adam.step(params, Vec{4.0, -0.001});
  // The first bias-corrected step moves each coordinate by about lr.
  CHECK(params[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(-0.9).epsilon(1e-4));
  CHECK(kind_of([&] { adam.step(params, Vec{1.0}); }) == ErrorKind::ShapeError);
}

TEST_CASE("configuration echo and overrides") {
  TrainConfig train;
  VaeConfig vae;
  ConfigMap map{{"train.alpha1", 0.5},
                {"beta", 2.0},
                {"steps", std::int64_t{30}},
                {"fhat", std::string("dhdp")},
                {"vae.kl_weight", 0.01},
                {"latent_dim", std::int64_t{3}}};
  apply_config(map, train, vae);
  CHECK(train.alpha1 == 0.5);
  CHECK(train.beta == 2.0);
  CHECK(train.steps == 30);
  CHECK(vae.steps == 30);
  CHECK(train.fhat == FhatMode::Dhdp);
  CHECK(vae.kl_weight == 0.01);
  CHECK(vae.latent_dim == 3);

  // echo -> apply reproduces the config.
  TrainConfig t2;
  VaeConfig v2;
  ConfigMap round;
  for (const auto& [k, v] : echo(train)) round["train." + k] = v;
  for (const auto& [k, v] : echo(vae)) round["vae." + k] = v;
  apply_config(round, t2, v2);
  CHECK(echo(t2) == echo(train));
  CHECK(echo(v2) == echo(vae));

  CHECK(kind_of([&] { apply_config({{"nosuch", 1.0}}, train, vae); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { apply_config({{"steps", std::string("x")}}, train, vae); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_fhat("sideways"); }) == ErrorKind::InvalidConfig);
  TrainConfig bad;
  bad.steps = 0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidSteps);
  bad.steps = 1;
  bad.alpha1 = -1.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("metrics headers") {
  CHECK(phase1_metrics_header() == std::vector<std::string>{"step", "loss", "term1", "term2", "term3"});
  CHECK(phase2_metrics_header() == std::vector<std::string>{"step", "loss", "kl", "x_recon", "y_recon"});
  const std::vector<Phase1Metrics> m{{1, {2.0, 3.0, 4.0, 5.0}}};
  CHECK(metrics_rows(m) == std::vector<std::vector<double>>{{1.0, 2.0, 3.0, 4.0, 5.0}});
}
