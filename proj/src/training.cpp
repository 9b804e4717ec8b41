#include "hamopt/training.hpp"

#include <cmath>
#include <string>

#include "hamopt/error.hpp"
#include "hamopt/random.hpp"

namespace hamopt {

std::string_view to_string(FhatMode mode) { return mode == FhatMode::Blackbox ? "blackbox" : "dhdp"; }

FhatMode parse_fhat(std::string_view text) {
  if (text == "blackbox") return FhatMode::Blackbox;
  if (text == "dhdp") return FhatMode::Dhdp;
  throw Error(ErrorKind::InvalidConfig, "fhat must be blackbox or dhdp, got '" + std::string(text) + "'");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, what);
}

void validate_loop(double horizon, std::size_t steps, std::size_t batch, double lr) {
  require(horizon > 0.0 && std::isfinite(horizon), "horizon must be positive");
  if (steps == 0) throw Error(ErrorKind::InvalidSteps, "steps must be at least 1");
  require(batch >= 1, "batch_size must be at least 1");
  require(lr >= 0.0 && std::isfinite(lr), "learning_rate must be non-negative");
}

}  // namespace

void TrainConfig::validate() const {
  require(alpha1 >= 0.0 && alpha2 >= 0.0 && beta >= 0.0, "loss weights must be non-negative");
  validate_loop(horizon, steps, batch_size, learning_rate);
}

void VaeConfig::validate() const {
  require(kl_weight >= 0.0 && recon_weight >= 0.0, "loss weights must be non-negative");
  validate_loop(horizon, steps, batch_size, learning_rate);
}

// ---------------------------------------------------------------------------

Architecture architecture(const Environment& env, std::size_t latent_dim) {
  const std::size_t n = env.state_dim();
  Architecture a;
  switch (env.kind()) {
    case EnvKind::CartPole:
      a.hamiltonian = {2 * n, 16, 32, 64, 8, 1};
      a.costate = {n, 16, 32, 32, n};
      a.latent_dim = 4;
      break;
    case EnvKind::MountainCar:
    case EnvKind::Lq:
      a.hamiltonian = {2 * n, 8, 16, 32, 1};
      a.costate = {n, 8, 16, 32, n};
      a.latent_dim = 2;
      break;
    case EnvKind::Shape:
      a.hamiltonian = {2 * n, 64, 8, 1};
      a.costate = {n, 32, 64, n};
      a.latent_dim = 4;
      break;
  }
  if (latent_dim != 0) a.latent_dim = latent_dim;
  const std::size_t z = a.latent_dim;
  switch (env.kind()) {
    case EnvKind::CartPole:
      a.encoder_trunk = {2 * n, 64};
      a.encoder_mean = {64, 16, z};
      a.decoder = {z, 16, 64, 2 * n};
      break;
    case EnvKind::MountainCar:
    case EnvKind::Lq:
      a.encoder_trunk = {2 * n, 32};
      a.encoder_mean = {32, 8, z};
      a.decoder = {z, 8, 32, 2 * n};
      break;
    case EnvKind::Shape:
      a.encoder_trunk = {2 * n, 64};
      a.encoder_mean = {64, 16, 8, z};
      a.decoder = {z, 8, 16, 64, 2 * n};
      break;
  }
  a.encoder_logvar = a.encoder_mean;
  return a;
}

Phase1Nets init_phase1(const Environment& env, std::uint64_t seed) {
  const Architecture a = architecture(env);
  return {init_mlp(a.hamiltonian, derive_seed(seed, 0, 1)), init_mlp(a.costate, derive_seed(seed, 0, 2))};
}

Phase2Nets init_phase2(const Environment& env, const Phase1Nets& phase1, std::size_t latent_dim, std::uint64_t seed) {
  const Architecture a = architecture(env, latent_dim);
  Phase2Nets nets;
  nets.hamiltonian = phase1.hamiltonian;
  nets.encoder.trunk = init_mlp(a.encoder_trunk, derive_seed(seed, 0, 3));
  nets.encoder.mean_head = init_mlp(a.encoder_mean, derive_seed(seed, 0, 4));
  nets.encoder.logvar_head = init_mlp(a.encoder_logvar, derive_seed(seed, 0, 5));
  nets.decoder = init_mlp(a.decoder, derive_seed(seed, 0, 6));
  return nets;
}

Phase1Nets phase1_nets(const Checkpoint& ckpt) {
  if (!ckpt.has_network(kNetHamiltonian) || !ckpt.has_network(kNetCostate)) {
    throw Error(ErrorKind::MissingPhase1, "checkpoint does not contain the phase-1 networks");
  }
  return {ckpt.network(kNetHamiltonian), ckpt.network(kNetCostate)};
}

Phase2Nets phase2_nets(const Checkpoint& ckpt) {
  Phase2Nets nets;
  nets.hamiltonian = ckpt.network(kNetHamiltonianPhase2);
  nets.encoder.trunk = ckpt.network(kNetEncoderTrunk);
  nets.encoder.mean_head = ckpt.network(kNetEncoderMean);
  nets.encoder.logvar_head = ckpt.network(kNetEncoderLogvar);
  nets.decoder = ckpt.network(kNetDecoder);
  return nets;
}

std::vector<Vec> sample_batch(const Environment& env, std::uint64_t seed, std::size_t step, std::size_t count) {
  std::vector<Vec> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) batch.push_back(env.sample_q0(derive_seed(seed, step, i)));
  return batch;
}

// ---------------------------------------------------------------------------
// Phase 1

Phase1Exprs phase1_sample_loss(ad::Tape& tape, const HamiltonianExpr& h, const ad::Var& p0, const Environment& env,
                               std::span<const double> q0, const TrainConfig& cfg) {
  const std::size_t n = env.state_dim();
  const std::size_t m = env.control_dim();
  if (q0.size() != n || p0.size() != n) throw Error(ErrorKind::ShapeError, "q0 / p0 dimension mismatch");

  const ad::Var q0c = tape.constant(q0);
  const VarList q0_parts = tape.split(q0c);

  const ad::Var term1 = tape.squared_norm(tape.sub(p0, env.terminal_grad(tape, q0c)));

  const ad::Var x0 = tape.concat(q0c, p0);
  const ad::Var xT = rollout_expr(h, x0, cfg.horizon, cfg.steps, Direction::Forward);
  const ad::Var qT = tape.slice(xT, 0, n);
  const ad::Var pT = tape.slice(xT, n, n);
  ad::Var term2;
  try {
    term2 = tape.squared_norm(tape.sub(pT, env.terminal_grad(tape, qT)));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyShape && e.kind() != ErrorKind::FullShape) throw;
    term2 = tape.constant(0.0);
  }

  const HamiltonianTerms h0 = h(x0);
  const ad::Var fu = tape.matrix_constant(n, m, control_jacobian(env, q0));
  const ad::Var u0 = tape.neg(tape.matvec_t(fu, p0));
  const ad::Var fhat = cfg.fhat == FhatMode::Blackbox ? tape.stack(env.flow(tape, q0_parts, tape.split(u0)))
                                                      : tape.slice(h0.gradient, n, n);
  ad::Var target = tape.add(tape.dot(p0, fhat), env.running_cost(tape, q0_parts));
  target = tape.axpy(target, 0.5, tape.squared_norm(u0));
  const ad::Var term3 = tape.square(tape.sub(h0.value, target));

  ad::Var loss = tape.scale(term1, cfg.alpha1);
  loss = tape.axpy(loss, cfg.alpha2, term2);
  loss = tape.axpy(loss, cfg.beta, term3);
  return {loss, term1, term2, term3};
}

std::vector<double> flatten(const Phase1Nets& nets) {
  auto flat = nets.hamiltonian.parameters();
  const auto p = nets.costate.parameters();
  flat.insert(flat.end(), p.begin(), p.end());
  return flat;
}

void unflatten(Phase1Nets& nets, std::span<const double> flat) {
  const std::size_t nh = nets.hamiltonian.parameter_count();
  if (flat.size() != nh + nets.costate.parameter_count()) throw Error(ErrorKind::DimsMismatch, "phase-1 parameters");
  nets.hamiltonian.set_parameters(flat.subspan(0, nh));
  nets.costate.set_parameters(flat.subspan(nh));
}

Phase1Evaluation phase1_loss_and_gradient(const Phase1Nets& nets, const Environment& env,
                                          const std::vector<Vec>& q0_batch, const TrainConfig& cfg) {
  if (q0_batch.empty()) throw Error(ErrorKind::EmptyBatch, "phase-1 batch is empty");
  const std::size_t nh = nets.hamiltonian.parameter_count();
  const std::size_t total = nh + nets.costate.parameter_count();

  auto kernel = [&](std::size_t i, std::span<double> terms, std::span<double> grad) {
    ad::Tape tape;
    const BoundMlp h(tape, nets.hamiltonian, true);
    const BoundMlp p(tape, nets.costate, true);
    const ad::Var p0 = p.forward(tape.constant(q0_batch[i]));
    const Phase1Exprs e = phase1_sample_loss(tape, mlp_expr(h), p0, env, q0_batch[i], cfg);
    terms[0] = e.loss.scalar();
    terms[1] = e.term1.scalar();
    terms[2] = e.term2.scalar();
    terms[3] = e.term3.scalar();
    const ad::Gradients g = tape.backward(e.loss);
    h.gather_gradient(g, grad.subspan(0, nh));
    p.gather_gradient(g, grad.subspan(nh));
  };
  BatchSums sums = reduce_batch(q0_batch.size(), 4, total, kernel, cfg.policy);
  const double inv = 1.0 / static_cast<double>(q0_batch.size());
  Phase1Evaluation out;
  out.terms = {sums.terms[0] * inv, sums.terms[1] * inv, sums.terms[2] * inv, sums.terms[3] * inv};
  for (double& g : sums.gradient) g *= inv;
  out.gradient = std::move(sums.gradient);
  return out;
}

Phase1Terms phase1_loss(const Phase1Nets& nets, const Environment& env, const std::vector<Vec>& q0_batch,
                        const TrainConfig& cfg) {
  return phase1_loss_and_gradient(nets, env, q0_batch, cfg).terms;
}

Checkpoint make_phase1_checkpoint(const Environment& env, const TrainConfig& cfg, const Phase1Nets& nets) {
  Checkpoint ckpt;
  ckpt.env = std::string(env.name());
  ckpt.phase = 1;
  ckpt.seed = cfg.seed;
  ckpt.config = echo(cfg);
  ckpt.set_network(std::string(kNetHamiltonian), nets.hamiltonian);
  ckpt.set_network(std::string(kNetCostate), nets.costate);
  return ckpt;
}

namespace {

[[noreturn]] void diverged(std::size_t step, const std::string& why) {
  throw Error(ErrorKind::TrainingDiverged, "at step " + std::to_string(step) + ": " + why);
}

template <class Evaluate>
auto guarded(std::size_t step, Evaluate&& evaluate) {
  try {
    return evaluate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFiniteValue) diverged(step, e.what());
    throw;
  }
}

}  // namespace

Phase1Run train_phase1(const Environment& env, const TrainConfig& cfg, const Phase1Observer& observer) {
  return train_phase1(env, cfg, init_phase1(env, cfg.seed), observer);
}

Phase1Run train_phase1(const Environment& env, const TrainConfig& cfg, Phase1Nets nets,
                       const Phase1Observer& observer) {
  cfg.validate();
  std::vector<double> params = flatten(nets);
  Adam adam(params.size(), cfg.learning_rate);
  Phase1Run run;
  run.metrics.reserve(cfg.iterations);
  for (std::size_t step = 1; step <= cfg.iterations; ++step) {
    const auto batch = sample_batch(env, cfg.seed, step, cfg.batch_size);
    const Phase1Evaluation eval = guarded(step, [&] { return phase1_loss_and_gradient(nets, env, batch, cfg); });
    if (!std::isfinite(eval.terms.loss)) diverged(step, "loss is not finite");
    run.metrics.push_back({step, eval.terms});
    if (observer) observer(run.metrics.back());
    adam.step(params, eval.gradient);
    unflatten(nets, params);
  }
  run.checkpoint = make_phase1_checkpoint(env, cfg, nets);
  return run;
}

// ---------------------------------------------------------------------------
// Phase 2

double kl_gaussian(const GaussianLatent& latent) {
  if (latent.mean.size() != latent.logvar.size()) throw Error(ErrorKind::ShapeError, "mean / logvar sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < latent.mean.size(); ++i) {
    const double mu = latent.mean[i];
    const double lv = latent.logvar[i];
    if (!std::isfinite(mu) || !std::isfinite(lv)) throw Error(ErrorKind::NonFiniteValue, "latent is not finite");
    kl += mu * mu + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * kl;
}

ad::Var kl_gaussian_expr(ad::Tape& tape, const ad::Var& mean, const ad::Var& logvar) {
  if (mean.size() != logvar.size()) throw Error(ErrorKind::ShapeError, "mean / logvar sizes differ");
  ad::Var per = tape.sub(tape.add(tape.square(mean), tape.exp(logvar)), logvar);
  per = tape.add_const(per, -1.0);
  return tape.scale(tape.sum(per), 0.5);
}

Phase2Exprs phase2_sample_loss(ad::Tape& tape, const Phase2Model& model, std::span<const double> x,
                               std::span<const double> y, std::span<const double> eps, const VaeConfig& cfg) {
  const ad::Var xc = tape.constant(x);
  const ad::Var yc = tape.constant(y);
  const auto latent = model.encode(yc);
  if (eps.size() != latent.mean.size() || latent.logvar.size() != latent.mean.size()) {
    throw Error(ErrorKind::ShapeError, "latent size " + std::to_string(latent.mean.size()) +
                                           " does not match noise size " + std::to_string(eps.size()));
  }
  const ad::Var z =
      tape.add(latent.mean, tape.mul(tape.exp(tape.scale(latent.logvar, 0.5)), tape.constant(eps)));
  const ad::Var y_hat = model.decode(z);
  if (y_hat.size() != y.size()) throw Error(ErrorKind::ShapeError, "decoder output does not match y");
  const ad::Var x_hat = rollout_expr(model.hamiltonian, y_hat, cfg.horizon, cfg.steps, Direction::Backward);

  const ad::Var kl = kl_gaussian_expr(tape, latent.mean, latent.logvar);
  const ad::Var x_recon = tape.squared_norm(tape.sub(xc, x_hat));
  const ad::Var y_recon = tape.squared_norm(tape.sub(yc, y_hat));
  ad::Var loss = tape.scale(kl, cfg.kl_weight);
  loss = tape.axpy(loss, cfg.recon_weight, x_recon);
  loss = tape.add(loss, y_recon);
  return {loss, kl, x_recon, y_recon};
}

EncodedPair encode_pair(const Phase1Nets& frozen, std::span<const double> q0, double horizon, std::size_t steps) {
  PhasePoint start{Vec(q0.begin(), q0.end()), frozen.costate.forward(q0)};
  const MlpHamiltonian h(frozen.hamiltonian);
  const Trajectory traj = rollout(h, start, horizon, steps, Direction::Forward);
  return {start.joined(), traj.back().joined()};
}

std::vector<double> flatten(const Phase2Nets& nets) {
  std::vector<double> flat;
  for (const Mlp* net : {&nets.hamiltonian, &nets.encoder.trunk, &nets.encoder.mean_head, &nets.encoder.logvar_head,
                         &nets.decoder}) {
    const auto p = net->parameters();
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return flat;
}

void unflatten(Phase2Nets& nets, std::span<const double> flat) {
  std::size_t pos = 0;
  for (Mlp* net : {&nets.hamiltonian, &nets.encoder.trunk, &nets.encoder.mean_head, &nets.encoder.logvar_head,
                   &nets.decoder}) {
    const std::size_t count = net->parameter_count();
    if (pos + count > flat.size()) throw Error(ErrorKind::DimsMismatch, "phase-2 parameters");
    net->set_parameters(flat.subspan(pos, count));
    pos += count;
  }
  if (pos != flat.size()) throw Error(ErrorKind::DimsMismatch, "phase-2 parameters");
}

Phase2Evaluation phase2_loss_and_gradient(const Phase1Nets* frozen, const Phase2Nets& nets, const Environment& env,
                                          const std::vector<Vec>& q0_batch, const VaeConfig& cfg,
                                          std::uint64_t noise_seed) {
  if (!frozen) throw Error(ErrorKind::MissingPhase1, "phase 2 needs the phase-1 networks");
  if (q0_batch.empty()) throw Error(ErrorKind::EmptyBatch, "phase-2 batch is empty");
  if (nets.hamiltonian.input_dim() != 2 * env.state_dim()) {
    throw Error(ErrorKind::ShapeError, "phase-2 Hamiltonian does not match the environment");
  }
  const std::size_t latent = nets.encoder.latent_dim();
  const std::size_t total = flatten(nets).size();

  auto kernel = [&](std::size_t i, std::span<double> terms, std::span<double> grad) {
    const EncodedPair pair = encode_pair(*frozen, q0_batch[i], cfg.horizon, cfg.steps);
    Rng rng(derive_seed(noise_seed, i));
    Vec eps(latent);
    for (double& e : eps) e = rng.normal();

    ad::Tape tape;
    const BoundMlp h1(tape, nets.hamiltonian, true);
    const BoundGaussianEncoder enc = bind(tape, nets.encoder, true);
    const BoundMlp dec(tape, nets.decoder, true);
    Phase2Model model;
    model.encode = [&](const ad::Var& y) { return enc.encode(y); };
    model.decode = [&](const ad::Var& z) { return dec.forward(z); };
    model.hamiltonian = mlp_expr(h1);
    const Phase2Exprs e = phase2_sample_loss(tape, model, pair.x, pair.y, eps, cfg);
    terms[0] = e.loss.scalar();
    terms[1] = e.kl.scalar();
    terms[2] = e.x_recon.scalar();
    terms[3] = e.y_recon.scalar();
    const ad::Gradients g = tape.backward(e.loss);
    std::size_t pos = 0;
    for (const BoundMlp* b : {&h1, &enc.trunk, &enc.mean_head, &enc.logvar_head, &dec}) {
      const auto& dims = b->dims();
      std::size_t count = 0;
      for (std::size_t k = 0; k + 1 < dims.size(); ++k) count += dims[k] * dims[k + 1] + dims[k + 1];
      b->gather_gradient(g, grad.subspan(pos, count));
      pos += count;
    }
  };
  BatchSums sums = reduce_batch(q0_batch.size(), 4, total, kernel, cfg.policy);
  const double inv = 1.0 / static_cast<double>(q0_batch.size());
  Phase2Evaluation out;
  out.terms = {sums.terms[0] * inv, sums.terms[1] * inv, sums.terms[2] * inv, sums.terms[3] * inv};
  for (double& g : sums.gradient) g *= inv;
  out.gradient = std::move(sums.gradient);
  return out;
}

Phase2Terms phase2_loss(const Phase1Nets* frozen, const Phase2Nets& nets, const Environment& env,
                        const std::vector<Vec>& q0_batch, const VaeConfig& cfg, std::uint64_t noise_seed) {
  return phase2_loss_and_gradient(frozen, nets, env, q0_batch, cfg, noise_seed).terms;
}

Checkpoint make_phase2_checkpoint(const Environment& env, const Checkpoint& phase1, const VaeConfig& cfg,
                                  const Phase2Nets& nets) {
  Checkpoint ckpt;
  ckpt.env = std::string(env.name());
  ckpt.phase = 2;
  ckpt.seed = cfg.seed;
  ckpt.config = echo(cfg);
  ckpt.set_network(std::string(kNetHamiltonian), phase1.network(kNetHamiltonian));
  ckpt.set_network(std::string(kNetCostate), phase1.network(kNetCostate));
  ckpt.set_network(std::string(kNetHamiltonianPhase2), nets.hamiltonian);
  ckpt.set_network(std::string(kNetEncoderTrunk), nets.encoder.trunk);
  ckpt.set_network(std::string(kNetEncoderMean), nets.encoder.mean_head);
  ckpt.set_network(std::string(kNetEncoderLogvar), nets.encoder.logvar_head);
  ckpt.set_network(std::string(kNetDecoder), nets.decoder);
  return ckpt;
}

Phase2Run train_phase2(const Environment& env, const Checkpoint& phase1, const VaeConfig& cfg,
                       const Phase2Observer& observer) {
  cfg.validate();
  if (phase1.env != env.name()) {
    throw Error(ErrorKind::EnvMismatch, "checkpoint was trained on '" + phase1.env + "', not '" +
                                            std::string(env.name()) + "'");
  }
  const Phase1Nets frozen = phase1_nets(phase1);
  Phase2Nets nets = init_phase2(env, frozen, cfg.latent_dim, cfg.seed);
  std::vector<double> params = flatten(nets);
  Adam adam(params.size(), cfg.learning_rate);
  Phase2Run run;
  run.metrics.reserve(cfg.iterations);
  for (std::size_t step = 1; step <= cfg.iterations; ++step) {
    const auto batch = sample_batch(env, cfg.seed, step, cfg.batch_size);
    const std::uint64_t noise = derive_seed(cfg.seed, step, 0x9e3779b9ULL);
    const Phase2Evaluation eval =
        guarded(step, [&] { return phase2_loss_and_gradient(&frozen, nets, env, batch, cfg, noise); });
    if (!std::isfinite(eval.terms.loss)) diverged(step, "loss is not finite");
    run.metrics.push_back({step, eval.terms});
    if (observer) observer(run.metrics.back());
    adam.step(params, eval.gradient);
    unflatten(nets, params);
  }
  run.checkpoint = make_phase2_checkpoint(env, phase1, cfg, nets);
  return run;
}

double phase2_cycle_error(const Phase1Nets& frozen, const Phase2Nets& nets, const std::vector<Vec>& q0_batch,
                          double horizon, std::size_t steps) {
  if (q0_batch.empty()) throw Error(ErrorKind::EmptyBatch, "cycle batch is empty");
  const MlpHamiltonian h(frozen.hamiltonian);
  const MlpHamiltonian h1(nets.hamiltonian);
  double total = 0.0;
  for (const Vec& q0 : q0_batch) {
    const EncodedPair pair = encode_pair(frozen, q0, horizon, steps);
    const Vec y_hat = nets.decoder.forward(encode(nets.encoder, pair.y).mean);
    const PhasePoint x_hat = rollout(h1, PhasePoint::split(y_hat), horizon, steps, Direction::Backward).back();
    const Vec y_cycle = rollout(h, x_hat, horizon, steps, Direction::Forward).back().joined();
    double d2 = 0.0;
    for (std::size_t i = 0; i < y_cycle.size(); ++i) d2 += (pair.y[i] - y_cycle[i]) * (pair.y[i] - y_cycle[i]);
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(q0_batch.size());
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t size, double learning_rate) : lr_(learning_rate), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> gradient) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (params.size() != m_.size() || gradient.size() != m_.size()) {
    throw Error(ErrorKind::ShapeError, "optimizer state does not match the parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * gradient[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * gradient[i] * gradient[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

std::vector<std::string> phase1_metrics_header() { return {"step", "loss", "term1", "term2", "term3"}; }
std::vector<std::string> phase2_metrics_header() { return {"step", "loss", "kl", "x_recon", "y_recon"}; }

std::vector<std::vector<double>> metrics_rows(const std::vector<Phase1Metrics>& metrics) {
  std::vector<std::vector<double>> rows;
  rows.reserve(metrics.size());
  for (const auto& m : metrics) {
    rows.push_back({static_cast<double>(m.step), m.terms.loss, m.terms.term1, m.terms.term2, m.terms.term3});
  }
  return rows;
}

std::vector<std::vector<double>> metrics_rows(const std::vector<Phase2Metrics>& metrics) {
  std::vector<std::vector<double>> rows;
  rows.reserve(metrics.size());
  for (const auto& m : metrics) {
    rows.push_back({static_cast<double>(m.step), m.terms.loss, m.terms.kl, m.terms.x_recon, m.terms.y_recon});
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

double number(const std::string& key, const ConfigValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw Error(ErrorKind::InvalidConfig, key + " must be a number");
}

std::int64_t integer(const std::string& key, const ConfigValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw Error(ErrorKind::InvalidConfig, key + " must be an integer");
}

std::size_t count(const std::string& key, const ConfigValue& v) {
  const std::int64_t i = integer(key, v);
  if (i < 0) throw Error(ErrorKind::InvalidConfig, key + " must be non-negative");
  return static_cast<std::size_t>(i);
}

std::string text(const std::string& key, const ConfigValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw Error(ErrorKind::InvalidConfig, key + " must be a string");
}

bool apply_shared(const std::string& key, const ConfigValue& v, double& horizon, std::size_t& steps,
                  std::size_t& batch, std::size_t& iterations, double& lr, std::uint64_t& seed) {
  if (key == "horizon") horizon = number(key, v);
  else if (key == "steps") steps = count(key, v);
  else if (key == "batch_size") batch = count(key, v);
  else if (key == "iterations") iterations = count(key, v);
  else if (key == "learning_rate") lr = number(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(integer(key, v));
  else return false;
  return true;
}

bool apply_train(const std::string& key, const ConfigValue& v, TrainConfig& c) {
  if (apply_shared(key, v, c.horizon, c.steps, c.batch_size, c.iterations, c.learning_rate, c.seed)) return true;
  if (key == "alpha1") c.alpha1 = number(key, v);
  else if (key == "alpha2") c.alpha2 = number(key, v);
  else if (key == "beta") c.beta = number(key, v);
  else if (key == "fhat") c.fhat = parse_fhat(text(key, v));
  else return false;
  return true;
}

bool apply_vae(const std::string& key, const ConfigValue& v, VaeConfig& c) {
  if (apply_shared(key, v, c.horizon, c.steps, c.batch_size, c.iterations, c.learning_rate, c.seed)) return true;
  if (key == "latent_dim") c.latent_dim = count(key, v);
  else if (key == "kl_weight") c.kl_weight = number(key, v);
  else if (key == "recon_weight") c.recon_weight = number(key, v);
  else return false;
  return true;
}

}  // namespace

ConfigEcho echo(const TrainConfig& cfg) {
  return {{"alpha1", cfg.alpha1},
          {"alpha2", cfg.alpha2},
          {"beta", cfg.beta},
          {"horizon", cfg.horizon},
          {"steps", as_int(cfg.steps)},
          {"batch_size", as_int(cfg.batch_size)},
          {"iterations", as_int(cfg.iterations)},
          {"learning_rate", cfg.learning_rate},
          {"seed", static_cast<std::int64_t>(cfg.seed)},
          {"fhat", std::string(to_string(cfg.fhat))}};
}

ConfigEcho echo(const VaeConfig& cfg) {
  return {{"latent_dim", as_int(cfg.latent_dim)},
          {"kl_weight", cfg.kl_weight},
          {"recon_weight", cfg.recon_weight},
          {"horizon", cfg.horizon},
          {"steps", as_int(cfg.steps)},
          {"batch_size", as_int(cfg.batch_size)},
          {"iterations", as_int(cfg.iterations)},
          {"learning_rate", cfg.learning_rate},
          {"seed", static_cast<std::int64_t>(cfg.seed)}};
}

void apply_config(const ConfigMap& map, TrainConfig& train, VaeConfig& vae) {
  for (const auto& [key, value] : map) {
    bool used = false;
    if (key.rfind("train.", 0) == 0) {
      used = apply_train(key.substr(6), value, train);
    } else if (key.rfind("vae.", 0) == 0) {
      used = apply_vae(key.substr(4), value, vae);
    } else {
      const bool a = apply_train(key, value, train);
      const bool b = apply_vae(key, value, vae);
      used = a || b;
    }
    if (!used) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
  }
}

}  // namespace hamopt
