#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "hamopt/dynamics.hpp"
#include "hamopt/environments.hpp"
#include "hamopt/io.hpp"
#include "hamopt/nets.hpp"
#include "hamopt/parallel.hpp"

namespace hamopt {

enum class FhatMode { Blackbox, Dhdp };

std::string_view to_string(FhatMode mode);
FhatMode parse_fhat(std::string_view text);

struct TrainConfig {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double beta = 1.0;
  double horizon = 1.0;
  std::size_t steps = 50;
  std::size_t batch_size = 32;
  std::size_t iterations = 1000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  FhatMode fhat = FhatMode::Blackbox;
  ExecutionPolicy policy = ExecutionPolicy::Parallel;

  void validate() const;
};

struct VaeConfig {
  std::size_t latent_dim = 0;  // 0 selects the architecture default
  double kl_weight = 1.0;
  double recon_weight = 1.0;
  double horizon = 1.0;
  std::size_t steps = 50;
  std::size_t batch_size = 32;
  std::size_t iterations = 1000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  ExecutionPolicy policy = ExecutionPolicy::Parallel;

  void validate() const;
};

// Layer sizes per environment.
struct Architecture {
  std::vector<std::size_t> hamiltonian;
  std::vector<std::size_t> costate;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> encoder_trunk;
  std::vector<std::size_t> encoder_mean;
  std::vector<std::size_t> encoder_logvar;
  std::vector<std::size_t> decoder;
};

Architecture architecture(const Environment& env, std::size_t latent_dim = 0);

struct Phase1Nets {
  Mlp hamiltonian;
  Mlp costate;
};

struct Phase2Nets {
  Mlp hamiltonian;  // h_theta1, decodes by the backward flow
  GaussianEncoder encoder;
  Mlp decoder;
};

Phase1Nets init_phase1(const Environment& env, std::uint64_t seed);
// h_theta1 starts from the phase-1 h_theta.
Phase2Nets init_phase2(const Environment& env, const Phase1Nets& phase1, std::size_t latent_dim, std::uint64_t seed);

// Network names inside a checkpoint.
inline constexpr std::string_view kNetHamiltonian = "hamiltonian";
inline constexpr std::string_view kNetCostate = "costate";
inline constexpr std::string_view kNetHamiltonianPhase2 = "hamiltonian_phase2";
inline constexpr std::string_view kNetEncoderTrunk = "encoder_trunk";
inline constexpr std::string_view kNetEncoderMean = "encoder_mean";
inline constexpr std::string_view kNetEncoderLogvar = "encoder_logvar";
inline constexpr std::string_view kNetDecoder = "decoder";

// Throws MissingPhase1 when the checkpoint lacks the phase-1 networks.
Phase1Nets phase1_nets(const Checkpoint& ckpt);
Phase2Nets phase2_nets(const Checkpoint& ckpt);

// q0 batch used at training step `step` (1-based); step 0 is reserved.
std::vector<Vec> sample_batch(const Environment& env, std::uint64_t seed, std::size_t step, std::size_t count);

// ---------------------------------------------------------------------------
// Phase 1

struct Phase1Terms {
  double loss = 0.0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
};

struct Phase1Exprs {
  ad::Var loss;
  ad::Var term1;
  ad::Var term2;
  ad::Var term3;
};

// One sample of the phase-1 loss on a tape, for any Hamiltonian expression and
// predicted costate p0 (a function of whatever the caller wants to train).
// When grad g(q_T) is undefined (empty or full shape) the terminal term is 0.
Phase1Exprs phase1_sample_loss(ad::Tape& tape, const HamiltonianExpr& h, const ad::Var& p0, const Environment& env,
                               std::span<const double> q0, const TrainConfig& cfg);

struct Phase1Evaluation {
  Phase1Terms terms;              // batch means; loss weighted, terms unweighted
  std::vector<double> gradient;   // d loss / d (h params, P params)
};

Phase1Evaluation phase1_loss_and_gradient(const Phase1Nets& nets, const Environment& env,
                                          const std::vector<Vec>& q0_batch, const TrainConfig& cfg);
Phase1Terms phase1_loss(const Phase1Nets& nets, const Environment& env, const std::vector<Vec>& q0_batch,
                        const TrainConfig& cfg);

std::vector<double> flatten(const Phase1Nets& nets);
void unflatten(Phase1Nets& nets, std::span<const double> flat);

struct Phase1Metrics {
  std::size_t step = 0;
  Phase1Terms terms;
};

struct Phase1Run {
  Checkpoint checkpoint;
  std::vector<Phase1Metrics> metrics;
};

using Phase1Observer = std::function<void(const Phase1Metrics&)>;

Checkpoint make_phase1_checkpoint(const Environment& env, const TrainConfig& cfg, const Phase1Nets& nets);

// Adam on (theta, phi) over fresh q0 batches; metric row k is the batch loss
// before update k. Throws TrainingDiverged with the step index.
Phase1Run train_phase1(const Environment& env, const TrainConfig& cfg, const Phase1Observer& observer = {});
Phase1Run train_phase1(const Environment& env, const TrainConfig& cfg, Phase1Nets init,
                       const Phase1Observer& observer = {});

// ---------------------------------------------------------------------------
// Phase 2

// 1/2 sum(mu^2 + exp(logvar) - 1 - logvar).
double kl_gaussian(const GaussianLatent& latent);
ad::Var kl_gaussian_expr(ad::Tape& tape, const ad::Var& mean, const ad::Var& logvar);

struct Phase2Terms {
  double loss = 0.0;
  double kl = 0.0;
  double x_recon = 0.0;
  double y_recon = 0.0;
};

struct Phase2Exprs {
  ad::Var loss;
  ad::Var kl;
  ad::Var x_recon;
  ad::Var y_recon;
};

struct Phase2Model {
  std::function<BoundGaussianEncoder::Latent(const ad::Var& y)> encode;
  std::function<ad::Var(const ad::Var& z)> decode;
  HamiltonianExpr hamiltonian;
};

// x = (q0, p0), y = forward flow of x; eps is the reparameterization noise.
Phase2Exprs phase2_sample_loss(ad::Tape& tape, const Phase2Model& model, std::span<const double> x,
                               std::span<const double> y, std::span<const double> eps, const VaeConfig& cfg);

// x and y for a q0 batch under the frozen phase-1 networks.
struct EncodedPair {
  Vec x;
  Vec y;
};
EncodedPair encode_pair(const Phase1Nets& frozen, std::span<const double> q0, double horizon, std::size_t steps);

struct Phase2Evaluation {
  Phase2Terms terms;
  std::vector<double> gradient;  // d loss / d (h1, trunk, mean, logvar, decoder)
};

// `frozen` null => MissingPhase1. Noise for sample i is drawn from noise_seed.
Phase2Evaluation phase2_loss_and_gradient(const Phase1Nets* frozen, const Phase2Nets& nets, const Environment& env,
                                          const std::vector<Vec>& q0_batch, const VaeConfig& cfg,
                                          std::uint64_t noise_seed);
Phase2Terms phase2_loss(const Phase1Nets* frozen, const Phase2Nets& nets, const Environment& env,
                        const std::vector<Vec>& q0_batch, const VaeConfig& cfg, std::uint64_t noise_seed);

std::vector<double> flatten(const Phase2Nets& nets);
void unflatten(Phase2Nets& nets, std::span<const double> flat);

struct Phase2Metrics {
  std::size_t step = 0;
  Phase2Terms terms;
};

struct Phase2Run {
  Checkpoint checkpoint;
  std::vector<Phase2Metrics> metrics;
};

using Phase2Observer = std::function<void(const Phase2Metrics&)>;

Checkpoint make_phase2_checkpoint(const Environment& env, const Checkpoint& phase1, const VaeConfig& cfg,
                                  const Phase2Nets& nets);

// Updates h_theta1, encoder and decoder jointly; h_theta and P_phi stay frozen.
Phase2Run train_phase2(const Environment& env, const Checkpoint& phase1, const VaeConfig& cfg,
                       const Phase2Observer& observer = {});

// Mean |y - forward_flow(x_hat)| where x_hat decodes the posterior mean of y.
double phase2_cycle_error(const Phase1Nets& frozen, const Phase2Nets& nets, const std::vector<Vec>& q0_batch,
                          double horizon, std::size_t steps);

// ---------------------------------------------------------------------------

// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate);
  void step(std::span<double> params, std::span<const double> gradient);

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

std::vector<std::string> phase1_metrics_header();
std::vector<std::string> phase2_metrics_header();
std::vector<std::vector<double>> metrics_rows(const std::vector<Phase1Metrics>& metrics);
std::vector<std::vector<double>> metrics_rows(const std::vector<Phase2Metrics>& metrics);

ConfigEcho echo(const TrainConfig& cfg);
ConfigEcho echo(const VaeConfig& cfg);
// Reads the known keys (snake_case TrainConfig / VaeConfig field names) from a
// config map; unknown keys raise InvalidConfig.
void apply_config(const ConfigMap& map, TrainConfig& train, VaeConfig& vae);

}  // namespace hamopt
