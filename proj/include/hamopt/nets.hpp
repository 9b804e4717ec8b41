#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hamopt/autodiff.hpp"

namespace hamopt {

// Dense layer: weights are (out x in), row-major.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

// Feed-forward network with tanh hidden activations and a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  // Zero-initialized network; throws InvalidArchitecture.
  explicit Mlp(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t parameter_count() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::vector<double> forward(std::span<const double> input) const;

  // For scalar-output networks: h(x) and dh/dx by an explicit backward pass.
  double value_and_input_gradient(std::span<const double> input, std::span<double> gradient) const;

  // Flat parameter order: for each layer, weights then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
};

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
Mlp init_mlp(std::vector<std::size_t> dims, std::uint64_t seed);

// An Mlp whose parameters are leaves on a tape.
class BoundMlp {
 public:
  BoundMlp() = default;
  BoundMlp(ad::Tape& tape, const Mlp& net, bool trainable);

  const std::vector<std::size_t>& dims() const { return dims_; }
  bool trainable() const { return trainable_; }

  ad::Var forward(const ad::Var& input) const;

  struct ValueAndGradient {
    ad::Var value;
    ad::Var gradient;
  };
  // Scalar-output only. The input gradient is itself a tape expression, so
  // losses built from it can be differentiated with respect to the parameters.
  ValueAndGradient value_and_input_gradient(const ad::Var& input) const;

  // Appends d(output)/d(parameters) to `flat` in Mlp::parameters() order.
  void gather_gradient(const ad::Gradients& grads, std::span<double> flat) const;

 private:
  ad::Tape* tape_ = nullptr;
  std::vector<std::size_t> dims_;
  std::vector<ad::Var> weights_;
  std::vector<ad::Var> biases_;
  bool trainable_ = false;
};

// Encoder = shared trunk (tanh on its output) followed by mean and log-variance heads.
struct GaussianEncoder {
  Mlp trunk;
  Mlp mean_head;
  Mlp logvar_head;

  std::size_t latent_dim() const { return mean_head.output_dim(); }
};

struct GaussianLatent {
  std::vector<double> mean;
  std::vector<double> logvar;
};

GaussianLatent encode(const GaussianEncoder& encoder, std::span<const double> input);

struct BoundGaussianEncoder {
  BoundMlp trunk;
  BoundMlp mean_head;
  BoundMlp logvar_head;

  struct Latent {
    ad::Var mean;
    ad::Var logvar;
  };
  Latent encode(const ad::Var& input) const;
};

BoundGaussianEncoder bind(ad::Tape& tape, const GaussianEncoder& encoder, bool trainable);

// Checks the tape gradient of L(theta, x) = |y|^2 / 2 + sum_k y_k / (k + 1),
// y = net(x), with respect to every parameter and input against central
// differences. Returns max |analytic - fd| / max(1, |analytic|).
double grad_check_mlp(const Mlp& net, std::span<const double> input, double step);

// Self-describing text payload: {"dims":[...],"data":[...]} with data in
// parameters() order. Throws CorruptCheckpoint / DimsMismatch.
std::string serialize(const Mlp& net);
Mlp deserialize(std::string_view payload);

}  // namespace hamopt
