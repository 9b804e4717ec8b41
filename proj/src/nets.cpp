#include "hamopt/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hamopt/error.hpp"
#include "hamopt/random.hpp"
#include "json.hpp"

namespace hamopt {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw Error(ErrorKind::InvalidArchitecture, "an Mlp needs at least an input and an output size");
  for (auto d : dims) {
    if (d == 0) throw Error(ErrorKind::InvalidArchitecture, "layer sizes must be positive");
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  validate_dims(dims_);
  layers_.reserve(dims_.size() - 1);
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    Layer layer;
    layer.in = dims_[i];
    layer.out = dims_[i + 1];
    layer.weights.assign(layer.in * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
    layers_.push_back(std::move(layer));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  if (input.size() != input_dim()) {
    throw Error(ErrorKind::ShapeError, "Mlp input has " + std::to_string(input.size()) + " entries, expected " +
                                           std::to_string(input_dim()));
  }
  std::vector<double> act(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    next.assign(l.out, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double* row = l.weights.data() + r * l.in;
      double acc = l.bias[r];
      for (std::size_t c = 0; c < l.in; ++c) acc += row[c] * act[c];
      next[r] = (k + 1 < layers_.size()) ? std::tanh(acc) : acc;
    }
    act.swap(next);
  }
  return act;
}

double Mlp::value_and_input_gradient(std::span<const double> input, std::span<double> gradient) const {
  if (output_dim() != 1) throw Error(ErrorKind::ShapeError, "input gradient needs a scalar-output network");
  if (input.size() != input_dim() || gradient.size() != input_dim()) {
    throw Error(ErrorKind::ShapeError, "input/gradient size does not match the network");
  }
  // activations[k] is the output of hidden layer k (after tanh).
  std::vector<std::vector<double>> activations;
  activations.reserve(layers_.size());
  std::span<const double> act = input;
  double value = 0.0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    std::vector<double> next(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double* row = l.weights.data() + r * l.in;
      double acc = l.bias[r];
      for (std::size_t c = 0; c < l.in; ++c) acc += row[c] * act[c];
      next[r] = acc;
    }
    if (k + 1 < layers_.size()) {
      for (double& v : next) v = std::tanh(v);
      activations.push_back(std::move(next));
      act = activations.back();
    } else {
      value = next[0];
    }
  }

  std::vector<double> delta(layers_.back().weights);  // 1 x in_L
  for (std::size_t k = layers_.size() - 1; k-- > 0;) {
    const Layer& l = layers_[k];
    const auto& a = activations[k];
    std::vector<double> prev(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double d = delta[r] * (1.0 - a[r] * a[r]);
      const double* row = l.weights.data() + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) prev[c] += row[c] * d;
    }
    delta.swap(prev);
  }
  std::copy(delta.begin(), delta.end(), gradient.begin());
  return value;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error(ErrorKind::DimsMismatch, "expected " + std::to_string(parameter_count()) + " parameters, got " +
                                             std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.begin());
    pos += l.weights.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

Mlp init_mlp(std::vector<std::size_t> dims, std::uint64_t seed) {
  Mlp net(std::move(dims));
  Rng rng(seed);
  for (auto& l : net.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (double& w : l.weights) w = rng.uniform(-limit, limit);
  }
  return net;
}

// ---------------------------------------------------------------------------

BoundMlp::BoundMlp(ad::Tape& tape, const Mlp& net, bool trainable)
    : tape_(&tape), dims_(net.dims()), trainable_(trainable) {
  for (const auto& l : net.layers()) {
    if (trainable) {
      weights_.push_back(tape.matrix_variable(l.out, l.in, l.weights));
      biases_.push_back(tape.variable(l.bias));
    } else {
      weights_.push_back(tape.matrix_constant(l.out, l.in, l.weights));
      biases_.push_back(tape.constant(l.bias));
    }
  }
}

ad::Var BoundMlp::forward(const ad::Var& input) const {
  if (input.size() != dims_.front()) {
    throw Error(ErrorKind::ShapeError, "Mlp input has " + std::to_string(input.size()) + " entries, expected " +
                                           std::to_string(dims_.front()));
  }
  ad::Var act = input;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    ad::Var z = tape_->add(tape_->matvec(weights_[k], act), biases_[k]);
    act = (k + 1 < weights_.size()) ? tape_->tanh(z) : z;
  }
  return act;
}

BoundMlp::ValueAndGradient BoundMlp::value_and_input_gradient(const ad::Var& input) const {
  if (dims_.back() != 1) throw Error(ErrorKind::ShapeError, "input gradient needs a scalar-output network");
  if (input.size() != dims_.front()) throw Error(ErrorKind::ShapeError, "Mlp input size mismatch");
  std::vector<ad::Var> activations;
  ad::Var act = input;
  ad::Var value;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    ad::Var z = tape_->add(tape_->matvec(weights_[k], act), biases_[k]);
    if (k + 1 < weights_.size()) {
      act = tape_->tanh(z);
      activations.push_back(act);
    } else {
      value = z;
    }
  }
  ad::Var delta = tape_->matvec_t(weights_.back(), tape_->constant(1.0));
  for (std::size_t k = weights_.size() - 1; k-- > 0;) {
    delta = tape_->mul(delta, tape_->one_minus_square(activations[k]));
    delta = tape_->matvec_t(weights_[k], delta);
  }
  return {value, delta};
}

void BoundMlp::gather_gradient(const ad::Gradients& grads, std::span<double> flat) const {
  std::size_t pos = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    for (const auto& v : {weights_[k], biases_[k]}) {
      const auto g = grads[v];
      if (pos + g.size() > flat.size()) throw Error(ErrorKind::ShapeError, "gradient buffer too small");
      for (std::size_t i = 0; i < g.size(); ++i) flat[pos + i] += g[i];
      pos += g.size();
    }
  }
}

// ---------------------------------------------------------------------------

GaussianLatent encode(const GaussianEncoder& encoder, std::span<const double> input) {
  auto hidden = encoder.trunk.forward(input);
  for (double& v : hidden) v = std::tanh(v);
  return {encoder.mean_head.forward(hidden), encoder.logvar_head.forward(hidden)};
}

BoundGaussianEncoder::Latent BoundGaussianEncoder::encode(const ad::Var& input) const {
  ad::Var hidden = trunk.forward(input);
  hidden = hidden.tape()->tanh(hidden);
  return {mean_head.forward(hidden), logvar_head.forward(hidden)};
}

BoundGaussianEncoder bind(ad::Tape& tape, const GaussianEncoder& encoder, bool trainable) {
  return {BoundMlp(tape, encoder.trunk, trainable), BoundMlp(tape, encoder.mean_head, trainable),
          BoundMlp(tape, encoder.logvar_head, trainable)};
}

// ---------------------------------------------------------------------------

namespace {

double probe_loss(const Mlp& net, std::span<const double> input) {
  const auto y = net.forward(input);
  double loss = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) loss += 0.5 * y[k] * y[k] + y[k] / static_cast<double>(k + 1);
  return loss;
}

}  // namespace

double grad_check_mlp(const Mlp& net, std::span<const double> input, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidStep, "finite-difference step must be positive");
  ad::Tape tape;
  const BoundMlp bound(tape, net, true);
  const ad::Var x = tape.variable(input);
  const ad::Var y = bound.forward(x);
  std::vector<double> weights(y.size());
  for (std::size_t k = 0; k < weights.size(); ++k) weights[k] = 1.0 / static_cast<double>(k + 1);
  const ad::Var loss = tape.axpy(tape.dot(y, tape.constant(weights)), 0.5, tape.squared_norm(y));
  const ad::Gradients grads = tape.backward(loss);

  std::vector<double> analytic(net.parameter_count(), 0.0);
  bound.gather_gradient(grads, analytic);
  const auto input_grad = grads[x];

  auto rel = [](double a, double fd) { return std::abs(a - fd) / std::max(1.0, std::abs(a)); };
  double worst = 0.0;
  Mlp probe = net;
  std::vector<double> theta = net.parameters();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    probe.set_parameters(theta);
    const double up = probe_loss(probe, input);
    theta[i] = saved - step;
    probe.set_parameters(theta);
    const double down = probe_loss(probe, input);
    theta[i] = saved;
    worst = std::max(worst, rel(analytic[i], (up - down) / (2.0 * step)));
  }
  std::vector<double> xs(input.begin(), input.end());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double saved = xs[i];
    xs[i] = saved + step;
    const double up = probe_loss(net, xs);
    xs[i] = saved - step;
    const double down = probe_loss(net, xs);
    xs[i] = saved;
    worst = std::max(worst, rel(input_grad[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

// ---------------------------------------------------------------------------

std::string serialize(const Mlp& net) {
  std::string out = "{\"dims\":[";
  for (std::size_t i = 0; i < net.dims().size(); ++i) {
    if (i) out += ',';
    out += std::to_string(net.dims()[i]);
  }
  out += "],\"data\":[";
  const auto flat = net.parameters();
  char buf[40];
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (i) out += ',';
    std::snprintf(buf, sizeof(buf), "%.17g", flat[i]);
    out += buf;
  }
  out += "]}";
  return out;
}

Mlp deserialize(std::string_view payload) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("malformed network payload: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dims") || !doc.contains("data") || !doc["dims"].is_array() ||
      !doc["data"].is_array()) {
    throw Error(ErrorKind::CorruptCheckpoint, "network payload needs 'dims' and 'data' arrays");
  }
  std::vector<std::size_t> dims;
  for (const auto& d : doc["dims"]) {
    if (!d.is_number_unsigned()) throw Error(ErrorKind::CorruptCheckpoint, "dims must be positive integers");
    dims.push_back(d.get<std::size_t>());
  }
  std::vector<double> data;
  data.reserve(doc["data"].size());
  for (const auto& v : doc["data"]) {
    if (!v.is_number()) throw Error(ErrorKind::CorruptCheckpoint, "network data must be numeric");
    data.push_back(v.get<double>());
  }
  Mlp net;
  try {
    net = Mlp(dims);
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptCheckpoint, e.what());
  }
  if (data.size() != net.parameter_count()) {
    throw Error(ErrorKind::DimsMismatch, "dims imply " + std::to_string(net.parameter_count()) +
                                             " parameters but the payload carries " + std::to_string(data.size()));
  }
  net.set_parameters(data);
  return net;
}

}  // namespace hamopt
