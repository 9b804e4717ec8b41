#include "hamopt/environments.hpp"

#include <cmath>

#include "hamopt/error.hpp"
#include "hamopt/random.hpp"

namespace hamopt {

double Environment::running_cost(std::span<const double> q, std::span<const double> v) const {
  double kinetic = 0.0;
  for (double x : v) kinetic += x * x;
  return running_cost(q) + 0.5 * kinetic;
}

namespace {

inline double constant_like(double, double c) { return c; }
inline ad::Var constant_like(const ad::Var& ref, double c) { return ref.tape()->constant(c); }

template <class S>
S sum_of_squares(const std::vector<S>& x) {
  S acc = x[0] * x[0];
  for (std::size_t i = 1; i < x.size(); ++i) acc = acc + x[i] * x[i];
  return acc;
}

void expect_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorKind::ShapeError,
                std::string(what) + " has " + std::to_string(got) + " entries, expected " + std::to_string(want));
  }
}

// Shared plumbing for problems whose black boxes are closed-form: Derived
// supplies flow_impl / l1_impl / g_impl / grad_g_impl templated on the scalar
// type, so the same formula serves doubles and tape variables.
template <class Derived>
class ClosedFormEnvironment : public Environment {
 public:
  Vec flow(std::span<const double> q, std::span<const double> v) const override {
    expect_size(q.size(), state_dim(), "state");
    expect_size(v.size(), control_dim(), "control");
    return self().template flow_impl<double>(Vec(q.begin(), q.end()), Vec(v.begin(), v.end()));
  }
  VarList flow(ad::Tape&, const VarList& q, const VarList& v) const override {
    expect_size(q.size(), state_dim(), "state");
    expect_size(v.size(), control_dim(), "control");
    return self().template flow_impl<ad::Var>(q, v);
  }
  double running_cost(std::span<const double> q) const override {
    expect_size(q.size(), state_dim(), "state");
    return self().template l1_impl<double>(Vec(q.begin(), q.end()));
  }
  ad::Var running_cost(ad::Tape&, const VarList& q) const override {
    expect_size(q.size(), state_dim(), "state");
    return self().template l1_impl<ad::Var>(q);
  }
  double terminal_cost(std::span<const double> q) const override {
    expect_size(q.size(), state_dim(), "state");
    return self().template g_impl<double>(Vec(q.begin(), q.end()));
  }
  Vec terminal_grad(std::span<const double> q) const override {
    expect_size(q.size(), state_dim(), "state");
    return self().template grad_g_impl<double>(Vec(q.begin(), q.end()));
  }
  ad::Var terminal_grad(ad::Tape& tape, const ad::Var& q) const override {
    expect_size(q.size(), state_dim(), "state");
    const VarList g = self().template grad_g_impl<ad::Var>(tape.split(q));
    return tape.stack(g);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

}  // namespace

// ---------------------------------------------------------------------------
// Linear-quadratic: q' = v, l1 = |q|^2 / 2, g = c |q|^2 / 2.

class LqEnvironment final : public ClosedFormEnvironment<LqEnvironment> {
 public:
  LqEnvironment(std::size_t dim, double c) : dim_(dim), c_(c) {
    if (dim == 0) throw Error(ErrorKind::ShapeError, "LQ dimension must be positive");
  }

  EnvKind kind() const override { return EnvKind::Lq; }
  std::string_view name() const override { return "lq"; }
  std::size_t state_dim() const override { return dim_; }
  std::size_t control_dim() const override { return dim_; }
  double terminal_weight() const { return c_; }

  Vec sample_q0(std::uint64_t seed) const override {
    Rng rng(seed);
    Vec q(dim_);
    for (;;) {
      double r2 = 0.0;
      for (double& x : q) {
        x = rng.uniform(-1.0, 1.0);
        r2 += x * x;
      }
      if (r2 <= 1.0) return q;
    }
  }

  template <class S>
  std::vector<S> flow_impl(const std::vector<S>&, const std::vector<S>& v) const {
    return v;
  }
  template <class S>
  S l1_impl(const std::vector<S>& q) const {
    return 0.5 * sum_of_squares(q);
  }
  template <class S>
  S g_impl(const std::vector<S>& q) const {
    return (0.5 * c_) * sum_of_squares(q);
  }
  template <class S>
  std::vector<S> grad_g_impl(const std::vector<S>& q) const {
    std::vector<S> g;
    g.reserve(q.size());
    for (const auto& x : q) g.push_back(c_ * x);
    return g;
  }

 private:
  std::size_t dim_;
  double c_;
};

// ---------------------------------------------------------------------------
// Cart pole, state (x, x', theta, theta'), continuous force v.

class CartPoleEnvironment final : public ClosedFormEnvironment<CartPoleEnvironment> {
 public:
  explicit CartPoleEnvironment(CartPoleParams p) : p_(p) {}

  EnvKind kind() const override { return EnvKind::CartPole; }
  std::string_view name() const override { return "cartpole"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t control_dim() const override { return 1; }
  const CartPoleParams& params() const { return p_; }

  Vec sample_q0(std::uint64_t seed) const override {
    Rng rng(seed);
    Vec q(4);
    for (double& x : q) x = rng.uniform(-0.05, 0.05);
    return q;
  }

  template <class S>
  std::vector<S> flow_impl(const std::vector<S>& q, const std::vector<S>& v) const {
    using std::cos;
    using std::sin;
    const double total_mass = p_.cart_mass + p_.pole_mass;
    const double pole_mass_length = p_.pole_mass * p_.half_length;
    const S& x_dot = q[1];
    const S& theta = q[2];
    const S& theta_dot = q[3];
    const S s = sin(theta);
    const S c = cos(theta);
    const S temp = (v[0] + pole_mass_length * (theta_dot * theta_dot * s)) * (1.0 / total_mass);
    const S theta_acc = (p_.gravity * s - c * temp) /
                        (p_.half_length * (4.0 / 3.0 - (p_.pole_mass / total_mass) * (c * c)));
    const S x_acc = temp - (pole_mass_length / total_mass) * (theta_acc * c);
    return {x_dot, x_acc, theta_dot, theta_acc};
  }
  template <class S>
  S l1_impl(const std::vector<S>& q) const {
    return q[2] * q[2];
  }
  template <class S>
  S g_impl(const std::vector<S>& q) const {
    return q[2] * q[2] + 0.1 * (q[3] * q[3]);
  }
  template <class S>
  std::vector<S> grad_g_impl(const std::vector<S>& q) const {
    return {constant_like(q[0], 0.0), constant_like(q[0], 0.0), 2.0 * q[2], 0.2 * q[3]};
  }

 private:
  CartPoleParams p_;
};

// ---------------------------------------------------------------------------
// Mountain car, state (x, x'): x'' = a v - b cos(3x).

class MountainCarEnvironment final : public ClosedFormEnvironment<MountainCarEnvironment> {
 public:
  explicit MountainCarEnvironment(MountainCarParams p) : p_(p) {}

  EnvKind kind() const override { return EnvKind::MountainCar; }
  std::string_view name() const override { return "mountaincar"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t control_dim() const override { return 1; }
  const MountainCarParams& params() const { return p_; }

  Vec sample_q0(std::uint64_t seed) const override {
    Rng rng(seed);
    return {rng.uniform(-0.6, -0.4), 0.0};
  }

  template <class S>
  std::vector<S> flow_impl(const std::vector<S>& q, const std::vector<S>& v) const {
    using std::cos;
    return {q[1], p_.force_gain * v[0] - p_.gravity_gain * cos(3.0 * q[0])};
  }
  template <class S>
  S l1_impl(const std::vector<S>& q) const {
    const S dx = q[0] - p_.goal_position;
    const S dv = q[1] - p_.goal_velocity;
    return dx * dx + dv * dv;
  }
  template <class S>
  S g_impl(const std::vector<S>& q) const {
    return l1_impl(q);
  }
  template <class S>
  std::vector<S> grad_g_impl(const std::vector<S>& q) const {
    return {2.0 * (q[0] - p_.goal_position), 2.0 * (q[1] - p_.goal_velocity)};
  }

 private:
  MountainCarParams p_;
};

// ---------------------------------------------------------------------------
// Shape optimization on a 4x4 level-set lattice: q' = v, l1 = g = F(q).

class ShapeEnvironment final : public Environment {
 public:
  explicit ShapeEnvironment(std::size_t resolution) : resolution_(resolution) {}

  static constexpr double kGradStep = 1e-4;

  EnvKind kind() const override { return EnvKind::Shape; }
  std::string_view name() const override { return "shape"; }
  std::size_t state_dim() const override { return kShapeControls; }
  std::size_t control_dim() const override { return kShapeControls; }
  std::size_t resolution() const { return resolution_; }

  Vec flow(std::span<const double> q, std::span<const double> v) const override {
    expect_size(q.size(), state_dim(), "state");
    expect_size(v.size(), control_dim(), "control");
    return Vec(v.begin(), v.end());
  }
  VarList flow(ad::Tape&, const VarList& q, const VarList& v) const override {
    expect_size(q.size(), state_dim(), "state");
    expect_size(v.size(), control_dim(), "control");
    return v;
  }
  double running_cost(std::span<const double> q) const override { return functional(q); }
  double terminal_cost(std::span<const double> q) const override { return functional(q); }

  Vec terminal_grad(std::span<const double> q) const override {
    expect_size(q.size(), state_dim(), "state");
    Vec g(q.size());
    fd_gradient(q, g);
    return g;
  }

  ad::Var running_cost(ad::Tape& tape, const VarList& q) const override {
    expect_size(q.size(), state_dim(), "state");
    ad::ExternalScalar fn;
    fn.value = [this](std::span<const double> x) { return functional(x); };
    fn.gradient = [this](std::span<const double> x, std::span<double> g) { fd_gradient(x, g); };
    return tape.external(tape.stack(q), std::move(fn));
  }
  ad::Var terminal_grad(ad::Tape& tape, const ad::Var& q) const override {
    const Vec g = terminal_grad(q.value());
    return tape.constant(g);
  }

  Vec sample_q0(std::uint64_t seed) const override {
    Rng rng(seed);
    Vec q(kShapeControls);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (double& x : q) x = rng.uniform(-0.5, 0.5);
      const DenseField field = interpolate_lattice(q, resolution_);
      bool any_in = false;
      bool any_out = false;
      for (double v : field.values) (v > 0.0 ? any_in : any_out) = true;
      if (any_in && any_out) return q;
    }
    throw Error(ErrorKind::SamplingFailed, "no admissible shape after 1000 draws");
  }

 private:
  double functional(std::span<const double> q) const {
    expect_size(q.size(), state_dim(), "state");
    return shape_functional(interpolate_lattice(q, resolution_));
  }

  void fd_gradient(std::span<const double> q, std::span<double> g) const {
    Vec probe(q.begin(), q.end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double saved = probe[i];
      probe[i] = saved + kGradStep;
      const double up = functional(probe);
      probe[i] = saved - kGradStep;
      const double down = functional(probe);
      probe[i] = saved;
      g[i] = (up - down) / (2.0 * kGradStep);
      if (!std::isfinite(g[i])) throw Error(ErrorKind::NonFiniteValue, "shape gradient is not finite");
    }
  }

  std::size_t resolution_;
};

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_lq(std::size_t dim, double terminal_weight) {
  return std::make_unique<LqEnvironment>(dim, terminal_weight);
}
std::unique_ptr<Environment> make_cartpole(CartPoleParams params) {
  return std::make_unique<CartPoleEnvironment>(params);
}
std::unique_ptr<Environment> make_mountain_car(MountainCarParams params) {
  return std::make_unique<MountainCarEnvironment>(params);
}
std::unique_ptr<Environment> make_shape(std::size_t resolution) {
  return std::make_unique<ShapeEnvironment>(resolution);
}

const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"lq", "cartpole", "mountaincar", "shape"};
  return names;
}

std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "lq") return make_lq();
  if (name == "cartpole") return make_cartpole();
  if (name == "mountaincar") return make_mountain_car();
  if (name == "shape") return make_shape();
  std::string valid;
  for (const auto& n : environment_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error(ErrorKind::InvalidConfig, "unknown environment '" + std::string(name) + "' (valid: " + valid + ")");
}

double lq_terminal_weight(const Environment& env) {
  const auto* lq = dynamic_cast<const LqEnvironment*>(&env);
  if (!lq) throw Error(ErrorKind::EnvMismatch, "not an LQ environment");
  return lq->terminal_weight();
}

const MountainCarParams& mountain_car_params(const Environment& env) {
  const auto* mc = dynamic_cast<const MountainCarEnvironment*>(&env);
  if (!mc) throw Error(ErrorKind::EnvMismatch, "not a mountain car environment");
  return mc->params();
}

const CartPoleParams& cartpole_params(const Environment& env) {
  const auto* cp = dynamic_cast<const CartPoleEnvironment*>(&env);
  if (!cp) throw Error(ErrorKind::EnvMismatch, "not a cart pole environment");
  return cp->params();
}

std::size_t shape_resolution(const Environment& env) {
  const auto* s = dynamic_cast<const ShapeEnvironment*>(&env);
  if (!s) throw Error(ErrorKind::EnvMismatch, "not a shape environment");
  return s->resolution();
}

}  // namespace hamopt
