#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "hamopt/autodiff.hpp"
#include "hamopt/environments.hpp"
#include "hamopt/nets.hpp"

namespace hamopt {

struct PhasePoint {
  Vec q;
  Vec p;

  // (q, p) as one vector of length 2n.
  Vec joined() const;
  static PhasePoint split(std::span<const double> x);
};

struct Trajectory {
  Vec times;
  std::vector<PhasePoint> points;

  const PhasePoint& back() const { return points.back(); }
};

enum class Direction { Forward, Backward };

// A scalar function of the joined phase point x = (q, p).
class Hamiltonian {
 public:
  virtual ~Hamiltonian() = default;
  virtual std::size_t dim() const = 0;  // n; x has length 2n
  virtual double value(std::span<const double> x) const = 0;
  virtual double value_and_gradient(std::span<const double> x, std::span<double> gradient) const = 0;
};

// Learned h_theta: the Mlp maps (q, p) to a scalar.
class MlpHamiltonian final : public Hamiltonian {
 public:
  explicit MlpHamiltonian(const Mlp& net);
  std::size_t dim() const override { return net_->input_dim() / 2; }
  double value(std::span<const double> x) const override;
  double value_and_gradient(std::span<const double> x, std::span<double> gradient) const override;

 private:
  const Mlp* net_;
};

// Reduced Hamiltonian of an environment, h = <p, f0> - |f_u^T p|^2 / 2 + l1,
// differentiated on a tape.
class ReducedHamiltonian final : public Hamiltonian {
 public:
  explicit ReducedHamiltonian(const Environment& env) : env_(&env) {}
  std::size_t dim() const override { return env_->state_dim(); }
  double value(std::span<const double> x) const override;
  double value_and_gradient(std::span<const double> x, std::span<double> gradient) const override;

 private:
  const Environment* env_;
};

// Any tape-expressible scalar function of x.
class FunctionHamiltonian final : public Hamiltonian {
 public:
  FunctionHamiltonian(std::size_t dim, ad::ScalarFunction fn) : dim_(dim), fn_(std::move(fn)) {}
  std::size_t dim() const override { return dim_; }
  double value(std::span<const double> x) const override;
  double value_and_gradient(std::span<const double> x, std::span<double> gradient) const override;

 private:
  std::size_t dim_;
  ad::ScalarFunction fn_;
};

// A Hamiltonian as tape expressions: its value and its x-gradient, both
// functions of x, so that a loss through the gradient can itself be
// differentiated.
struct HamiltonianTerms {
  ad::Var value;
  ad::Var gradient;
};
using HamiltonianExpr = std::function<HamiltonianTerms(const ad::Var& x)>;

HamiltonianExpr mlp_expr(const BoundMlp& net);

// f_u(q) as an n x m row-major matrix from the probe f(q, e_j) - f(q, 0).
// extract_control_jacobian additionally verifies affinity on random probes.
std::vector<double> control_jacobian(const Environment& env, std::span<const double> q);
std::vector<double> extract_control_jacobian(const Environment& env, std::span<const double> q);

// Largest affinity residual |f(q, v1+v2) - f(q, v1) - f(q, v2) + f(q, 0)|
// over `probes` random control pairs.
double affinity_residual(const Environment& env, std::span<const double> q, std::size_t probes,
                         std::uint64_t seed);

// u = -f_u(q)^T p.
Vec optimal_control(const Environment& env, std::span<const double> q, std::span<const double> p);

// <p, f(q, u)> + l1(q) + |u|^2 / 2 at the optimal u.
double reduced_hamiltonian(const Environment& env, std::span<const double> q, std::span<const double> p);

// Tape form of the affine closed form, as a function of x = (q, p).
ad::Var reduced_hamiltonian_expr(ad::Tape& tape, const Environment& env, const ad::Var& x);

// (dh/dp, -dh/dq).
PhasePoint hamiltonian_field(const Hamiltonian& h, const PhasePoint& point);

// Classical RK4 with dt = T / N on the field of h (Forward) or of -h (Backward).
Trajectory rollout(const Hamiltonian& h, const PhasePoint& start, double horizon, std::size_t steps,
                   Direction direction = Direction::Forward);

// The same scheme on a tape; returns the final joined state. When `states` is
// given it receives all N+1 states.
ad::Var rollout_expr(const HamiltonianExpr& h, const ad::Var& start, double horizon, std::size_t steps,
                     Direction direction = Direction::Forward, std::vector<ad::Var>* states = nullptr);

// CSV with header t,q_0..q_{n-1},p_0..p_{n-1}.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace hamopt
