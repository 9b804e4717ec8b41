#include "hamopt/dynamics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "hamopt/error.hpp"
#include "hamopt/random.hpp"

namespace hamopt {

Vec PhasePoint::joined() const {
  Vec x(q);
  x.insert(x.end(), p.begin(), p.end());
  return x;
}

PhasePoint PhasePoint::split(std::span<const double> x) {
  if (x.size() % 2 != 0) throw Error(ErrorKind::ShapeError, "phase point needs an even length");
  const std::size_t n = x.size() / 2;
  return {Vec(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n)),
          Vec(x.begin() + static_cast<std::ptrdiff_t>(n), x.end())};
}

// ---------------------------------------------------------------------------

MlpHamiltonian::MlpHamiltonian(const Mlp& net) : net_(&net) {
  if (net.output_dim() != 1 || net.input_dim() % 2 != 0) {
    throw Error(ErrorKind::ShapeError, "a Hamiltonian network maps (q, p) to a scalar");
  }
}

double MlpHamiltonian::value(std::span<const double> x) const { return net_->forward(x)[0]; }

double MlpHamiltonian::value_and_gradient(std::span<const double> x, std::span<double> gradient) const {
  return net_->value_and_input_gradient(x, gradient);
}

double ReducedHamiltonian::value(std::span<const double> x) const {
  const PhasePoint pt = PhasePoint::split(x);
  return reduced_hamiltonian(*env_, pt.q, pt.p);
}

double ReducedHamiltonian::value_and_gradient(std::span<const double> x, std::span<double> gradient) const {
  const auto r = ad::value_and_gradient(
      [this](ad::Tape& tape, ad::Var v) { return reduced_hamiltonian_expr(tape, *env_, v); }, x);
  std::copy(r.gradient.begin(), r.gradient.end(), gradient.begin());
  return r.value;
}

double FunctionHamiltonian::value(std::span<const double> x) const {
  ad::Tape tape;
  return fn_(tape, tape.constant(x)).scalar();
}

double FunctionHamiltonian::value_and_gradient(std::span<const double> x, std::span<double> gradient) const {
  const auto r = ad::value_and_gradient(fn_, x);
  std::copy(r.gradient.begin(), r.gradient.end(), gradient.begin());
  return r.value;
}

HamiltonianExpr mlp_expr(const BoundMlp& net) {
  return [net](const ad::Var& x) {
    const auto r = net.value_and_input_gradient(x);
    return HamiltonianTerms{r.value, r.gradient};
  };
}

// ---------------------------------------------------------------------------

std::vector<double> control_jacobian(const Environment& env, std::span<const double> q) {
  const std::size_t n = env.state_dim();
  const std::size_t m = env.control_dim();
  if (q.size() != n) throw Error(ErrorKind::ShapeError, "state has the wrong dimension");
  Vec v(m, 0.0);
  const Vec f0 = env.flow(q, v);
  std::vector<double> fu(n * m);
  for (std::size_t j = 0; j < m; ++j) {
    v[j] = 1.0;
    const Vec fj = env.flow(q, v);
    v[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) fu[i * m + j] = fj[i] - f0[i];
  }
  return fu;
}

double affinity_residual(const Environment& env, std::span<const double> q, std::size_t probes,
                         std::uint64_t seed) {
  const std::size_t m = env.control_dim();
  Rng rng(seed);
  const Vec zero(m, 0.0);
  const Vec f0 = env.flow(q, zero);
  double worst = 0.0;
  Vec v1(m), v2(m), v12(m);
  for (std::size_t k = 0; k < probes; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      v1[j] = rng.uniform(-1.0, 1.0);
      v2[j] = rng.uniform(-1.0, 1.0);
      v12[j] = v1[j] + v2[j];
    }
    const Vec a = env.flow(q, v12);
    const Vec b = env.flow(q, v1);
    const Vec c = env.flow(q, v2);
    double r2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double r = a[i] - b[i] - c[i] + f0[i];
      r2 += r * r;
    }
    worst = std::max(worst, std::sqrt(r2));
  }
  return worst;
}

std::vector<double> extract_control_jacobian(const Environment& env, std::span<const double> q) {
  constexpr double kTolerance = 1e-9;
  const double residual = affinity_residual(env, q, 8, 0x5eedULL);
  if (!(residual < kTolerance)) {
    throw Error(ErrorKind::NotAffineInControl,
                std::string(env.name()) + ": affinity residual " + std::to_string(residual));
  }
  return control_jacobian(env, q);
}

Vec optimal_control(const Environment& env, std::span<const double> q, std::span<const double> p) {
  const std::size_t n = env.state_dim();
  const std::size_t m = env.control_dim();
  if (p.size() != n) throw Error(ErrorKind::ShapeError, "costate has the wrong dimension");
  const auto fu = control_jacobian(env, q);
  Vec u(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) u[j] -= fu[i * m + j] * p[i];
  }
  return u;
}

double reduced_hamiltonian(const Environment& env, std::span<const double> q, std::span<const double> p) {
  const Vec u = optimal_control(env, q, p);
  const Vec f = env.flow(q, u);
  double h = env.running_cost(q, u);
  for (std::size_t i = 0; i < f.size(); ++i) h += p[i] * f[i];
  return h;
}

ad::Var reduced_hamiltonian_expr(ad::Tape& tape, const Environment& env, const ad::Var& x) {
  const std::size_t n = env.state_dim();
  const std::size_t m = env.control_dim();
  if (x.size() != 2 * n) throw Error(ErrorKind::ShapeError, "phase point has the wrong dimension");
  const VarList q = tape.split(tape.slice(x, 0, n));
  const ad::Var p = tape.slice(x, n, n);

  VarList v(m, tape.constant(0.0));
  const ad::Var f0 = tape.stack(env.flow(tape, q, v));
  ad::Var h = tape.add(tape.dot(p, f0), env.running_cost(tape, q));
  for (std::size_t j = 0; j < m; ++j) {
    v[j] = tape.constant(1.0);
    const ad::Var column = tape.sub(tape.stack(env.flow(tape, q, v)), f0);
    v[j] = tape.constant(0.0);
    h = tape.axpy(h, -0.5, tape.square(tape.dot(column, p)));
  }
  return h;
}

PhasePoint hamiltonian_field(const Hamiltonian& h, const PhasePoint& point) {
  const Vec x = point.joined();
  Vec grad(x.size());
  h.value_and_gradient(x, grad);
  const std::size_t n = point.q.size();
  PhasePoint out{Vec(n), Vec(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.q[i] = grad[n + i];
    out.p[i] = -grad[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(out.q[i]) || !std::isfinite(out.p[i])) {
      throw Error(ErrorKind::NonFiniteValue, "Hamiltonian gradient is not finite");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_rollout_args(double horizon, std::size_t steps) {
  if (steps == 0) throw Error(ErrorKind::InvalidSteps, "rollout needs at least one step");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error(ErrorKind::InvalidSteps, "horizon must be positive");
}

}  // namespace

Trajectory rollout(const Hamiltonian& h, const PhasePoint& start, double horizon, std::size_t steps,
                   Direction direction) {
  check_rollout_args(horizon, steps);
  const std::size_t n = h.dim();
  if (start.q.size() != n || start.p.size() != n) throw Error(ErrorKind::ShapeError, "start point dimension");
  const double sign = direction == Direction::Forward ? 1.0 : -1.0;
  const double dt = horizon / static_cast<double>(steps);

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.points.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.points.push_back(start);

  Vec x = start.joined();
  Vec grad(2 * n), stage(2 * n);
  std::array<Vec, 4> k;
  for (auto& kk : k) kk.resize(2 * n);
  auto field = [&](const Vec& at, Vec& out) {
    h.value_and_gradient(at, grad);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = sign * grad[n + i];
      out[n + i] = -sign * grad[i];
    }
  };
  for (std::size_t s = 0; s < steps; ++s) {
    try {
      field(x, k[0]);
      for (std::size_t i = 0; i < 2 * n; ++i) stage[i] = x[i] + 0.5 * dt * k[0][i];
      field(stage, k[1]);
      for (std::size_t i = 0; i < 2 * n; ++i) stage[i] = x[i] + 0.5 * dt * k[1][i];
      field(stage, k[2]);
      for (std::size_t i = 0; i < 2 * n; ++i) stage[i] = x[i] + dt * k[2][i];
      field(stage, k[3]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteValue) throw;
      throw Error(ErrorKind::NonFiniteValue, "rollout state became non-finite at step " + std::to_string(s + 1));
    }
    for (std::size_t i = 0; i < 2 * n; ++i) {
      x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
      if (!std::isfinite(x[i])) {
        throw Error(ErrorKind::NonFiniteValue, "rollout state became non-finite at step " + std::to_string(s + 1));
      }
    }
    traj.times.push_back(dt * static_cast<double>(s + 1));
    traj.points.push_back(PhasePoint::split(x));
  }
  return traj;
}

ad::Var rollout_expr(const HamiltonianExpr& h, const ad::Var& start, double horizon, std::size_t steps,
                     Direction direction, std::vector<ad::Var>* states) {
  check_rollout_args(horizon, steps);
  ad::Tape& tape = *start.tape();
  const double sign = direction == Direction::Forward ? 1.0 : -1.0;
  const double dt = horizon / static_cast<double>(steps);
  auto field = [&](const ad::Var& x) { return tape.symplectic(h(x).gradient, sign); };

  ad::Var x = start;
  if (states) {
    states->clear();
    states->push_back(x);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    try {
      const ad::Var k1 = field(x);
      const ad::Var k2 = field(tape.axpy(x, 0.5 * dt, k1));
      const ad::Var k3 = field(tape.axpy(x, 0.5 * dt, k2));
      const ad::Var k4 = field(tape.axpy(x, dt, k3));
      ad::Var incr = tape.add(tape.add(k1, k4), tape.scale(tape.add(k2, k3), 2.0));
      x = tape.axpy(x, dt / 6.0, incr);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteValue) throw;
      throw Error(ErrorKind::NonFiniteValue, "rollout state became non-finite at step " + std::to_string(s + 1));
    }
    if (states) states->push_back(x);
  }
  return x;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.points.empty() ? 0 : traj.points.front().q.size();
  out << "t";
  for (std::size_t i = 0; i < n; ++i) out << ",q_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",p_" << i;
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    put(traj.times[k]);
    for (double v : traj.points[k].q) out << ',', put(v);
    for (double v : traj.points[k].p) out << ',', put(v);
    out << '\n';
  }
}

}  // namespace hamopt
