#include "hamopt/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hamopt/error.hpp"
#include "hamopt/training.hpp"

namespace hamopt {

ControlSchedule ControlSchedule::zeros(double horizon, std::size_t knots, std::size_t control_dim) {
  if (knots == 0) throw Error(ErrorKind::InvalidSteps, "a schedule needs at least one knot");
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidSteps, "horizon must be positive");
  return {horizon, knots, control_dim, std::vector<double>(knots * control_dim, 0.0)};
}

// ---------------------------------------------------------------------------

PhasePoint LqSolution::at(double t) const {
  PhasePoint pt{Vec(q0.size()), Vec(q0.size())};
  const double ch = std::cosh(t);
  const double sh = std::sinh(t);
  for (std::size_t i = 0; i < q0.size(); ++i) {
    // q = A cosh t + B sinh t with A = q0, B = -p0; p = -q'.
    pt.q[i] = q0[i] * ch - p0[i] * sh;
    pt.p[i] = -(q0[i] * sh - p0[i] * ch);
  }
  return pt;
}

Vec LqSolution::control(double t) const {
  Vec v = at(t).p;
  for (double& x : v) x = -x;
  return v;
}

LqSolution lq_analytic(std::span<const double> q0, double terminal_weight, double horizon) {
  if (!(terminal_weight >= 0.0)) throw Error(ErrorKind::InvalidConfig, "terminal weight must be non-negative");
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidSteps, "horizon must be positive");
  const double ch = std::cosh(horizon);
  const double sh = std::sinh(horizon);
  const double gain = (terminal_weight * ch + sh) / (ch + terminal_weight * sh);
  LqSolution s;
  s.q0.assign(q0.begin(), q0.end());
  s.p0 = s.q0;
  for (double& p : s.p0) p *= gain;
  s.terminal_weight = terminal_weight;
  s.horizon = horizon;
  // The value function is q0^T K q0 / 2 with p0 = K q0.
  for (std::size_t i = 0; i < q0.size(); ++i) s.cost += 0.5 * q0[i] * s.p0[i];
  return s;
}

ControlSchedule sample_controls(const LqSolution& solution, std::size_t knots) {
  ControlSchedule sched = ControlSchedule::zeros(solution.horizon, knots, solution.q0.size());
  for (std::size_t k = 0; k < knots; ++k) {
    const Vec v = solution.control(sched.dt() * static_cast<double>(k));
    std::copy(v.begin(), v.end(), sched.values.begin() + static_cast<std::ptrdiff_t>(k * sched.control_dim));
  }
  return sched;
}

// ---------------------------------------------------------------------------

namespace {

void check_schedule(const Environment& env, std::span<const double> q0, const ControlSchedule& s) {
  if (s.knots == 0) throw Error(ErrorKind::InvalidSteps, "a schedule needs at least one knot");
  if (!(s.horizon > 0.0)) throw Error(ErrorKind::InvalidSteps, "horizon must be positive");
  if (s.control_dim != env.control_dim() || s.values.size() != s.knots * s.control_dim) {
    throw Error(ErrorKind::ShapeError, "schedule does not match the environment's control dimension");
  }
  if (q0.size() != env.state_dim()) throw Error(ErrorKind::ShapeError, "q0 has the wrong dimension");
  for (double v : s.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "schedule contains a non-finite control");
  }
}

template <class State, class Flow, class Axpy>
State rk4_step(const State& q, double dt, Flow&& flow, Axpy&& axpy) {
  const State k1 = flow(q);
  const State k2 = flow(axpy(q, 0.5 * dt, k1));
  const State k3 = flow(axpy(q, 0.5 * dt, k2));
  const State k4 = flow(axpy(q, dt, k3));
  State out = q;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
  return out;
}

}  // namespace

Simulation simulate(const Environment& env, std::span<const double> q0, const ControlSchedule& schedule) {
  check_schedule(env, q0, schedule);
  const double dt = schedule.dt();
  Simulation sim;
  sim.times.reserve(schedule.knots + 1);
  sim.states.reserve(schedule.knots + 1);
  Vec q(q0.begin(), q0.end());
  sim.times.push_back(0.0);
  sim.states.push_back(q);
  double running = 0.0;
  auto axpy = [](const Vec& a, double c, const Vec& b) {
    Vec r(a);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += c * b[i];
    return r;
  };
  for (std::size_t k = 0; k < schedule.knots; ++k) {
    const auto v = schedule.at(k);
    // Trapezoid on each interval with its held control: l1 at both ends, exact control energy.
    running += 0.5 * env.running_cost(q, v);
    q = rk4_step(q, dt, [&](const Vec& s) { return env.flow(s, v); }, axpy);
    for (double x : q) {
      if (!std::isfinite(x)) {
        throw Error(ErrorKind::NonFiniteValue, "simulated state became non-finite at step " + std::to_string(k + 1));
      }
    }
    sim.times.push_back(dt * static_cast<double>(k + 1));
    sim.states.push_back(q);
    running += 0.5 * env.running_cost(q, v);
  }
  sim.cost = dt * running + env.terminal_cost(q);
  return sim;
}

double evaluate_cost(const Environment& env, std::span<const double> q0, const ControlSchedule& schedule) {
  return simulate(env, q0, schedule).cost;
}

// ---------------------------------------------------------------------------

DirectResult direct_optimize(const Environment& env, std::span<const double> q0, double horizon, std::size_t knots,
                             std::size_t iterations, const DirectOptions& options) {
  const std::size_t m = env.control_dim();
  DirectResult result;
  result.schedule = ControlSchedule::zeros(horizon, knots, m);
  check_schedule(env, q0, result.schedule);
  const double dt = result.schedule.dt();

  // Record J(controls) once; later iterates replay it with new leaf values.
  ad::Tape tape;
  const ad::Var controls = tape.variable(result.schedule.values);
  VarList q = tape.split(tape.constant(q0));
  auto axpy = [&tape](const VarList& a, double c, const VarList& b) {
    VarList r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = tape.axpy(a[i], c, b[i]);
    return r;
  };
  auto full_cost = [&](const VarList& state, const ad::Var& v) {
    return tape.axpy(env.running_cost(tape, state), 0.5, tape.squared_norm(v));
  };
  ad::Var running = tape.constant(0.0);
  for (std::size_t k = 0; k < knots; ++k) {
    const ad::Var control = tape.slice(controls, k * m, m);
    const VarList v = tape.split(control);
    running = tape.axpy(running, 0.5, full_cost(q, control));
    q = rk4_step(q, dt, [&](const VarList& s) { return env.flow(tape, s, v); }, axpy);
    running = tape.axpy(running, 0.5, full_cost(q, control));
  }
  ad::ExternalScalar terminal;
  terminal.value = [&env](std::span<const double> x) { return env.terminal_cost(x); };
  terminal.gradient = [&env](std::span<const double> x, std::span<double> g) {
    const Vec grad = env.terminal_grad(x);
    std::copy(grad.begin(), grad.end(), g.begin());
  };
  const ad::Var cost = tape.add(tape.scale(running, dt), tape.external(tape.stack(q), std::move(terminal)));

  std::vector<double> params = result.schedule.values;
  Adam adam(params.size(), options.learning_rate);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> grad;
  for (std::size_t it = 0; it <= iterations; ++it) {
    try {
      if (it > 0) {
        tape.set_leaf(controls, params);
        tape.replay();
      }
      if (it < iterations) {
        const ad::Gradients g = tape.backward(cost);
        grad.assign(g[controls].begin(), g[controls].end());
      }
    } catch (const Error& e) {
      // Iterates that leave the problem's domain (a vanishing shape, a
      // diverging state) end the search; the best iterate so far stands.
      if (it == 0) throw;
      if (e.kind() == ErrorKind::EmptyShape || e.kind() == ErrorKind::FullShape ||
          e.kind() == ErrorKind::NonFiniteValue) {
        break;
      }
      throw;
    }
    const double total = cost.scalar();
    result.history.push_back(total);
    if (it == 0) result.initial_cost = total;
    if (total < best) {
      best = total;
      result.schedule.values = params;
      result.cost = total;
    }
    if (it == iterations) break;
    adam.step(params, grad);
  }
  return result;
}

}  // namespace hamopt
