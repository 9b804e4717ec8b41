#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hamopt/dynamics.hpp"
#include "hamopt/environments.hpp"

namespace hamopt {

// Piecewise-constant controls: knot k holds on [k dt, (k+1) dt), dt = T / N.
struct ControlSchedule {
  double horizon = 1.0;
  std::size_t knots = 0;
  std::size_t control_dim = 0;
  std::vector<double> values;  // knots x control_dim, row-major

  static ControlSchedule zeros(double horizon, std::size_t knots, std::size_t control_dim);
  std::span<const double> at(std::size_t k) const { return {values.data() + k * control_dim, control_dim}; }
  double dt() const { return horizon / static_cast<double>(knots); }
};

// Analytic solution of the LQ problem (f = v, l1 = |q|^2/2, g = c|q|^2/2):
// q' = -p, p' = -q, p(T) = c q(T).
struct LqSolution {
  Vec q0;
  Vec p0;
  double cost = 0.0;
  double terminal_weight = 0.0;
  double horizon = 0.0;

  PhasePoint at(double t) const;
  // The optimal control v(t) = -p(t).
  Vec control(double t) const;
};

LqSolution lq_analytic(std::span<const double> q0, double terminal_weight, double horizon);

struct Simulation {
  Vec times;
  std::vector<Vec> states;
  double cost = 0.0;
};

// RK4 on q' = f(q, v(t)) with zero-order hold; per-interval trapezoid rule for
// the running cost using the interval's held control; plus g(q_N).
Simulation simulate(const Environment& env, std::span<const double> q0, const ControlSchedule& schedule);
double evaluate_cost(const Environment& env, std::span<const double> q0, const ControlSchedule& schedule);

// Samples the analytic LQ control at the knots.
ControlSchedule sample_controls(const LqSolution& solution, std::size_t knots);

struct DirectResult {
  ControlSchedule schedule;
  double cost = 0.0;
  double initial_cost = 0.0;
  std::vector<double> history;  // cost at every evaluated iterate
};

struct DirectOptions {
  double learning_rate = 1e-2;
};

// Adam on all N*m knot controls, gradients through the unrolled integrator.
// Returns the best schedule seen; iterations = 0 returns the zero schedule.
DirectResult direct_optimize(const Environment& env, std::span<const double> q0, double horizon, std::size_t knots,
                             std::size_t iterations, const DirectOptions& options = {});

}  // namespace hamopt
