#include "hamopt/evaluation.hpp"

#include <string>

#include "hamopt/error.hpp"
#include "hamopt/random.hpp"
#include "hamopt/training.hpp"

namespace hamopt {

Planner Planner::from_checkpoint(const Checkpoint& ckpt, const Environment& env) {
  if (ckpt.env != env.name()) {
    throw Error(ErrorKind::EnvMismatch,
                "checkpoint was trained on '" + ckpt.env + "', not '" + std::string(env.name()) + "'");
  }
  const Phase1Nets p1 = phase1_nets(ckpt);
  Planner planner{p1.hamiltonian, p1.costate};
  if (ckpt.phase == 2) planner.hamiltonian = ckpt.network(kNetHamiltonianPhase2);
  const std::size_t n = env.state_dim();
  if (planner.hamiltonian.input_dim() != 2 * n || planner.costate.input_dim() != n ||
      planner.costate.output_dim() != n) {
    throw Error(ErrorKind::EnvMismatch, "checkpoint networks do not match the environment's dimensions");
  }
  return planner;
}

Trajectory plan(const Planner& planner, std::span<const double> q0, double horizon, std::size_t steps) {
  const PhasePoint start{Vec(q0.begin(), q0.end()), planner.costate.forward(q0)};
  return rollout(MlpHamiltonian(planner.hamiltonian), start, horizon, steps, Direction::Forward);
}

ControlSchedule plan_controls(const Environment& env, const Trajectory& plan, double horizon) {
  const std::size_t knots = plan.points.size() - 1;
  ControlSchedule sched = ControlSchedule::zeros(horizon, knots, env.control_dim());
  for (std::size_t k = 0; k < knots; ++k) {
    const Vec u = optimal_control(env, plan.points[k].q, plan.points[k].p);
    std::copy(u.begin(), u.end(), sched.values.begin() + static_cast<std::ptrdiff_t>(k * sched.control_dim));
  }
  return sched;
}

PlanOutcome execute_plan(const Environment& env, const Planner& planner, std::span<const double> q0, double horizon,
                         std::size_t steps) {
  PlanOutcome out;
  out.plan = plan(planner, q0, horizon, steps);
  out.controls = plan_controls(env, out.plan, horizon);
  out.simulation = simulate(env, q0, out.controls);
  return out;
}

std::uint64_t evaluation_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, 0xE7A1ULL, index);
}

std::vector<ComparisonRow> oracle_compare(const Environment& env, const Checkpoint& ckpt,
                                          const CompareOptions& options) {
  if (options.samples == 0) throw Error(ErrorKind::InvalidConfig, "samples must be at least 1");
  const Planner planner = Planner::from_checkpoint(ckpt, env);
  const bool analytic = env.kind() == EnvKind::Lq;
  std::vector<ComparisonRow> rows(options.samples);
  parallel_for(
      options.samples,
      [&](std::size_t i) {
        ComparisonRow& row = rows[i];
        row.q0_seed = evaluation_seed(options.seed, i);
        const Vec q0 = env.sample_q0(row.q0_seed);
        row.learned = execute_plan(env, planner, q0, options.horizon, options.steps).simulation.cost;
        const DirectResult direct =
            direct_optimize(env, q0, options.horizon, options.steps, options.direct_iterations);
        row.direct = direct.cost;
        row.zero = direct.initial_cost;
        if (analytic) row.analytic = lq_analytic(q0, lq_terminal_weight(env), options.horizon).cost;
      },
      options.policy);
  return rows;
}

std::vector<std::string> comparison_header(bool with_analytic) {
  std::vector<std::string> h{"q0_seed", "J_learned", "J_direct", "J_zero"};
  if (with_analytic) h.push_back("J_analytic");
  return h;
}

std::vector<std::vector<std::string>> comparison_rows(const std::vector<ComparisonRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    std::vector<std::string> row{std::to_string(r.q0_seed), format_double(r.learned), format_double(r.direct),
                                 format_double(r.zero)};
    if (r.analytic) row.push_back(format_double(*r.analytic));
    out.push_back(std::move(row));
  }
  return out;
}

double trapezoid(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size()) throw Error(ErrorKind::ShapeError, "trapezoid: size mismatch");
  double acc = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
  return acc;
}

}  // namespace hamopt
