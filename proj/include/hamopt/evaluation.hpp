#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hamopt/dynamics.hpp"
#include "hamopt/io.hpp"
#include "hamopt/oracle.hpp"
#include "hamopt/parallel.hpp"

namespace hamopt {

// The learned open-loop planner: p0 = P_phi(q0), then the flow of the learned
// Hamiltonian (h_theta after phase 1, h_theta1 after phase 2).
struct Planner {
  Mlp hamiltonian;
  Mlp costate;

  // Throws EnvMismatch when the checkpoint belongs to another environment.
  static Planner from_checkpoint(const Checkpoint& ckpt, const Environment& env);
};

struct PlanOutcome {
  Trajectory plan;            // learned (q, p) trajectory
  ControlSchedule controls;   // u_k = -f_u(q_k)^T p_k at the plan's knots
  Simulation simulation;      // the controls applied to the true dynamics
};

Trajectory plan(const Planner& planner, std::span<const double> q0, double horizon, std::size_t steps);
ControlSchedule plan_controls(const Environment& env, const Trajectory& plan, double horizon);
// Costs are never taken from the learned h: the controls are re-simulated.
PlanOutcome execute_plan(const Environment& env, const Planner& planner, std::span<const double> q0, double horizon,
                         std::size_t steps);

struct ComparisonRow {
  std::uint64_t q0_seed = 0;
  double learned = 0.0;
  double direct = 0.0;
  double zero = 0.0;
  std::optional<double> analytic;
};

struct CompareOptions {
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  double horizon = 1.0;
  std::size_t steps = 50;
  std::size_t direct_iterations = 2000;
  ExecutionPolicy policy = ExecutionPolicy::Parallel;
};

std::uint64_t evaluation_seed(std::uint64_t seed, std::size_t index);

std::vector<ComparisonRow> oracle_compare(const Environment& env, const Checkpoint& ckpt, const CompareOptions& options);
std::vector<std::string> comparison_header(bool with_analytic);
std::vector<std::vector<std::string>> comparison_rows(const std::vector<ComparisonRow>& rows);

// Trapezoid rule of samples on a grid.
double trapezoid(std::span<const double> times, std::span<const double> values);

}  // namespace hamopt
