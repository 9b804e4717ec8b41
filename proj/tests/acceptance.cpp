// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 2 9        selected criteria
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hamopt/cli.hpp"
#include "hamopt/dynamics.hpp"
#include "hamopt/environments.hpp"
#include "hamopt/error.hpp"
#include "hamopt/evaluation.hpp"
#include "hamopt/io.hpp"
#include "hamopt/oracle.hpp"
#include "hamopt/random.hpp"
#include "hamopt/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hamopt;

namespace {

// Integrator steps used for every training run here.
constexpr std::size_t kTrainSteps = 20;
// Grid used to re-simulate learned plans.
constexpr std::size_t kEvalSteps = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Vec> evaluation_starts(const Environment& env, std::size_t count, std::uint64_t seed) {
  std::vector<Vec> starts;
  for (std::size_t i = 0; i < count; ++i) starts.push_back(env.sample_q0(evaluation_seed(seed, i)));
  return starts;
}

Checkpoint fresh_checkpoint(const Environment& env, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  return make_phase1_checkpoint(env, cfg, init_phase1(env, seed));
}

// Phase-1 LQ run shared by criteria 2 and 9.
const Phase1Run& lq_phase1() {
  static std::optional<Phase1Run> run;
  if (!run) {
    const auto env = make_lq();
    TrainConfig cfg;
    cfg.steps = kTrainSteps;
    cfg.iterations = 3000;
    cfg.learning_rate = 1e-3;
    cfg.fhat = FhatMode::Dhdp;
    cfg.seed = 11;
    run = train_phase1(*env, cfg);
  }
  return *run;
}

// ---------------------------------------------------------------------------

Outcome criterion_autodiff() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<std::size_t>> shapes;
  for (const auto& name : environment_names()) {
    const Architecture a = architecture(*make_environment(name));
    for (const auto& dims : {a.hamiltonian, a.costate, a.encoder_trunk, a.encoder_mean, a.decoder}) {
      shapes.push_back(dims);
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    const auto& dims = shapes[k % shapes.size()];
    Mlp net = init_mlp(dims, derive_seed(2024, k));
    Rng rng(derive_seed(2025, k));
    Vec input(dims.front());
    for (double& v : input) v = rng.uniform(-1.0, 1.0);
    // Perturb biases so they are not all zero.
    for (auto& layer : net.layers()) {
      for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
    }
    // Loss sum_k w_k y_k + |y|^2 / 2 with fixed random weights.
    Vec w(dims.back());
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    auto loss_of = [&](const Mlp& m) {
      const Vec y = m.forward(input);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i] + 0.5 * y[i] * y[i];
      return s;
    };

    ad::Tape tape;
    const BoundMlp bound(tape, net, true);
    const ad::Var y = bound.forward(tape.constant(input));
    const ad::Var loss = tape.add(tape.dot(tape.constant(w), y), tape.scale(tape.squared_norm(y), 0.5));
    const auto grads = tape.backward(loss);
    Vec analytic(net.parameter_count(), 0.0);
    bound.gather_gradient(grads, analytic);

    const Vec theta = net.parameters();
    Mlp probe = net;
    const Vec reference = oracles::fd_gradient(
        [&](std::span<const double> p) {
          probe.set_parameters(p);
          return loss_of(probe);
        },
        theta, 1e-5);
    worst = std::max(worst, oracles::max_relative_error(analytic, reference));
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-5 && elapsed < 30.0,
          fmt("100 MLPs, max relative error %.3g (< 1e-5), %.1f s (< 30 s)", worst, elapsed)};
}

Outcome criterion_lq_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const auto env = make_lq();
  const Phase1Run& run = lq_phase1();
  const Planner planner = Planner::from_checkpoint(run.checkpoint, *env);
  const oracles::LqBvp bvp(1.0, 1.0);
  double costate_error = 0.0, learned = 0.0, optimal = 0.0;
  const auto starts = evaluation_starts(*env, 100, 77);
  for (const Vec& q0 : starts) {
    const Vec p0 = planner.costate.forward(q0);
    double d2 = 0.0;
    for (std::size_t i = 0; i < q0.size(); ++i) d2 += (p0[i] - bvp.gain * q0[i]) * (p0[i] - bvp.gain * q0[i]);
    costate_error += std::sqrt(d2);
    learned += execute_plan(*env, planner, q0, 1.0, kEvalSteps).simulation.cost;
    optimal += bvp.cost(q0);
  }
  costate_error /= static_cast<double>(starts.size());
  const double gap = std::abs(learned / optimal - 1.0);
  const double elapsed = seconds_since(start);
  return {costate_error < 0.05 && gap < 0.05 && elapsed < 600.0,
          fmt("mean |P(q0) - q0| %.4f (< 0.05), J_learned/J* - 1 = %+.4f (|.| < 0.05), %.0f s", costate_error,
              learned / optimal - 1.0, elapsed)};
}

Outcome criterion_direct_oracle() {
  const auto lq = make_lq();
  const oracles::LqBvp bvp(1.0, 1.0);
  double worst_gap = 0.0;
  std::vector<Vec> starts{{1.0, 0.0}};
  for (const Vec& q : evaluation_starts(*lq, 4, 5)) starts.push_back(q);
  for (const Vec& q0 : starts) {
    const DirectResult r = direct_optimize(*lq, q0, 1.0, 50, 2000);
    worst_gap = std::max(worst_gap, std::abs(r.cost / bvp.cost(q0) - 1.0));
  }
  bool monotone = true;
  std::string per_env;
  for (const auto& name : environment_names()) {
    const auto env = make_environment(name);
    const bool shape = env->kind() == EnvKind::Shape;
    const std::size_t knots = shape ? 10 : 50;
    const std::size_t iters = shape ? 40 : 300;
    for (std::size_t i = 0; i < 2; ++i) {
      const Vec q0 = env->sample_q0(evaluation_seed(31, i));
      const DirectResult r = direct_optimize(*env, q0, 1.0, knots, iters);
      monotone = monotone && r.cost <= r.initial_cost;
      if (i == 0) per_env += fmt(" %s %.4g<=%.4g", name.c_str(), r.cost, r.initial_cost);
    }
  }
  return {worst_gap < 0.01 && monotone,
          fmt("LQ worst |J/J* - 1| %.2e (< 0.01); best-seen never above iteration 0:%s", worst_gap,
              per_env.c_str())};
}

Outcome criterion_flow_properties() {
  double drift = 0.0, inversion = 0.0;
  std::string per_env;
  for (const auto& name : environment_names()) {
    const auto env = make_environment(name);
    const ReducedHamiltonian h(*env);
    double env_drift = 0.0, env_inv = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const Vec q0 = env->sample_q0(evaluation_seed(41, i));
      Rng rng(derive_seed(42, i));
      Vec p0(q0.size());
      for (double& v : p0) v = rng.uniform(-0.2, 0.2);
      const PhasePoint start{q0, p0};
      const Trajectory fwd = rollout(h, start, 1.0, 100, Direction::Forward);
      const double h0 = h.value(start.joined());
      for (const auto& pt : fwd.points) env_drift = std::max(env_drift, std::abs(h.value(pt.joined()) - h0));
      const Trajectory back = rollout(h, fwd.back(), 1.0, 100, Direction::Backward);
      const Vec x0 = start.joined();
      const Vec x1 = back.back().joined();
      for (std::size_t k = 0; k < x0.size(); ++k) env_inv = std::max(env_inv, std::abs(x0[k] - x1[k]));
    }
    per_env += fmt(" %s %.1e/%.1e", name.c_str(), env_drift, env_inv);
    drift = std::max(drift, env_drift);
    inversion = std::max(inversion, env_inv);
  }
  return {drift < 1e-5 && inversion < 1e-4,
          fmt("max energy drift %.2e (< 1e-5), forward-backward %.2e (< 1e-4); drift/return:%s", drift, inversion,
              per_env.c_str())};
}

Outcome criterion_stationarity() {
  double worst = 0.0;
  for (const auto& name : environment_names()) {
    const auto env = make_environment(name);
    const std::size_t m = env->control_dim();
    for (std::size_t i = 0; i < 100; ++i) {
      const Vec q = env->sample_q0(evaluation_seed(51, i));
      Rng rng(derive_seed(52, i));
      Vec p(q.size());
      for (double& v : p) v = rng.uniform(-2.0, 2.0);
      const Vec u = optimal_control(*env, q, p);
      // H(q, p, v) = <p, f(q, v)> + l1(q) + |v|^2 / 2, through the black boxes.
      auto hamiltonian = [&](std::span<const double> v) {
        const Vec f = env->flow(q, v);
        double s = env->running_cost(q);
        for (std::size_t k = 0; k < f.size(); ++k) s += p[k] * f[k];
        for (std::size_t k = 0; k < m; ++k) s += 0.5 * v[k] * v[k];
        return s;
      };
      for (double g : oracles::fd_gradient(hamiltonian, u, 1e-3)) worst = std::max(worst, std::abs(g));
    }
  }
  return {worst < 1e-6, fmt("max |dH/dv| at the extracted control %.2e (< 1e-6), 100 points x 4 envs", worst)};
}

Outcome criterion_mountain_car() {
  const auto start = std::chrono::steady_clock::now();
  const auto env = make_mountain_car();
  const double goal = mountain_car_params(*env).goal_position;
  TrainConfig cfg;
  cfg.steps = kTrainSteps;
  cfg.iterations = 3000;
  cfg.seed = 13;
  const Phase1Run run = train_phase1(*env, cfg);
  auto reach_rate = [&](const Checkpoint& ckpt, double& best_x) {
    const Planner planner = Planner::from_checkpoint(ckpt, *env);
    std::size_t hits = 0;
    best_x = -1e9;
    const auto starts = evaluation_starts(*env, 25, 61);
    for (const Vec& q0 : starts) {
      double top = -1e9;
      try {
        for (const Vec& q : execute_plan(*env, planner, q0, 1.0, kEvalSteps).simulation.states) top = std::max(top, q[0]);
      } catch (const Error&) {
      }
      best_x = std::max(best_x, top);
      if (top >= goal) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(starts.size());
  };
  double trained_x = 0.0, fresh_x = 0.0;
  const double trained = reach_rate(run.checkpoint, trained_x);
  const double fresh = reach_rate(fresh_checkpoint(*env, 13), fresh_x);
  const double elapsed = seconds_since(start);
  return {trained >= 0.8 && fresh <= 0.2 && elapsed < 900.0,
          fmt("reach x >= %.2f: trained %.0f%% (>= 80%%, best x %.3f), fresh %.0f%% (<= 20%%, best x %.3f), %.0f s",
              goal, 100.0 * trained, trained_x, 100.0 * fresh, fresh_x, elapsed)};
}

Outcome criterion_cart_pole() {
  const auto env = make_cartpole();
  TrainConfig cfg;
  cfg.steps = kTrainSteps;
  cfg.iterations = 2000;
  cfg.seed = 17;
  const Phase1Run run = train_phase1(*env, cfg);
  auto mean_angle_cost = [&](const Checkpoint& ckpt) {
    const Planner planner = Planner::from_checkpoint(ckpt, *env);
    double total = 0.0;
    const auto starts = evaluation_starts(*env, 20, 71);
    for (const Vec& q0 : starts) {
      try {
        const Simulation sim = execute_plan(*env, planner, q0, 1.0, kEvalSteps).simulation;
        Vec theta2;
        for (const Vec& q : sim.states) theta2.push_back(q[2] * q[2]);
        total += trapezoid(sim.times, theta2);
      } catch (const Error&) {
        total += std::numeric_limits<double>::infinity();
      }
    }
    return total / static_cast<double>(starts.size());
  };
  const double trained = mean_angle_cost(run.checkpoint);
  const double fresh = mean_angle_cost(fresh_checkpoint(*env, 17));
  return {trained <= 0.25 * fresh,
          fmt("mean integral of theta^2: trained %.3e, fresh %.3e, ratio %.3f (<= 0.25)", trained, fresh,
              trained / fresh)};
}

Outcome criterion_shape() {
  const std::size_t res = 64;
  DenseField disk{res, Vec(res * res)};
  for (std::size_t r = 0; r < res; ++r) {
    for (std::size_t c = 0; c < res; ++c) {
      const double x = static_cast<double>(c) / static_cast<double>(res - 1) - 0.5;
      const double y = static_cast<double>(r) / static_cast<double>(res - 1) - 0.5;
      disk.values[r * res + c] = 0.3 - std::hypot(x, y);
    }
  }
  const double f_disk = shape_functional(disk);
  const double disk_error = std::abs(f_disk / oracles::disk_functional() - 1.0);

  const auto env = make_shape(res);
  double lowest = 1e9;
  for (std::size_t i = 0; i < 50; ++i) {
    lowest = std::min(lowest, shape_functional(ShapeGrid::from_controls(env->sample_q0(derive_seed(81, i)), res)));
  }

  TrainConfig cfg;
  cfg.steps = 10;
  cfg.iterations = 400;
  cfg.batch_size = 16;
  cfg.seed = 19;
  const Phase1Run run = train_phase1(*env, cfg);
  const Planner planner = Planner::from_checkpoint(run.checkpoint, *env);
  const auto starts = evaluation_starts(*env, 20, 83);
  std::size_t improved = 0;
  for (const Vec& q0 : starts) {
    try {
      const Simulation sim = execute_plan(*env, planner, q0, 1.0, 10).simulation;
      if (shape_functional(ShapeGrid::from_controls(sim.states.back(), res)) <=
          0.9 * shape_functional(ShapeGrid::from_controls(q0, res))) {
        ++improved;
      }
    } catch (const Error&) {
    }
  }
  const double rate = static_cast<double>(improved) / static_cast<double>(starts.size());
  return {disk_error < 0.03 && lowest >= oracles::disk_functional() - 0.1 && rate >= 0.7,
          fmt("F(disk) %.4f vs 2 sqrt(pi) %.4f (err %.2f%% < 3%%); min F over 50 shapes %.4f (>= %.4f); "
              "F(q_T) <= 0.9 F(q0) on %.0f%% of starts (>= 70%%)",
              f_disk, oracles::disk_functional(), 100.0 * disk_error, lowest, oracles::disk_functional() - 0.1,
              100.0 * rate)};
}

Outcome criterion_phase2() {
  const auto env = make_lq();
  const Checkpoint& phase1 = lq_phase1().checkpoint;
  VaeConfig cfg;
  cfg.steps = kTrainSteps;
  cfg.iterations = 3000;
  cfg.kl_weight = 1e-3;
  cfg.seed = 23;
  bool kl_nonnegative = true;
  const Phase2Run run = train_phase2(*env, phase1, cfg, [&](const Phase2Metrics& m) {
    kl_nonnegative = kl_nonnegative && m.terms.kl >= 0.0;
  });
  const Phase1Nets frozen = phase1_nets(phase1);
  const Phase2Nets initial = init_phase2(*env, frozen, cfg.latent_dim, cfg.seed);
  const Phase2Nets trained = phase2_nets(run.checkpoint);
  const auto held_out = evaluation_starts(*env, 64, 91);
  const double before = phase2_loss(&frozen, initial, *env, held_out, cfg, 0xACE).loss;
  const double after = phase2_loss(&frozen, trained, *env, held_out, cfg, 0xACE).loss;
  const double cycle = phase2_cycle_error(frozen, trained, held_out, 1.0, kTrainSteps);
  return {kl_nonnegative && after <= 0.7 * before && cycle <= 0.1,
          fmt("KL >= 0 at all %zu steps: %s; held-out loss %.4g -> %.4g (ratio %.3f <= 0.7); cycle error %.4f "
              "(<= 0.1)",
              run.metrics.size(), kl_nonnegative ? "yes" : "no", before, after, after / before, cycle)};
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "hamopt_acceptance_determinism";
  fs::remove_all(root);
  // Both runs use the same paths so manifests can match byte for byte.
  const fs::path work = root / "run";
  auto run_once = [&](const std::string& tag) {
    int code = cli::run({"train", "--env", "cartpole", "--steps", "10", "--iterations", "25", "--seed", "5",
                         "--deterministic", "--out", (work / "train").string()});
    code = std::max(code, cli::run({"rollout", "--ckpt", (work / "train" / "checkpoint.json").string(), "--seed",
                                    "3", "--frames", "--deterministic", "--out", (work / "rollout").string()}));
    fs::rename(work, root / tag);
    return code;
  };
  fs::create_directories(root);
  if (run_once("a") != 0 || run_once("b") != 0) return {false, "a CLI run failed"};
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    const fs::path other = root / "b" / rel;
    ++compared;
    if (!fs::exists(other) || read_text_file(entry.path()) != read_text_file(other)) ++differing;
  }
  const bool has_frames = fs::exists(root / "a" / "rollout" / frame_name(0));
  fs::remove_all(root);
  return {differing == 0 && compared > 0 && has_frames,
          fmt("%zu files compared (checkpoint, metrics, manifest, trajectory, frames), %zu differ", compared,
              differing)};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "autodiff correctness", criterion_autodiff},
      {2, "LQ analytic equivalence", criterion_lq_equivalence},
      {3, "direct oracle soundness", criterion_direct_oracle},
      {4, "Hamiltonian flow properties", criterion_flow_properties},
      {5, "stationarity of the extracted control", criterion_stationarity},
      {6, "mountain car reaches the goal", criterion_mountain_car},
      {7, "cart pole keeps the pole upright", criterion_cart_pole},
      {8, "shape functional", criterion_shape},
      {9, "phase-2 VAE", criterion_phase2},
      {10, "determinism", criterion_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
