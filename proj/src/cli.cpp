#include "hamopt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hamopt/error.hpp"
#include "hamopt/evaluation.hpp"
#include "hamopt/io.hpp"
#include "hamopt/parallel.hpp"
#include "hamopt/random.hpp"
#include "hamopt/training.hpp"
#include "json.hpp"

namespace hamopt::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string env;
  int phase = 1;
  std::string config;
  std::string ckpt;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t iterations = 0;
  bool frames = false;
  std::size_t samples = 10;
  std::string fhat;
  bool deterministic = false;

  bool has_seed = false;
  bool has_steps = false;
  bool has_iterations = false;
  bool has_phase = false;
};

// Settings gathered from --config and flags, flags taking precedence.
struct Resolved {
  std::string env;
  int phase = 1;
  std::string ckpt;
  std::uint64_t seed = 0;
  TrainConfig train;
  VaeConfig vae;
};

std::string valid_envs() {
  std::string s;
  for (const auto& n : environment_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

void check_env_name(const std::string& name) {
  const auto& names = environment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw UsageError("unknown environment '" + name + "' (valid: " + valid_envs() + ")");
  }
}

std::string take_string(ConfigMap& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) return {};
  const auto* s = std::get_if<std::string>(&it->second);
  if (!s) throw Error(ErrorKind::InvalidConfig, key + " must be a string");
  std::string v = *s;
  map.erase(it);
  return v;
}

std::optional<std::int64_t> take_int(ConfigMap& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) return std::nullopt;
  const auto* i = std::get_if<std::int64_t>(&it->second);
  if (!i) throw Error(ErrorKind::InvalidConfig, key + " must be an integer");
  const std::int64_t v = *i;
  map.erase(it);
  return v;
}

Resolved resolve(const Flags& flags) {
  Resolved r;
  ConfigMap map;
  if (!flags.config.empty()) map = read_config(flags.config);
  // Keys a manifest carries besides the two config tables.
  r.env = take_string(map, "env");
  r.ckpt = take_string(map, "ckpt");
  take_string(map, "command");
  map.erase("deterministic");
  if (auto phase = take_int(map, "phase")) r.phase = static_cast<int>(*phase);
  apply_config(map, r.train, r.vae);
  r.seed = r.train.seed;

  if (!flags.env.empty()) r.env = flags.env;
  if (flags.has_phase) r.phase = flags.phase;
  if (!flags.ckpt.empty()) r.ckpt = flags.ckpt;
  if (flags.has_seed) r.seed = r.train.seed = r.vae.seed = flags.seed;
  if (flags.has_steps) r.train.steps = r.vae.steps = flags.steps;
  if (flags.has_iterations) r.train.iterations = r.vae.iterations = flags.iterations;
  if (!flags.fhat.empty()) r.train.fhat = parse_fhat(flags.fhat);
  r.vae.seed = r.train.seed;
  if (r.phase != 1 && r.phase != 2) throw UsageError("--phase must be 1 or 2");
  if (!r.env.empty()) check_env_name(r.env);
  return r;
}

nlohmann::ordered_json to_json(const ConfigEcho& echo) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  for (const auto& [key, value] : echo) {
    std::visit([&](const auto& v) { obj[key] = v; }, value);
  }
  return obj;
}

void write_manifest(const fs::path& out, const std::string& command, const Resolved& r, const Flags& flags) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["env"] = r.env;
  m["phase"] = r.phase;
  m["seed"] = r.seed;
  m["deterministic"] = flags.deterministic;
  if (!r.ckpt.empty()) m["ckpt"] = r.ckpt;
  m["train"] = to_json(echo(r.train));
  m["vae"] = to_json(echo(r.vae));
  write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

double config_number(const Checkpoint& ckpt, const std::string& key, double fallback) {
  for (const auto& [k, v] : ckpt.config) {
    if (k != key) continue;
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  }
  return fallback;
}

std::unique_ptr<Environment> env_for_checkpoint(const Checkpoint& ckpt, const std::string& requested) {
  if (!requested.empty() && requested != ckpt.env) {
    throw Error(ErrorKind::EnvMismatch, "checkpoint was trained on '" + ckpt.env + "', not '" + requested + "'");
  }
  check_env_name(ckpt.env);
  return make_environment(ckpt.env);
}

void write_frames(const fs::path& out, const Environment& env, const std::vector<Vec>& states) {
  for (std::size_t k = 0; k < states.size(); ++k) write_ppm(out / frame_name(k), render_frame(env, states[k]));
}

void write_states_csv(const fs::path& path, const Vec& times, const std::vector<Vec>& states) {
  std::vector<std::string> header{"t"};
  const std::size_t n = states.empty() ? 0 : states.front().size();
  for (std::size_t i = 0; i < n; ++i) header.push_back("q_" + std::to_string(i));
  CsvWriter csv(path, header);
  for (std::size_t k = 0; k < states.size(); ++k) {
    std::vector<double> row{times[k]};
    row.insert(row.end(), states[k].begin(), states[k].end());
    csv.write_row(row);
  }
  csv.close();
}

// ---------------------------------------------------------------------------

int cmd_train(const Flags& flags) {
  Resolved r = resolve(flags);
  if (r.env.empty()) throw UsageError("train needs --env (valid: " + valid_envs() + ")");
  const auto env = make_environment(r.env);
  const fs::path out = flags.out;
  fs::create_directories(out);

  if (r.phase == 1) {
    const std::size_t every = std::max<std::size_t>(1, r.train.iterations / 20);
    const Phase1Run run = train_phase1(*env, r.train, [&](const Phase1Metrics& m) {
      if (m.step % every == 0 || m.step == 1) {
        std::cout << "step " << m.step << " loss " << m.terms.loss << " (" << m.terms.term1 << ", "
                  << m.terms.term2 << ", " << m.terms.term3 << ")\n";
      }
    });
    write_checkpoint(out / "checkpoint.json", run.checkpoint);
    write_metrics(out / "metrics.csv", phase1_metrics_header(), metrics_rows(run.metrics));
  } else {
    if (r.ckpt.empty()) throw Error(ErrorKind::MissingPhase1, "phase 2 needs --ckpt with a phase-1 checkpoint");
    const Checkpoint phase1 = read_checkpoint(r.ckpt);
    const std::size_t every = std::max<std::size_t>(1, r.vae.iterations / 20);
    const Phase2Run run = train_phase2(*env, phase1, r.vae, [&](const Phase2Metrics& m) {
      if (m.step % every == 0 || m.step == 1) {
        std::cout << "step " << m.step << " loss " << m.terms.loss << " (kl " << m.terms.kl << ", x "
                  << m.terms.x_recon << ", y " << m.terms.y_recon << ")\n";
      }
    });
    write_checkpoint(out / "checkpoint.json", run.checkpoint);
    write_metrics(out / "metrics.csv", phase2_metrics_header(), metrics_rows(run.metrics));
  }
  write_manifest(out, "train", r, flags);
  std::cout << "wrote " << (out / "checkpoint.json").string() << "\n";
  return kExitOk;
}

int cmd_rollout(const Flags& flags) {
  Resolved r = resolve(flags);
  if (r.ckpt.empty()) throw UsageError("rollout needs --ckpt");
  const Checkpoint ckpt = read_checkpoint(r.ckpt);
  const auto env = env_for_checkpoint(ckpt, flags.env);
  r.env = ckpt.env;
  const double horizon = config_number(ckpt, "horizon", 1.0);
  const std::size_t steps =
      flags.has_steps ? flags.steps : static_cast<std::size_t>(config_number(ckpt, "steps", 50.0));
  const Planner planner = Planner::from_checkpoint(ckpt, *env);
  const Vec q0 = env->sample_q0(r.seed);
  const PlanOutcome outcome = execute_plan(*env, planner, q0, horizon, steps);

  const fs::path out = flags.out;
  fs::create_directories(out);
  std::ostringstream traj;
  write_trajectory_csv(traj, outcome.plan);
  write_text_file(out / "trajectory.csv", traj.str());
  write_states_csv(out / "simulation.csv", outcome.simulation.times, outcome.simulation.states);
  if (flags.frames) write_frames(out, *env, outcome.simulation.states);
  write_manifest(out, "rollout", r, flags);
  std::cout << "cost " << format_double(outcome.simulation.cost) << "\n";
  return kExitOk;
}

int cmd_render(const Flags& flags) {
  Resolved r = resolve(flags);
  const fs::path out = flags.out;
  if (!r.ckpt.empty()) {
    const Checkpoint ckpt = read_checkpoint(r.ckpt);
    const auto env = env_for_checkpoint(ckpt, flags.env);
    r.env = ckpt.env;
    const double horizon = config_number(ckpt, "horizon", 1.0);
    const std::size_t steps =
        flags.has_steps ? flags.steps : static_cast<std::size_t>(config_number(ckpt, "steps", 50.0));
    const PlanOutcome outcome =
        execute_plan(*env, Planner::from_checkpoint(ckpt, *env), env->sample_q0(r.seed), horizon, steps);
    write_frames(out, *env, outcome.simulation.states);
  } else {
    if (r.env.empty()) throw UsageError("render needs --env or --ckpt");
    const auto env = make_environment(r.env);
    write_frames(out, *env, {env->sample_q0(r.seed)});
  }
  write_manifest(out, "render", r, flags);
  return kExitOk;
}

int cmd_oracle(const Flags& flags) {
  Resolved r = resolve(flags);
  Checkpoint ckpt;
  std::unique_ptr<Environment> env;
  if (!r.ckpt.empty()) {
    ckpt = read_checkpoint(r.ckpt);
    env = env_for_checkpoint(ckpt, flags.env);
    r.env = ckpt.env;
  } else {
    if (r.env.empty()) throw UsageError("oracle needs --env or --ckpt");
    env = make_environment(r.env);
    ckpt = make_phase1_checkpoint(*env, r.train, init_phase1(*env, r.seed));
  }
  CompareOptions opt;
  opt.samples = flags.samples;
  opt.seed = r.seed;
  opt.horizon = config_number(ckpt, "horizon", 1.0);
  opt.steps = flags.has_steps ? flags.steps : static_cast<std::size_t>(config_number(ckpt, "steps", 50.0));
  opt.direct_iterations = flags.has_iterations ? flags.iterations : 2000;
  const auto rows = oracle_compare(*env, ckpt, opt);

  const bool analytic = env->kind() == EnvKind::Lq;
  const fs::path out = flags.out;
  CsvWriter csv(out / "oracle_compare.csv", comparison_header(analytic));
  for (const auto& row : comparison_rows(rows)) csv.write_row(row);
  csv.close();
  double learned = 0.0, direct = 0.0, zero = 0.0, exact = 0.0;
  for (const auto& row : rows) {
    learned += row.learned;
    direct += row.direct;
    zero += row.zero;
    exact += row.analytic.value_or(0.0);
  }
  const double k = static_cast<double>(rows.size());
  std::cout << "mean J_learned " << learned / k << "\nmean J_direct " << direct / k << "\nmean J_zero " << zero / k
            << "\n";
  if (analytic) std::cout << "mean J_analytic " << exact / k << "\n";
  write_manifest(out, "oracle", r, flags);
  return kExitOk;
}

int cmd_grad_check(const Flags& flags) {
  Resolved r = resolve(flags);
  if (r.env.empty()) r.env = "lq";
  const auto env = make_environment(r.env);
  const Architecture arch = architecture(*env);
  const fs::path out = flags.out;
  CsvWriter csv(out / "grad_check.csv", {"sample", "network", "max_rel_error"});
  double worst = 0.0;
  for (std::size_t s = 0; s < flags.samples; ++s) {
    Rng rng(derive_seed(r.seed, s, 7));
    for (const auto& [name, dims] : {std::pair{std::string(kNetHamiltonian), arch.hamiltonian},
                                     std::pair{std::string(kNetCostate), arch.costate},
                                     std::pair{std::string(kNetDecoder), arch.decoder}}) {
      const Mlp net = init_mlp(dims, derive_seed(r.seed, s, std::hash<std::string>{}(name)));
      Vec x(dims.front());
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      const double err = grad_check_mlp(net, x, 1e-5);
      worst = std::max(worst, err);
      csv.write_row(std::vector<std::string>{std::to_string(s), name, format_double(err)});
    }
  }
  csv.close();
  write_manifest(out, "grad-check", r, flags);
  std::cout << "max relative error " << worst << "\n";
  return worst < 1e-5 ? kExitOk : kExitDomain;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Learned Pontryagin optimal control: train, roll out, render and compare against oracles", "hamopt"};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--env", flags.env, "Environment: " + valid_envs());
    sub->add_option("--config", flags.config, "TOML config or a manifest.json from an earlier run");
    sub->add_option("--ckpt", flags.ckpt, "Checkpoint path");
    sub->add_option("--out", flags.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", flags.seed, "Seed");
    sub->add_option("--steps", flags.steps, "Integrator steps N")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", flags.deterministic, "Single-threaded, bit-reproducible run");
  };

  CLI::App* train = app.add_subcommand("train", "Run phase-1 or phase-2 training");
  common(train);
  train->add_option("--phase", flags.phase, "Training phase")->check(CLI::IsMember({1, 2}));
  train->add_option("--iterations", flags.iterations, "Optimizer steps");
  train->add_option("--fhat", flags.fhat, "f-hat in the consistency term")->check(CLI::IsMember({"blackbox", "dhdp"}));

  CLI::App* rollout_cmd = app.add_subcommand("rollout", "Roll out a trained planner from a sampled start");
  common(rollout_cmd);
  rollout_cmd->add_flag("--frames", flags.frames, "Also write PPM frames");

  CLI::App* render = app.add_subcommand("render", "Render a sampled state or a planned trajectory");
  common(render);

  CLI::App* oracle = app.add_subcommand("oracle", "Compare learned, direct, zero-control and analytic costs");
  common(oracle);
  oracle->add_option("--samples", flags.samples, "Number of sampled starts")->check(CLI::PositiveNumber);
  oracle->add_option("--iterations", flags.iterations, "Direct-optimizer iterations");

  CLI::App* grad = app.add_subcommand("grad-check", "Check network gradients against finite differences");
  common(grad);
  grad->add_option("--samples", flags.samples, "Random networks per architecture")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (CLI::App* sub : {train, rollout_cmd, render, oracle, grad}) {
    if (sub->parsed()) {
      flags.has_seed = sub->count("--seed") > 0;
      flags.has_steps = sub->count("--steps") > 0;
      flags.has_phase = sub->get_option_no_throw("--phase") && sub->count("--phase") > 0;
      flags.has_iterations = sub->get_option_no_throw("--iterations") && sub->count("--iterations") > 0;
    }
  }
  set_deterministic(flags.deterministic);

  try {
    if (train->parsed()) return cmd_train(flags);
    if (rollout_cmd->parsed()) return cmd_rollout(flags);
    if (render->parsed()) return cmd_render(flags);
    if (oracle->parsed()) return cmd_oracle(flags);
    return cmd_grad_check(flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace hamopt::cli
