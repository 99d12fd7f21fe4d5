#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "driftsim/config.hpp"
#include "driftsim/dynamics.hpp"
#include "driftsim/eval.hpp"
#include "driftsim/io.hpp"
#include "driftsim/path.hpp"
#include "driftsim/ppo.hpp"
#include "driftsim/rng.hpp"

namespace fs = std::filesystem;
using namespace driftsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitRuntime = 4;

int max_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_workers(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void progress_line(const CurveRow& row) {
  std::fprintf(stderr,
               "update %4d  steps %10lld  return %9.3f  |beta| %5.3f  "
               "rmse %5.3f  kl %7.4f  %8.0f steps/s\n",
               row.update, row.env_steps, row.mean_return, row.mean_abs_beta,
               row.rmse_proxy, row.stats.approx_kl, row.steps_per_sec);
}

int cmd_gen_path(const RunConfig& cfg, const std::string& kind_str,
                 double radius, int direction, std::string file, bool quiet) {
  TrackKind kind;
  try {
    kind = parse_track_kind(kind_str);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "gen-path: %s\n", e.what());
    return kExitUsage;
  }
  if (kind == TrackKind::kPool || kind == TrackKind::kFile) {
    std::fprintf(stderr,
                 "gen-path: kind must be one of "
                 "circle|eight|variable|rings|random\n");
    return kExitUsage;
  }
  if ((kind == TrackKind::kCircle || kind == TrackKind::kEight ||
       kind == TrackKind::kRings) &&
      !(radius > 0.0)) {
    std::fprintf(stderr, "gen-path: radius must be positive (got %g)\n",
                 radius);
    return kExitUsage;
  }
  RunConfig c = cfg;
  c.track.kind = kind;
  c.track.radius = radius;
  c.track.direction = direction;
  const auto paths = make_task_paths(c, cfg.seed);

  if (file.empty()) {
    file = (fs::path(cfg.out_dir) / ("path_" + kind_str + ".csv")).string();
  }
  const fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ostringstream ss;
  write_path_csv(*paths[0], ss);
  atomic_write_file(file, ss.str());
  if (!quiet) {
    std::fprintf(stderr, "wrote %s (%zu waypoints, length %.3f m)\n",
                 file.c_str(), paths[0]->waypoints.size(),
                 paths[0]->total_length);
  }
  return kExitOk;
}

int cmd_train(RunConfig cfg, bool quiet) {
  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);
  const std::string started = utc_timestamp();

  auto env = make_drift_env(cfg, cfg.seed);
  TrainerConfig tcfg = cfg.trainer;
  tcfg.seed = cfg.seed;
  if (!tcfg.valid()) throw ConfigError("invalid trainer configuration");

  const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  TrainHooks hooks;
  hooks.on_update = [&](const CurveRow& row, const PolicyNet& net) {
    if (!quiet) progress_line(row);
    if (cfg.checkpoint_every > 0 && row.update % cfg.checkpoint_every == 0) {
      save_checkpoint(net, tcfg, ckpt);
    }
  };

  TrainResult result = train(*env, tcfg, hooks);
  save_checkpoint(result.net, tcfg, ckpt);

  std::vector<CurveRow> rows = result.curve;
  if (!cfg.timing_in_curve) {
    for (CurveRow& r : rows) r.steps_per_sec = 0.0;
  }
  write_curve_csv_file(rows, (fs::path(cfg.out_dir) / "curve.csv").string());
  atomic_write_file((fs::path(cfg.out_dir) / "config.txt").string(),
                    dump_run_config(cfg));
  write_manifest(cfg.out_dir, cfg,
                 {"checkpoint.bin", "checkpoint.bin.json", "curve.csv",
                  "config.txt"},
                 started, utc_timestamp());
  if (!quiet) {
    std::fprintf(stderr, "trained %lld env steps over %zu updates -> %s\n",
                 result.env_steps, result.curve.size(), ckpt.c_str());
  }
  return kExitOk;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint, bool quiet) {
  PolicyNet net = load_checkpoint(checkpoint);
  const int want_obs = observation_dim(cfg.env);
  if (net.obs_dim() != want_obs || net.act_dim() != 5) {
    throw FormatError("checkpoint dims (obs " + std::to_string(net.obs_dim()) +
                      ", act " + std::to_string(net.act_dim()) +
                      ") do not match the configured environment (obs " +
                      std::to_string(want_obs) + ", act 5)");
  }

  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);
  const std::string started = utc_timestamp();

  const auto paths = make_task_paths(cfg, cfg.seed);
  EvalOptions opt;
  opt.env = cfg.env;
  opt.vehicle = cfg.vehicle;
  opt.path_id = cfg.track.kind == TrackKind::kFile
                    ? cfg.track.file
                    : track_kind_name(cfg.track.kind);
  opt.max_steps_override = cfg.eval.max_steps;
  opt.stochastic = cfg.eval.stochastic;

  const EvalResult res =
      rollout_eval(net, paths.front(), cfg.eval.n_trials, cfg.seed, opt);

  std::vector<std::string> files;
  atomic_write_file((fs::path(cfg.out_dir) / "report.json").string(),
                    eval_report_json(res.report));
  files.push_back("report.json");
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    const std::string name = "trace_" + std::to_string(i) + ".csv";
    write_trace_csv(res.traces[i], (fs::path(cfg.out_dir) / name).string());
    files.push_back(name);
  }
  phase_plane_export(res.traces, (fs::path(cfg.out_dir) / "phase").string());
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    files.push_back("phase/trial_" + std::to_string(i) + ".csv");
  }
  {
    std::ostringstream ss;
    write_overlay_svg(*paths.front(), res.traces, ss);
    atomic_write_file((fs::path(cfg.out_dir) / "overlay.svg").string(),
                      ss.str());
    files.push_back("overlay.svg");
  }
  {
    std::ostringstream ss;
    write_phase_svg(res.traces, ss);
    atomic_write_file((fs::path(cfg.out_dir) / "phase.svg").string(),
                      ss.str());
    files.push_back("phase.svg");
  }
  atomic_write_file((fs::path(cfg.out_dir) / "config.txt").string(),
                    dump_run_config(cfg));
  files.push_back("config.txt");
  write_manifest(cfg.out_dir, cfg, files, started, utc_timestamp());

  if (!quiet) {
    std::fprintf(stderr,
                 "eval %s: %d trials, success %.2f, rmse %.4f +/- %.4f m, "
                 "mean |beta| %.3f rad, mean V %.3f m/s\n",
                 res.report.path_id.c_str(), res.report.n_trials,
                 res.report.success_rate, res.report.rmse_mean,
                 res.report.rmse_std, res.report.mean_abs_beta,
                 res.report.mean_v);
    if (res.report.equilibrium.has_value()) {
      std::fprintf(stderr,
                   "equilibrium: r %.3f rad/s, beta %.3f rad, V %.3f m/s\n",
                   res.report.equilibrium->r, res.report.equilibrium->beta,
                   res.report.equilibrium->v);
    }
  }
  return kExitOk;
}

int cmd_ablate(RunConfig cfg, long long steps_override, int trials_override,
               bool quiet) {
  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);
  const std::string started = utc_timestamp();

  std::vector<AblationSpec> specs = default_ablation_specs();
  if (trials_override > 0) {
    for (AblationSpec& s : specs) s.n_trials = trials_override;
  }
  auto eval_path = std::make_shared<const ReferencePath>(gen_eight(1.0));

  const AblationTrainFn fn = [&](const RandomizationConfig& rand,
                                 std::uint64_t seed) {
    RunConfig c = cfg;
    c.env.rand = rand;
    c.track.kind =
        rand.randomize_trajectory ? TrackKind::kPool : TrackKind::kRandom;
    auto env = make_drift_env(c, seed);
    TrainerConfig t = c.trainer;
    t.seed = seed;
    if (steps_override >= 0) t.total_env_steps = steps_override;
    TrainHooks hooks;
    if (!quiet) {
      hooks.on_update = [](const CurveRow& row, const PolicyNet&) {
        progress_line(row);
      };
    }
    return train(*env, t, hooks).net;
  };

  const std::vector<AblationRow> rows = run_ablation(fn, specs, eval_path,
                                                     cfg.seed);
  write_ablation_csv(rows, (fs::path(cfg.out_dir) / "ablation.csv").string());
  atomic_write_file((fs::path(cfg.out_dir) / "config.txt").string(),
                    dump_run_config(cfg));
  write_manifest(cfg.out_dir, cfg, {"ablation.csv", "config.txt"}, started,
                 utc_timestamp());

  for (const AblationRow& r : rows) {
    if (!r.trained_ok) {
      std::fprintf(stderr, "ablate: row '%s' failed during training\n",
                   r.name.c_str());
    }
    if (!quiet) {
      std::fprintf(stderr,
                   "%-16s success %.2f  rmse %.4f +/- %.4f  |beta| %.3f\n",
                   r.name.c_str(), r.success_rate, r.rmse_mean, r.rmse_std,
                   r.beta_mean);
    }
  }
  return kExitOk;
}

std::uint64_t hash_states(const std::vector<VehicleState>& states) {
  std::vector<double> flat;
  flat.reserve(states.size() * 6);
  for (const VehicleState& s : states) {
    flat.insert(flat.end(), {s.x, s.y, s.psi, s.xdot, s.ydot, s.psidot});
  }
  return fnv1a64(flat.data(), flat.size() * sizeof(double));
}

int cmd_bench(const RunConfig& cfg, long long n_steps, bool write_json,
              bool quiet) {
  if (n_steps <= 0) {
    std::printf("throughput: n/a (n_steps = 0)\n");
    return kExitOk;
  }

  Rng rng = Rng::stream(cfg.seed, 0x6265); // independent of the sim streams
  auto make_states = [&](int n) {
    std::vector<VehicleState> states(n);
    for (VehicleState& s : states) {
      s.x = 2.0 * rng.normal();
      s.y = 2.0 * rng.normal();
      s.psi = rng.uniform(-3.14, 3.14);
      s.xdot = rng.uniform(-3.0, 3.0);
      s.ydot = rng.uniform(-1.5, 1.5);
      s.psidot = rng.uniform(-3.0, 3.0);
    }
    return states;
  };
  auto make_inputs = [&](int n) {
    std::vector<ControlInput> inputs(n);
    for (ControlInput& u : inputs) {
      u.delta = rng.uniform(-0.46, 0.46);
      for (int w = 0; w < kNumWheels; ++w) {
        u.omega[w] = rng.uniform(1.0, 7.0) / cfg.vehicle.wheel_radius;
      }
    }
    return inputs;
  };

  const std::vector<int> counts = {1, 64, 1024, 8192};
  std::vector<int> workers = {1};
  if (max_workers() > 1) workers.push_back(max_workers());

  struct BenchRow {
    int instances;
    int workers;
    long long steps;
    double steps_per_sec;
  };
  std::vector<BenchRow> table;

  std::printf("%10s %8s %14s %16s\n", "instances", "workers", "vehicle-steps",
              "steps/s");
  for (int count : counts) {
    const auto states = make_states(count);
    const auto inputs = make_inputs(count);
    const std::vector<VehicleParams> params(count, cfg.vehicle);
    const std::vector<TireParams> tires(count, cfg.tire);
    const std::vector<DisturbanceState> dist(count);
    std::vector<VehicleState> out(count);
    std::vector<std::uint8_t> diverged(count);
    const long long iters = std::max<long long>(1, n_steps / count);
    const long long total = iters * count;

    for (int w : workers) {
      set_workers(w);
      const auto t0 = std::chrono::steady_clock::now();
      for (long long k = 0; k < iters; ++k) {
        step_batch(states, inputs, params, tires, dist, cfg.env.dt, out,
                   diverged);
      }
      const auto t1 = std::chrono::steady_clock::now();
      const double secs = std::chrono::duration<double>(t1 - t0).count();
      const double tput = secs > 0.0 ? static_cast<double>(total) / secs : 0.0;
      table.push_back({count, w, total, tput});
      std::printf("%10d %8d %14lld %16.0f\n", count, w, total, tput);
    }
  }
  set_workers(max_workers());

  // Correctness under timing: the batched path must agree bitwise with the
  // plain sequential loop.
  bool hash_match = true;
  {
    const int count = 1024;
    const auto states = make_states(count);
    const auto inputs = make_inputs(count);
    const std::vector<VehicleParams> params(count, cfg.vehicle);
    const std::vector<TireParams> tires(count, cfg.tire);
    const std::vector<DisturbanceState> dist(count);
    std::vector<VehicleState> batch_out(count), seq_out(count);
    std::vector<std::uint8_t> diverged(count);
    step_batch(states, inputs, params, tires, dist, cfg.env.dt, batch_out,
               diverged);
    for (int i = 0; i < count; ++i) {
      seq_out[i] =
          step(states[i], inputs[i], params[i], tires[i], dist[i], cfg.env.dt)
              .state;
    }
    hash_match = hash_states(batch_out) == hash_states(seq_out);
    std::printf("batch-vs-sequential hash (1024 instances): %s\n",
                hash_match ? "match" : "MISMATCH");
  }

  auto find_tput = [&](int count, int w) {
    for (const BenchRow& r : table) {
      if (r.instances == count && r.workers == w) return r.steps_per_sec;
    }
    return 0.0;
  };
  const double single = find_tput(1, 1);
  const double big_1 = find_tput(8192, 1);
  const double big_max = find_tput(8192, workers.back());
  std::printf("single-thread 8192-batch: %.0f steps/s\n", big_1);
  if (workers.size() > 1) {
    std::printf("scaling (8192 instances, %d workers): %.2fx of linear\n",
                workers.back(), big_max / (big_1 * workers.back()));
  } else {
    std::printf("scaling: single hardware thread, nothing to scale across\n");
  }
  if (single > 0.0) {
    std::printf("8192-batch vs single-instance loop: %.1fx\n",
                std::max(big_1, big_max) / single);
  }

  if (write_json) {
    fs::create_directories(cfg.out_dir);
    std::ostringstream ss;
    ss << "{\n  \"hash_match\": " << (hash_match ? "true" : "false")
       << ",\n  \"rows\": [\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
      ss << "    {\"instances\": " << table[i].instances
         << ", \"workers\": " << table[i].workers
         << ", \"steps\": " << table[i].steps << ", \"steps_per_sec\": "
         << static_cast<long long>(table[i].steps_per_sec) << "}"
         << (i + 1 < table.size() ? "," : "") << "\n";
    }
    ss << "  ]\n}\n";
    atomic_write_file((fs::path(cfg.out_dir) / "bench.json").string(),
                      ss.str());
    if (!quiet) {
      std::fprintf(stderr, "wrote %s (timing data, not reproducible)\n",
                   (fs::path(cfg.out_dir) / "bench.json").string().c_str());
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "driftsim: batched drifting-car simulation, PPO training and "
      "evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_file;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  bool quiet = false;
  auto* opt_config = app.add_option(
      "--config", config_file, "Config file of 'section.key = value' lines");
  auto* opt_seed =
      app.add_option("--seed", seed, "Master seed (overrides run.seed)");
  auto* opt_out = app.add_option("--out", out_dir,
                                 "Output directory (overrides run.out_dir)");
  auto* opt_threads = app.add_option(
      "--threads", threads, "Worker threads (overrides run.threads)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  auto* gen = app.add_subcommand("gen-path",
                                 "Generate a reference-path waypoint CSV");
  gen->fallthrough();
  std::string gen_kind;
  double gen_radius = 1.0;
  int gen_direction = 1;
  std::string gen_file;
  gen->add_option("--kind", gen_kind, "circle|eight|variable|rings|random")
      ->required();
  gen->add_option("--radius", gen_radius, "Radius in meters")
      ->capture_default_str();
  gen->add_option("--direction", gen_direction,
                  "Circle turn direction (+1 left, -1 right)")
      ->capture_default_str();
  gen->add_option("--file", gen_file,
                  "Output file (default <out>/path_<kind>.csv)");

  auto* train_cmd =
      app.add_subcommand("train", "Train the drifting policy with PPO");
  train_cmd->fallthrough();
  long long train_steps = -1;
  int train_n_envs = -1;
  std::string train_track, train_track_file;
  train_cmd->add_option("--steps", train_steps,
                        "Override trainer.total_env_steps");
  train_cmd->add_option("--n-envs", train_n_envs, "Override trainer.n_envs");
  train_cmd
      ->add_option("--track", train_track, "Override track.kind")
      ->check(CLI::IsMember({"circle", "eight", "variable", "rings", "random",
                             "pool", "file"}));
  train_cmd->add_option("--track-file", train_track_file,
                        "Override track.file");

  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate a trained checkpoint on a track");
  eval_cmd->fallthrough();
  std::string eval_checkpoint;
  int eval_trials = -1;
  bool eval_stochastic = false;
  std::string eval_track, eval_track_file;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--trials", eval_trials, "Override eval.n_trials");
  eval_cmd->add_flag("--stochastic", eval_stochastic,
                     "Sample actions instead of taking the mean");
  eval_cmd->add_option("--track", eval_track, "Override track.kind")
      ->check(CLI::IsMember({"circle", "eight", "variable", "rings", "random",
                             "pool", "file"}));
  eval_cmd->add_option("--track-file", eval_track_file, "Override track.file");

  auto* ablate_cmd = app.add_subcommand(
      "ablate",
      "Train and evaluate the five domain-randomization configurations");
  ablate_cmd->fallthrough();
  long long ablate_steps = -1;
  int ablate_trials = -1;
  ablate_cmd->add_option("--steps", ablate_steps,
                         "Per-row override of trainer.total_env_steps");
  ablate_cmd->add_option("--trials", ablate_trials,
                         "Per-row override of evaluation trials");

  auto* bench_cmd =
      app.add_subcommand("bench", "Measure batched stepping throughput");
  bench_cmd->fallthrough();
  long long bench_steps = 200000;
  bench_cmd
      ->add_option("--steps", bench_steps,
                   "Vehicle-steps per timing measurement")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  try {
    if (opt_config->count() > 0) cfg = load_run_config_file(config_file);
    if (opt_seed->count() > 0) cfg.seed = seed;
    if (opt_out->count() > 0) cfg.out_dir = out_dir;
    if (opt_threads->count() > 0) cfg.threads = threads;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  }
  set_workers(cfg.threads);

  try {
    if (gen->parsed()) {
      return cmd_gen_path(cfg, gen_kind, gen_radius, gen_direction, gen_file,
                          quiet);
    }
    if (train_cmd->parsed()) {
      if (train_steps >= 0) cfg.trainer.total_env_steps = train_steps;
      if (train_n_envs > 0) cfg.trainer.n_envs = train_n_envs;
      if (!train_track.empty()) cfg.track.kind = parse_track_kind(train_track);
      if (!train_track_file.empty()) cfg.track.file = train_track_file;
      return cmd_train(cfg, quiet);
    }
    if (eval_cmd->parsed()) {
      if (eval_trials > 0) cfg.eval.n_trials = eval_trials;
      if (eval_stochastic) cfg.eval.stochastic = true;
      if (!eval_track.empty()) cfg.track.kind = parse_track_kind(eval_track);
      if (!eval_track_file.empty()) cfg.track.file = eval_track_file;
      return cmd_eval(cfg, eval_checkpoint, quiet);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(cfg, ablate_steps, ablate_trials, quiet);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(cfg, bench_steps, opt_out->count() > 0, quiet);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
