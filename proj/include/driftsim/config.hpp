#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftsim/env.hpp"
#include "driftsim/ppo.hpp"

namespace driftsim {

/// Malformed or unknown configuration input (maps to exit code 3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TrackKind : std::uint8_t {
  kCircle,
  kEight,
  kVariable,
  kRings,
  kRandom,  // one generated random path
  kPool,    // pool of random paths for trajectory randomization
  kFile,    // waypoint CSV on disk
};

const char* track_kind_name(TrackKind k);
TrackKind parse_track_kind(const std::string& s);

struct TrackConfig {
  TrackKind kind = TrackKind::kCircle;
  double radius = 1.0;  // m, circle/eight/rings
  int direction = 1;    // circle turn direction, +1 left / -1 right
  int pool_size = 32;   // paths in the random pool
  std::string file;     // waypoint CSV when kind = file
};

struct EvalConfig {
  int n_trials = 6;
  bool stochastic = false;  // sample actions instead of taking the mean
  int max_steps = 0;        // 0 = sized from path length
};

/// Every tunable of the toolchain in one place. All fields are reachable as
/// `section.key = value` lines in a config file; defaults are the values
/// below. dump_run_config() lists every key with its current value and
/// parses back losslessly.
struct RunConfig {
  VehicleParams vehicle;
  TireParams tire;  // nominal coefficients for standalone dynamics use
  EnvConfig env;    // includes reward.* and rand.* sections
  TrainerConfig trainer;
  TrackConfig track;
  EvalConfig eval;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;            // 0 = runtime default
  int checkpoint_every = 50;  // updates between checkpoint rewrites
  bool timing_in_curve = false;  // wall-clock steps/s in curve.csv breaks
                                 // byte-identical reruns; off by default
};

/// All recognized config keys in documented order.
std::vector<std::string> config_keys();

/// One "key = value" line per key, full precision, parseable by
/// load_run_config.
std::string dump_run_config(const RunConfig& cfg);

/// Applies a single config line. Blank lines and lines starting with '#'
/// are ignored. `where` prefixes error messages (e.g. "file:12").
void apply_config_line(RunConfig& cfg, const std::string& line,
                       const std::string& where);

RunConfig load_run_config(std::istream& is, const std::string& name);
RunConfig load_run_config_file(const std::string& path);

/// Paths for the configured track. Single-element for every kind except
/// pool. Generated kinds derive their seeds from master_seed.
std::vector<std::shared_ptr<const ReferencePath>> make_task_paths(
    const RunConfig& cfg, std::uint64_t master_seed);

/// Environment over make_task_paths. n_envs <= 0 uses trainer.n_envs.
std::unique_ptr<DriftEnv> make_drift_env(const RunConfig& cfg,
                                         std::uint64_t master_seed,
                                         int n_envs = 0);

}  // namespace driftsim
