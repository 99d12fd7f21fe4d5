#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftsim/config.hpp"
#include "driftsim/eval.hpp"
#include "driftsim/policy.hpp"
#include "driftsim/ppo.hpp"

namespace driftsim {

/// Corrupt or incompatible on-disk data (maps to exit code 3).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "driftsim 0.1.0";

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);

/// Writes content to a temp file in the target directory, then renames it
/// over path, so readers never observe a partially written file.
void atomic_write_file(const std::string& path, const std::string& content);

/// Checkpoint: little-endian binary
///   bytes 0..7   magic "DSIMCKPT"
///   u32          version (1)
///   u32          obs_dim, u32 act_dim
///   u32          n_hidden, then n_hidden u32 layer widths
///   f64[act_dim] action lower bounds, f64[act_dim] upper bounds
///   u64          parameter count, then that many f64 parameters
/// plus a JSON sidecar <file>.json holding the trainer config.
void save_checkpoint(const PolicyNet& net, const TrainerConfig& cfg,
                     const std::string& file);
PolicyNet load_checkpoint(const std::string& file);
std::optional<TrainerConfig> load_checkpoint_config(const std::string& file);

void write_curve_csv(const std::vector<CurveRow>& rows, std::ostream& os);
void write_curve_csv_file(const std::vector<CurveRow>& rows,
                          const std::string& file);

/// Raw dynamics trace format, one row per step.
void write_state_trace_header(std::ostream& os);
void write_state_trace_row(std::ostream& os, double t, const VehicleState& s,
                           const ControlInput& u);

std::string episode_summary_json(const EpisodeSummary& s);
std::string eval_report_json(const EvalReport& r);

/// Reference path plus driven trajectories in one picture.
void write_overlay_svg(const ReferencePath& path,
                       const std::vector<TrialTrace>& traces,
                       std::ostream& os);
/// Yaw rate against sideslip, one polyline per trial.
void write_phase_svg(const std::vector<TrialTrace>& traces, std::ostream& os);

std::string utc_timestamp();

/// manifest.json: tool version, seed, start/end timestamps, the full config
/// snapshot, and a name/size/FNV-1a hash entry per produced file. Written
/// atomically at run end.
void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::vector<std::string>& files,
                    const std::string& started_at,
                    const std::string& finished_at);
bool verify_manifest(const std::string& out_dir, std::string* error = nullptr);

/// Exclusive out_dir ownership for the duration of a run. Throws
/// std::runtime_error when another run holds the directory.
class RunLock {
 public:
  explicit RunLock(const std::string& out_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
  bool held_ = false;
};

}  // namespace driftsim
