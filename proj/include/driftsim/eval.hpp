#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftsim/env.hpp"
#include "driftsim/policy.hpp"

namespace driftsim {

struct TraceSample {
  double t = 0.0;
  double x = 0.0, y = 0.0, psi = 0.0;
  double r = 0.0, beta = 0.0, v = 0.0;
  double e_pos = 0.0, s_proj = 0.0;
  double delta = 0.0;
};

/// One evaluation rollout. A trial ends at the first of: covering its
/// required arc length (success), leaving the track, divergence, or the
/// step cap.
struct TrialTrace {
  std::vector<TraceSample> samples;  // includes the t = 0 reset state
  Termination end = Termination::kRunning;
  double required_s = 0.0;
  double progress_s = 0.0;
  bool success = false;
  double rmse = 0.0;           // over post-reset samples
  double mean_abs_beta = 0.0;
  double mean_v = 0.0;
};

struct Equilibrium {
  double r = 0.0;
  double beta = 0.0;
  double v = 0.0;
};

struct EvalReport {
  std::string path_id;
  int n_trials = 0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double mean_abs_beta = 0.0;
  double mean_v = 0.0;
  double success_rate = 0.0;
  std::optional<Equilibrium> equilibrium;
};

struct EvalResult {
  EvalReport report;
  std::vector<TrialTrace> traces;
};

struct EvalOptions {
  EnvConfig env;
  VehicleParams vehicle;
  std::string path_id;
  int max_steps_override = 0;  // 0: grown automatically from path length
  bool stochastic = false;     // sample actions instead of taking the mean
};

/// Aggregates per-trial stats into a report; the equilibrium field comes
/// from the first trial whose tail settles.
EvalReport summarize_trials(const std::vector<TrialTrace>& traces,
                            const std::string& path_id, double dt);

/// Deterministic evaluation: n_trials batched rollouts with mean actions.
/// All draws derive from stream_seed(seed, kEvalTrial); trial i owns
/// environment-instance stream i below that, so any parallelization or
/// trial count gives identical per-trial results.
EvalResult rollout_eval(const PolicyNet& policy,
                        std::shared_ptr<const ReferencePath> path,
                        int n_trials, std::uint64_t seed,
                        const EvalOptions& opt = {});

/// Settling detector: over the trailing window the relative std of each of
/// (r, beta, V) must drop below rel_tol; returns the window means.
std::optional<Equilibrium> detect_equilibrium(const std::vector<double>& r,
                                              const std::vector<double>& beta,
                                              const std::vector<double>& v,
                                              double dt,
                                              double window_s = 2.0,
                                              double rel_tol = 0.05);

std::optional<Equilibrium> detect_equilibrium(const TrialTrace& trace,
                                              double dt,
                                              double window_s = 2.0,
                                              double rel_tol = 0.05);

/// Writes trial_<i>.csv files of (t, r, beta) under dir. Returns the file
/// names written.
std::vector<std::string> phase_plane_export(
    const std::vector<TrialTrace>& traces, const std::string& dir);

/// Full trace CSV (t, x, y, psi, r, beta, v, e_pos, s_proj, delta).
void write_trace_csv(const TrialTrace& trace, const std::string& file);
TrialTrace read_trace_csv(const std::string& file);

/// Ablation protocol: training randomization variants evaluated under
/// harsher-than-training conditions (wider tire ranges, doubled disturbance
/// gain).
struct AblationSpec {
  std::string name;
  RandomizationConfig train_rand;
  double test_b_min = 0.2, test_b_max = 3.0;
  double test_c_min = 1.5, test_c_max = 3.0;
  double test_d_min = 0.2, test_d_max = 0.5;
  double test_ar_w = 0.2;
  int n_trials = 100;
};

/// The five rows of the study: full randomization, then one mechanism
/// removed at a time.
std::vector<AblationSpec> default_ablation_specs();

struct AblationRow {
  std::string name;
  bool trained_ok = false;
  double success_rate = 0.0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double beta_mean = 0.0;
  double beta_std = 0.0;
};

using AblationTrainFn =
    std::function<PolicyNet(const RandomizationConfig&, std::uint64_t seed)>;

/// Trains one policy per spec and evaluates it on eval_path under the
/// spec's test conditions. A training failure (exception or non-finite
/// parameters) yields a zero-success row instead of stopping the study.
std::vector<AblationRow> run_ablation(
    const AblationTrainFn& train_fn, const std::vector<AblationSpec>& specs,
    std::shared_ptr<const ReferencePath> eval_path, std::uint64_t seed);

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& file);

}  // namespace driftsim
