#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "driftsim/dynamics.hpp"
#include "driftsim/path.hpp"
#include "driftsim/rng.hpp"
#include "driftsim/types.hpp"
#include "driftsim/vec_env.hpp"

namespace driftsim {

struct RewardWeights {
  double w_pos = 2.4;
  double w_dir = 0.5;
  double w_curv = 0.15;
  double w_drift = 1.6;
  double w_smooth = 0.015;
  double w_slip = 0.005;
  double w_speed = 0.1;
  double w_prog = 0.2;
  double w_term = 50.0;
};

/// Domain-randomization ranges and enable flags. Disabling a flag removes
/// that mechanism's random draws entirely (used by the ablation protocol).
struct RandomizationConfig {
  double sigma_pos = 0.1;      // m, Gaussian position offset per axis
  double sigma_heading = 0.1;  // rad
  double r_init_min = 1.0;     // rad/s, initial yaw-rate magnitude
  double r_init_max = 3.0;
  double beta_init_min = -1.0;  // rad
  double beta_init_max = 1.0;
  double v_init_min = 0.0;  // m/s
  double v_init_max = 3.0;
  double b_min = 0.8;  // Pacejka stiffness factor range
  double b_max = 1.0;
  double c_min = 2.0;  // shape factor range
  double c_max = 2.5;
  double d_min = 0.3;  // peak factor range
  double d_max = 0.4;
  double ar_a = 0.95;  // disturbance AR(1) coefficient
  double ar_w = 0.1;   // disturbance noise gain
  bool randomize_init_state = true;
  bool randomize_tires = true;
  bool randomize_disturbance = true;
  bool randomize_trajectory = true;
};

struct EnvConfig {
  int n_preview = 10;
  double preview_spacing = 0.1;  // m
  double off_track_limit = 1.0;  // m
  int max_steps = 1500;
  double dt = 0.01;        // s
  double v_cmd_min = 1.0;  // m/s, wheel linear-speed command bounds
  double v_cmd_max = 7.0;
  bool auto_reset = true;
  RewardWeights weights;
  RandomizationConfig rand;
};

enum class Termination : std::uint8_t {
  kRunning,
  kOffTrack,
  kDiverged,
  kMaxSteps,
};

const char* termination_name(Termination t);

struct EpisodeStatus {
  int step_count = 0;
  Termination terminated = Termination::kRunning;
  double progress_s = 0.0;  // net arc-length progress this episode, m
};

/// Unweighted reward terms; total applies the weights. term is -1 on the
/// transition that ends an episode by leaving the track or diverging (the
/// quadratic penalties alone make early termination cheaper than finishing
/// a badly-tracked episode, which rewards crashing on purpose); it stays 0
/// on time-limit expiry.
struct RewardBreakdown {
  double pos = 0.0;
  double dir = 0.0;
  double curv = 0.0;
  double drift = 0.0;
  double smooth = 0.0;
  double slip = 0.0;
  double speed = 0.0;
  double prog = 0.0;
  double term = 0.0;
  double total = 0.0;
};

/// Steering plus wheel linear speeds, the clamped form of a policy action.
struct AppliedAction {
  double delta = 0.0;
  std::array<double, kNumWheels> wheel_speed{};  // m/s

  ControlInput to_control(const VehicleParams& p) const {
    ControlInput u;
    u.delta = delta;
    for (int w = 0; w < kNumWheels; ++w) {
      u.omega[w] = wheel_speed[w] / p.wheel_radius;
    }
    return u;
  }
};

/// Stats of a finished episode, drained by the trainer for logging.
struct EpisodeSummary {
  int instance = 0;
  int path_index = 0;
  Termination reason = Termination::kRunning;
  int steps = 0;
  double ep_return = 0.0;
  double mean_abs_beta = 0.0;
  double rmse_epos = 0.0;
  double progress_s = 0.0;
};

int observation_dim(const EnvConfig& cfg);

/// Assembles the observation layout:
///   [n_preview x (x_rel, y_rel, theta_rel, beta_ref)]
///   [e_pos, e_dir, e_kappa, e_beta] [r, beta, V]
///   [4 wheel linear speeds] [prev delta, prev 4 wheel speeds]
/// Wheel speeds duplicate the previous action's wheel block because commands
/// are tracked instantaneously; both are zero right after a reset. Every
/// entry is frame-invariant, so a rigid motion of world and path leaves the
/// observation unchanged.
void build_observation(const VehicleState& state, const ReferencePath& path,
                       const TrackingErrors& errors,
                       const AppliedAction& prev_action,
                       const EnvConfig& cfg, std::span<double> out);

/// Reward terms for one transition. prev/current actions are the clamped
/// versions; the smoothness penalty compares wheel speeds in rad/s.
RewardBreakdown compute_reward(const TrackingErrors& errors,
                               const AppliedAction& action,
                               const AppliedAction& prev_action,
                               const WheelKinematics& kin, double speed,
                               double progress_ds, const RewardWeights& w,
                               const VehicleParams& params);

/// One AR(1) update of all disturbance components, then clip to [-0.5, 0.5].
DisturbanceState disturbance_step(const DisturbanceState& d, double a,
                                  double w, Rng& rng);

/// Batched drifting environment over a shared path pool. Each instance owns
/// an independent RNG stream derived from the master seed and its index, so
/// results are identical for any internal parallelization and any batch
/// size (instance i behaves the same in a 4-env and a 4096-env batch).
class DriftEnv : public VecEnv {
 public:
  DriftEnv(std::vector<std::shared_ptr<const ReferencePath>> paths,
           const EnvConfig& cfg, const VehicleParams& vehicle,
           std::uint64_t master_seed, int n_envs);

  int num_envs() const override { return static_cast<int>(inst_.size()); }
  int obs_dim() const override { return observation_dim(cfg_); }
  int action_dim() const override { return 5; }
  Eigen::VectorXd action_low() const override;
  Eigen::VectorXd action_high() const override;
  void reset_all(Eigen::Ref<Eigen::MatrixXd> obs) override;
  void step(const Eigen::Ref<const Eigen::MatrixXd>& actions,
            Eigen::Ref<Eigen::MatrixXd> obs,
            Eigen::Ref<Eigen::VectorXd> rewards,
            std::vector<std::uint8_t>& dones) override;

  const EnvConfig& config() const { return cfg_; }
  const VehicleParams& vehicle() const { return vehicle_; }
  const VehicleState& state(int i) const { return inst_[i].state; }
  const EpisodeStatus& status(int i) const { return inst_[i].status; }
  const TrackingErrors& errors(int i) const { return inst_[i].errors; }
  const TireParams& tires(int i) const { return inst_[i].tires; }
  const RewardBreakdown& reward_breakdown(int i) const {
    return inst_[i].breakdown;
  }
  const AppliedAction& prev_action(int i) const { return inst_[i].prev_action; }
  const ReferencePath& path_of(int i) const {
    return *paths_[inst_[i].path_index];
  }

  void set_auto_reset(bool on) { cfg_.auto_reset = on; }

  /// Completed-episode stats accumulated since the last drain.
  std::vector<EpisodeSummary> drain_summaries();

  /// Why each instance finished during the last step() call, kRunning where
  /// it did not. Lets the trainer tell time-limit truncation apart from
  /// failure when choosing terminal bootstrap values.
  const std::vector<Termination>& last_step_terminations() const {
    return last_terminations_;
  }

  /// Pre-reset observation of every instance that finished on the last
  /// step(). Columns are meaningful only where last_step_terminations() is
  /// not kRunning, and are skipped for diverged instances (non-finite
  /// states).
  const Eigen::MatrixXd& last_step_terminal_obs() const {
    return terminal_obs_;
  }

  void reset_instance(int i);

 private:
  struct Instance {
    VehicleState state;
    TireParams tires;
    DisturbanceState dist;
    AppliedAction prev_action;
    TrackingErrors errors;
    EpisodeStatus status;
    RewardBreakdown breakdown;
    std::ptrdiff_t hint = -1;
    int path_index = 0;
    double prev_beta = 0.0;
    Rng rng;
    // episode accumulators
    double sum_reward = 0.0;
    double sum_abs_beta = 0.0;
    double sum_sq_epos = 0.0;
  };

  void write_observation(int i, Eigen::Ref<Eigen::MatrixXd> obs);
  void finish_episode(Instance& in, int idx);

  std::vector<std::shared_ptr<const ReferencePath>> paths_;
  EnvConfig cfg_;
  VehicleParams vehicle_;
  std::vector<Instance> inst_;
  std::vector<EpisodeSummary> summaries_;
  std::vector<Termination> last_terminations_;
  Eigen::MatrixXd terminal_obs_;
};

/// Default training path pool: n random paths from the generator seeded by
/// the master seed's path stream.
std::vector<std::shared_ptr<const ReferencePath>> make_random_path_pool(
    std::uint64_t master_seed, int n_paths,
    const RandomPathConfig& config = {});

}  // namespace driftsim
