#include "driftsim/env.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace driftsim {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kRunning:
      return "running";
    case Termination::kOffTrack:
      return "off_track";
    case Termination::kDiverged:
      return "diverged";
    case Termination::kMaxSteps:
      return "max_steps";
  }
  return "unknown";
}

int observation_dim(const EnvConfig& cfg) { return 4 * cfg.n_preview + 16; }

void build_observation(const VehicleState& state, const ReferencePath& path,
                       const TrackingErrors& errors,
                       const AppliedAction& prev_action,
                       const EnvConfig& cfg, std::span<double> out) {
  assert(static_cast<int>(out.size()) == observation_dim(cfg));
  if (!state.finite()) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const auto pts = preview(state, path, errors.s_proj, cfg.n_preview,
                           cfg.preview_spacing);
  std::size_t k = 0;
  for (const PreviewPoint& p : pts) {
    out[k++] = p.x_rel;
    out[k++] = p.y_rel;
    out[k++] = p.theta_rel;
    out[k++] = p.beta_ref;
  }
  out[k++] = errors.e_pos;
  out[k++] = errors.e_dir;
  out[k++] = errors.e_kappa;
  out[k++] = errors.e_beta;
  out[k++] = state.psidot;
  out[k++] = state.sideslip();
  out[k++] = state.speed();
  for (int w = 0; w < kNumWheels; ++w) out[k++] = prev_action.wheel_speed[w];
  out[k++] = prev_action.delta;
  for (int w = 0; w < kNumWheels; ++w) out[k++] = prev_action.wheel_speed[w];
}

RewardBreakdown compute_reward(const TrackingErrors& errors,
                               const AppliedAction& action,
                               const AppliedAction& prev_action,
                               const WheelKinematics& kin, double speed,
                               double progress_ds, const RewardWeights& w,
                               const VehicleParams& params) {
  RewardBreakdown b;
  b.pos = -errors.e_pos * errors.e_pos;
  b.dir = -errors.e_dir * errors.e_dir;
  b.curv = -errors.e_kappa * errors.e_kappa;
  b.drift = -errors.e_beta * errors.e_beta;

  const double ddelta = action.delta - prev_action.delta;
  double domega_sq = 0.0;
  for (int i = 0; i < kNumWheels; ++i) {
    const double dw = (action.wheel_speed[i] - prev_action.wheel_speed[i]) /
                      params.wheel_radius;
    domega_sq += dw * dw;
  }
  b.smooth = -ddelta * ddelta - 1e-4 * domega_sq;

  double slip = 0.0;
  for (int i : {kFl, kFr}) {
    const double mismatch = kin.vx[i] - action.wheel_speed[i];
    slip += mismatch * mismatch;
  }
  b.slip = -slip;

  b.speed = std::min(0.0, speed - 0.5);

  constexpr double kProgCap = 0.03;  // m, one step at the speed ceiling
  b.prog = std::clamp(progress_ds, 0.0, kProgCap) / kProgCap;

  b.total = w.w_pos * b.pos + w.w_dir * b.dir + w.w_curv * b.curv +
            w.w_drift * b.drift + w.w_smooth * b.smooth + w.w_slip * b.slip +
            w.w_speed * b.speed + w.w_prog * b.prog;
  return b;
}

DisturbanceState disturbance_step(const DisturbanceState& d, double a,
                                  double w, Rng& rng) {
  DisturbanceState out;
  for (std::size_t i = 0; i < out.d.size(); ++i) {
    out.d[i] = std::clamp(a * d.d[i] + w * rng.normal(), -0.5, 0.5);
  }
  return out;
}

DriftEnv::DriftEnv(std::vector<std::shared_ptr<const ReferencePath>> paths,
                   const EnvConfig& cfg, const VehicleParams& vehicle,
                   std::uint64_t master_seed, int n_envs)
    : paths_(std::move(paths)), cfg_(cfg), vehicle_(vehicle) {
  assert(!paths_.empty());
  inst_.resize(static_cast<std::size_t>(n_envs));
  last_terminations_.assign(static_cast<std::size_t>(n_envs),
                            Termination::kRunning);
  terminal_obs_.setZero(observation_dim(cfg_), n_envs);
  for (int i = 0; i < n_envs; ++i) {
    inst_[i].rng = Rng::stream(master_seed,
                               stream_id::kInstanceBase +
                                   static_cast<std::uint64_t>(i));
    reset_instance(i);
  }
}

Eigen::VectorXd DriftEnv::action_low() const {
  Eigen::VectorXd lo(5);
  lo << -vehicle_.delta_max, cfg_.v_cmd_min, cfg_.v_cmd_min, cfg_.v_cmd_min,
      cfg_.v_cmd_min;
  return lo;
}

Eigen::VectorXd DriftEnv::action_high() const {
  Eigen::VectorXd hi(5);
  hi << vehicle_.delta_max, cfg_.v_cmd_max, cfg_.v_cmd_max, cfg_.v_cmd_max,
      cfg_.v_cmd_max;
  return hi;
}

void DriftEnv::reset_instance(int idx) {
  Instance& in = inst_[idx];
  const RandomizationConfig& rand = cfg_.rand;

  in.path_index = (rand.randomize_trajectory && paths_.size() > 1)
                      ? static_cast<int>(in.rng.uniform_below(paths_.size()))
                      : 0;
  const ReferencePath& path = *paths_[in.path_index];
  const double s0 = in.rng.uniform(0.0, path.total_length);
  const Waypoint& wp = path.waypoints[path.index_at(s0)];

  double dx = 0.0, dy = 0.0, dpsi = 0.0, v = 0.0, beta = 0.0, r = 0.0;
  if (rand.randomize_init_state) {
    dx = in.rng.normal(0.0, rand.sigma_pos);
    dy = in.rng.normal(0.0, rand.sigma_pos);
    dpsi = in.rng.normal(0.0, rand.sigma_heading);
    v = in.rng.uniform(rand.v_init_min, rand.v_init_max);
    const double beta_raw =
        in.rng.uniform(rand.beta_init_min, rand.beta_init_max);
    const double r_mag = in.rng.uniform(rand.r_init_min, rand.r_init_max);
    // Magnitudes come from the configured ranges; signs follow the local
    // geometry so the initial spin matches the upcoming corner. On straight
    // stretches beta keeps its raw draw and r opposes it.
    beta = wp.beta_ref != 0.0 ? sign_of(wp.beta_ref) * std::abs(beta_raw)
                              : beta_raw;
    r = wp.kappa != 0.0
            ? sign_of(wp.kappa) * r_mag
            : (beta == 0.0 ? r_mag : -sign_of(beta) * r_mag);
  }
  if (rand.randomize_tires) {
    in.tires.b = in.rng.uniform(rand.b_min, rand.b_max);
    in.tires.c = in.rng.uniform(rand.c_min, rand.c_max);
    in.tires.d = in.rng.uniform(rand.d_min, rand.d_max);
  } else {
    in.tires.b = 0.5 * (rand.b_min + rand.b_max);
    in.tires.c = 0.5 * (rand.c_min + rand.c_max);
    in.tires.d = 0.5 * (rand.d_min + rand.d_max);
  }
  in.dist = DisturbanceState{};

  VehicleState s;
  s.x = wp.x + dx;
  s.y = wp.y + dy;
  s.psi = wrap_angle(wp.theta + dpsi);
  s.xdot = v * std::cos(s.psi + beta);
  s.ydot = v * std::sin(s.psi + beta);
  s.psidot = r;
  in.state = s;

  in.prev_action = AppliedAction{};
  in.hint = static_cast<std::ptrdiff_t>(path.index_at(s0));
  in.errors = project(s, path, &in.hint, 0.0);
  in.prev_beta = s.sideslip();
  in.status = EpisodeStatus{};
  in.breakdown = RewardBreakdown{};
  in.sum_reward = 0.0;
  in.sum_abs_beta = 0.0;
  in.sum_sq_epos = 0.0;
}

void DriftEnv::write_observation(int i, Eigen::Ref<Eigen::MatrixXd> obs) {
  Instance& in = inst_[i];
  build_observation(in.state, *paths_[in.path_index], in.errors,
                    in.prev_action, cfg_,
                    std::span<double>(obs.col(i).data(),
                                      static_cast<std::size_t>(obs.rows())));
}

void DriftEnv::reset_all(Eigen::Ref<Eigen::MatrixXd> obs) {
  for (int i = 0; i < num_envs(); ++i) {
    reset_instance(i);
    write_observation(i, obs);
  }
}

void DriftEnv::finish_episode(Instance& in, int idx) {
  EpisodeSummary s;
  s.instance = idx;
  s.path_index = in.path_index;
  s.reason = in.status.terminated;
  s.steps = in.status.step_count;
  s.ep_return = in.sum_reward;
  const double n = std::max(1, in.status.step_count);
  s.mean_abs_beta = in.sum_abs_beta / n;
  s.rmse_epos = std::sqrt(in.sum_sq_epos / n);
  s.progress_s = in.status.progress_s;
  summaries_.push_back(s);
}

std::vector<EpisodeSummary> DriftEnv::drain_summaries() {
  std::vector<EpisodeSummary> out;
  out.swap(summaries_);
  return out;
}

void DriftEnv::step(const Eigen::Ref<const Eigen::MatrixXd>& actions,
                    Eigen::Ref<Eigen::MatrixXd> obs,
                    Eigen::Ref<Eigen::VectorXd> rewards,
                    std::vector<std::uint8_t>& dones) {
  const int n = num_envs();
  assert(actions.rows() == 5 && actions.cols() == n);
  dones.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> newly_done(static_cast<std::size_t>(n), 0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Instance& in = inst_[i];
    if (in.status.terminated != Termination::kRunning) {
      // Only reachable with auto-reset off: hold the terminal state.
      rewards(i) = 0.0;
      dones[i] = 1;
      continue;
    }

    AppliedAction act;
    act.delta =
        std::clamp(actions(0, i), -vehicle_.delta_max, vehicle_.delta_max);
    for (int w = 0; w < kNumWheels; ++w) {
      act.wheel_speed[w] =
          std::clamp(actions(1 + w, i), cfg_.v_cmd_min, cfg_.v_cmd_max);
    }

    if (cfg_.rand.randomize_disturbance) {
      in.dist = disturbance_step(in.dist, cfg_.rand.ar_a, cfg_.rand.ar_w,
                                 in.rng);
    }

    const ControlInput u = act.to_control(vehicle_);
    const StepResult res =
        driftsim::step(in.state, u, vehicle_, in.tires, in.dist, cfg_.dt);
    in.state = res.state;
    bool diverged = res.diverged;

    double ds = 0.0;
    const ReferencePath& path = *paths_[in.path_index];
    if (!diverged) {
      const double s_prev = in.errors.s_proj;
      const double beta = in.state.sideslip();
      const double beta_dot = wrap_angle(beta - in.prev_beta) / cfg_.dt;
      in.errors = project(in.state, path, &in.hint, beta_dot);
      in.prev_beta = beta;
      ds = in.errors.s_proj - s_prev;
      if (path.closed) {
        if (ds > 0.5 * path.total_length) ds -= path.total_length;
        if (ds < -0.5 * path.total_length) ds += path.total_length;
      }
      const WheelKinematics kin = wheel_kinematics(in.state, u, vehicle_);
      in.breakdown =
          compute_reward(in.errors, act, in.prev_action, kin,
                         in.state.speed(), ds, cfg_.weights, vehicle_);
    } else {
      in.breakdown = RewardBreakdown{};
    }

    in.prev_action = act;
    in.status.step_count += 1;
    in.status.progress_s += ds;

    if (diverged) {
      in.status.terminated = Termination::kDiverged;
    } else if (std::abs(in.errors.e_pos) > cfg_.off_track_limit) {
      in.status.terminated = Termination::kOffTrack;
    } else if (in.status.step_count >= cfg_.max_steps) {
      in.status.terminated = Termination::kMaxSteps;
    }
    if (in.status.terminated == Termination::kOffTrack ||
        in.status.terminated == Termination::kDiverged) {
      in.breakdown.term = -1.0;
      in.breakdown.total -= cfg_.weights.w_term;
    }

    in.sum_reward += in.breakdown.total;
    if (!diverged) {
      in.sum_abs_beta += std::abs(in.state.sideslip());
      in.sum_sq_epos += in.errors.e_pos * in.errors.e_pos;
    }

    rewards(i) = in.breakdown.total;
    if (in.status.terminated != Termination::kRunning) {
      dones[i] = 1;
      newly_done[i] = 1;
    }
  }

  for (int i = 0; i < n; ++i) {
    last_terminations_[i] =
        newly_done[i] ? inst_[i].status.terminated : Termination::kRunning;
    if (newly_done[i] && inst_[i].state.finite()) {
      write_observation(i, terminal_obs_);
    }
  }

  if (cfg_.auto_reset) {
    for (int i = 0; i < n; ++i) {
      if (newly_done[i]) {
        finish_episode(inst_[i], i);
        reset_instance(i);
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    write_observation(i, obs);
  }
}

std::vector<std::shared_ptr<const ReferencePath>> make_random_path_pool(
    std::uint64_t master_seed, int n_paths, const RandomPathConfig& config) {
  std::vector<std::shared_ptr<const ReferencePath>> pool;
  pool.reserve(static_cast<std::size_t>(n_paths));
  for (int i = 0; i < n_paths; ++i) {
    pool.push_back(std::make_shared<const ReferencePath>(gen_random_path(
        stream_seed(master_seed,
                    stream_id::kPathPool + static_cast<std::uint64_t>(i)),
        config)));
  }
  return pool;
}

}  // namespace driftsim
