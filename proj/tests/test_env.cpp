#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "driftsim/dynamics.hpp"
#include "driftsim/env.hpp"
#include "driftsim/path.hpp"
#include "driftsim/rng.hpp"
#include "driftsim/toy_env.hpp"

using namespace driftsim;

namespace {

ReferencePath make_straight(double length) {
  ReferencePath p;
  const auto n = static_cast<std::size_t>(std::llround(length / kWaypointSpacing));
  p.waypoints.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    Waypoint& w = p.waypoints[i];
    w.s = static_cast<double>(i) * kWaypointSpacing;
    w.x = w.s;
  }
  p.closed = false;
  p.total_length = static_cast<double>(n) * kWaypointSpacing;
  return p;
}

std::vector<std::shared_ptr<const ReferencePath>> single_path(
    ReferencePath path) {
  std::vector<std::shared_ptr<const ReferencePath>> pool;
  pool.push_back(std::make_shared<const ReferencePath>(std::move(path)));
  return pool;
}

EnvConfig config_without_randomization() {
  EnvConfig cfg;
  cfg.rand.randomize_init_state = false;
  cfg.rand.randomize_tires = false;
  cfg.rand.randomize_disturbance = false;
  cfg.rand.randomize_trajectory = false;
  return cfg;
}

// Kolmogorov-Smirnov distance between a sample and a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

double gaussian_cdf(double x, double sigma) {
  return 0.5 * (1.0 + std::erf(x / (sigma * std::sqrt(2.0))));
}

double sample_std(const std::vector<double>& v) {
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

Eigen::MatrixXd random_actions(Rng& rng, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi, int n) {
  Eigen::MatrixXd a(lo.size(), n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < lo.size(); ++i) {
      // Widened range so some entries land outside the bounds.
      a(i, j) = rng.uniform(lo(i) - 0.5, hi(i) + 0.5);
    }
  }
  return a;
}

}  // namespace

TEST_CASE("observation dimension matches the layout") {
  EnvConfig cfg;
  CHECK(observation_dim(cfg) == 56);
  cfg.n_preview = 4;
  CHECK(observation_dim(cfg) == 32);
}

TEST_CASE("termination names") {
  CHECK(std::string(termination_name(Termination::kRunning)) == "running");
  CHECK(std::string(termination_name(Termination::kOffTrack)) == "off_track");
  CHECK(std::string(termination_name(Termination::kDiverged)) == "diverged");
  CHECK(std::string(termination_name(Termination::kMaxSteps)) == "max_steps");
}

TEST_CASE("reward is zero under perfect steady tracking") {
  TrackingErrors e{};
  AppliedAction act;
  act.delta = 0.1;
  act.wheel_speed = {2.0, 2.0, 2.0, 2.0};
  WheelKinematics kin{};
  for (int i = 0; i < kNumWheels; ++i) kin.vx[i] = act.wheel_speed[i];
  const RewardBreakdown b =
      compute_reward(e, act, act, kin, 2.0, 0.0, RewardWeights{},
                     VehicleParams{});
  CHECK(b.total == 0.0);
}

TEST_CASE("speed deficit term") {
  TrackingErrors e{};
  AppliedAction act;
  act.wheel_speed = {1.0, 1.0, 1.0, 1.0};
  WheelKinematics kin{};
  for (int i = 0; i < kNumWheels; ++i) kin.vx[i] = act.wheel_speed[i];
  const RewardBreakdown b =
      compute_reward(e, act, act, kin, 0.3, 0.0, RewardWeights{},
                     VehicleParams{});
  CHECK(b.speed == doctest::Approx(-0.2));
  CHECK(b.total == doctest::Approx(-0.02));

  const RewardBreakdown fast =
      compute_reward(e, act, act, kin, 1.7, 0.0, RewardWeights{},
                     VehicleParams{});
  CHECK(fast.speed == 0.0);
}

TEST_CASE("steering smoothness term") {
  TrackingErrors e{};
  AppliedAction prev;
  prev.wheel_speed = {2.0, 2.0, 2.0, 2.0};
  AppliedAction act = prev;
  act.delta = 0.1;
  WheelKinematics kin{};
  for (int i = 0; i < kNumWheels; ++i) kin.vx[i] = act.wheel_speed[i];
  const RewardBreakdown b =
      compute_reward(e, act, prev, kin, 2.0, 0.0, RewardWeights{},
                     VehicleParams{});
  CHECK(b.smooth == doctest::Approx(-0.01));
  CHECK(b.total == doctest::Approx(-1.5e-4));
}

TEST_CASE("wheel-speed smoothness uses angular rates") {
  TrackingErrors e{};
  VehicleParams p;
  AppliedAction prev;
  prev.wheel_speed = {2.0, 2.0, 2.0, 2.0};
  AppliedAction act = prev;
  act.wheel_speed[kFl] = 2.5;
  WheelKinematics kin{};
  for (int i = 0; i < kNumWheels; ++i) kin.vx[i] = act.wheel_speed[i];
  const RewardBreakdown b =
      compute_reward(e, act, prev, kin, 2.0, 0.0, RewardWeights{}, p);
  const double domega = 0.5 / p.wheel_radius;
  CHECK(b.smooth == doctest::Approx(-1e-4 * domega * domega));
}

TEST_CASE("slip penalty covers the front wheels only") {
  TrackingErrors e{};
  AppliedAction act;
  act.wheel_speed = {2.0, 2.0, 2.0, 2.0};
  WheelKinematics kin{};
  kin.vx = {1.0, 1.5, 0.0, 5.0};  // rear mismatches must not count
  const RewardBreakdown b =
      compute_reward(e, act, act, kin, 2.0, 0.0, RewardWeights{},
                     VehicleParams{});
  CHECK(b.slip == doctest::Approx(-(1.0 + 0.25)));
}

TEST_CASE("progress term saturates at one step of top speed") {
  TrackingErrors e{};
  AppliedAction act;
  act.wheel_speed = {2.0, 2.0, 2.0, 2.0};
  WheelKinematics kin{};
  for (int i = 0; i < kNumWheels; ++i) kin.vx[i] = act.wheel_speed[i];
  const RewardWeights w;
  const VehicleParams p;
  CHECK(compute_reward(e, act, act, kin, 2.0, 0.015, w, p).prog ==
        doctest::Approx(0.5));
  CHECK(compute_reward(e, act, act, kin, 2.0, 1.0, w, p).prog ==
        doctest::Approx(1.0));
  CHECK(compute_reward(e, act, act, kin, 2.0, -0.4, w, p).prog == 0.0);
}

TEST_CASE("progress is the only positive contribution") {
  Rng rng(42);
  const RewardWeights w;
  const VehicleParams p;
  for (int trial = 0; trial < 1000; ++trial) {
    TrackingErrors e;
    e.e_pos = rng.uniform(-1.0, 1.0);
    e.e_dir = rng.uniform(-3.0, 3.0);
    e.e_kappa = rng.uniform(-5.0, 5.0);
    e.e_beta = rng.uniform(-2.0, 2.0);
    AppliedAction prev, act;
    prev.delta = rng.uniform(-0.46, 0.46);
    act.delta = rng.uniform(-0.46, 0.46);
    WheelKinematics kin{};
    for (int i = 0; i < kNumWheels; ++i) {
      prev.wheel_speed[i] = rng.uniform(1.0, 7.0);
      act.wheel_speed[i] = rng.uniform(1.0, 7.0);
      kin.vx[i] = rng.uniform(-2.0, 8.0);
    }
    const double speed = rng.uniform(0.0, 7.0);
    const double ds = rng.uniform(-0.1, 0.1);
    const RewardBreakdown b = compute_reward(e, act, prev, kin, speed, ds, w, p);
    CHECK(b.pos <= 0.0);
    CHECK(b.dir <= 0.0);
    CHECK(b.curv <= 0.0);
    CHECK(b.drift <= 0.0);
    CHECK(b.smooth <= 0.0);
    CHECK(b.slip <= 0.0);
    CHECK(b.speed <= 0.0);
    CHECK(b.prog >= 0.0);
    CHECK(b.prog <= 1.0);
    CHECK(b.total <= w.w_prog);
  }
}

TEST_CASE("disturbance stationary spread matches the linear recursion") {
  const double a = 0.95;
  const double w = 0.1;
  const double target = w / std::sqrt(1.0 - a * a);
  CHECK(target == doctest::Approx(0.3202563).epsilon(1e-6));

  Rng rng_clip(123);
  Rng rng_lin(123);  // same seed, so both chains see the same noise
  DisturbanceState d{};
  std::array<double, 8> lin{};
  const int kBurnIn = 1000;
  const int kSteps = 125000;
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(kSteps) * 8);
  long clip_active = 0;
  long clip_total = 0;
  for (int t = 0; t < kBurnIn + kSteps; ++t) {
    d = disturbance_step(d, a, w, rng_clip);
    for (double& x : lin) x = a * x + w * rng_lin.normal();
    for (double v : d.d) {
      CHECK(std::abs(v) <= 0.5);
      if (t >= kBurnIn) {
        ++clip_total;
        if (std::abs(v) == 0.5) ++clip_active;
      }
    }
    if (t >= kBurnIn) {
      for (double x : lin) pooled.push_back(x);
    }
  }
  const double sd = sample_std(pooled);
  CHECK(std::abs(sd - target) / target < 0.03);
  CHECK(static_cast<double>(clip_active) / static_cast<double>(clip_total) <
        0.12);
}

TEST_CASE("disturbance with zero gain decays geometrically") {
  Rng rng(7);
  DisturbanceState d;
  d.d = {0.4, -0.3, 0.2, -0.1, 0.05, 0.5, -0.5, 0.25};
  const DisturbanceState d0 = d;
  for (int t = 1; t <= 20; ++t) {
    d = disturbance_step(d, 0.95, 0.0, rng);
    for (std::size_t i = 0; i < d.d.size(); ++i) {
      CHECK(d.d[i] == doctest::Approx(d0.d[i] * std::pow(0.95, t)));
    }
  }
}

TEST_CASE("disturbance updates are deterministic per seed") {
  Rng r1(99), r2(99);
  DisturbanceState a{}, b{};
  for (int t = 0; t < 100; ++t) {
    a = disturbance_step(a, 0.95, 0.1, r1);
    b = disturbance_step(b, 0.95, 0.1, r2);
    CHECK(a.d == b.d);
  }
}

TEST_CASE("aligned vehicle at rest observes zeros outside the preview") {
  const ReferencePath path = make_straight(40.0);
  const EnvConfig cfg;
  VehicleState s;
  s.x = path.waypoints[100].x;
  s.y = 0.0;
  std::ptrdiff_t hint = -1;
  const TrackingErrors e = project(s, path, &hint, 0.0);
  CHECK(hint == 100);

  std::vector<double> obs(static_cast<std::size_t>(observation_dim(cfg)));
  build_observation(s, path, e, AppliedAction{}, cfg, obs);
  for (int k = 0; k < cfg.n_preview; ++k) {
    CHECK(obs[4 * k + 0] ==
          doctest::Approx(0.1 * (k + 1)).epsilon(1e-9));
    CHECK(std::abs(obs[4 * k + 1]) < 1e-12);
    CHECK(std::abs(obs[4 * k + 2]) < 1e-12);
    CHECK(obs[4 * k + 3] == 0.0);
  }
  for (std::size_t i = 40; i < obs.size(); ++i) CHECK(obs[i] == 0.0);
}

TEST_CASE("sideslip slot reports pi/2 for pure lateral motion") {
  const ReferencePath path = make_straight(40.0);
  const EnvConfig cfg;
  VehicleState s;
  s.x = 1.0;
  s.ydot = 1.0;  // xdot = 0, psi = 0
  std::ptrdiff_t hint = -1;
  const TrackingErrors e = project(s, path, &hint, 0.0);
  std::vector<double> obs(static_cast<std::size_t>(observation_dim(cfg)));
  build_observation(s, path, e, AppliedAction{}, cfg, obs);
  CHECK(obs[45] == doctest::Approx(M_PI / 2));
  CHECK(obs[46] == doctest::Approx(1.0));
}

TEST_CASE("non-finite state yields an all-zero observation") {
  const ReferencePath path = make_straight(10.0);
  const EnvConfig cfg;
  VehicleState s;
  s.x = std::numeric_limits<double>::quiet_NaN();
  TrackingErrors e{};
  std::vector<double> obs(static_cast<std::size_t>(observation_dim(cfg)), 1.0);
  build_observation(s, path, e, AppliedAction{}, cfg, obs);
  for (double v : obs) CHECK(v == 0.0);
}

TEST_CASE("observation is invariant under rigid motions") {
  const ReferencePath base = gen_circle(1.0);
  const EnvConfig cfg;
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    VehicleState s;
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double rad = 1.0 + rng.uniform(-0.3, 0.3);
    s.x = rad * std::cos(ang);
    s.y = rad * std::sin(ang);
    s.psi = rng.uniform(-M_PI, M_PI);
    s.xdot = rng.uniform(-3.0, 3.0);
    s.ydot = rng.uniform(-3.0, 3.0);
    s.psidot = rng.uniform(-3.0, 3.0);
    AppliedAction prev;
    prev.delta = rng.uniform(-0.46, 0.46);
    for (int i = 0; i < kNumWheels; ++i) {
      prev.wheel_speed[i] = rng.uniform(1.0, 7.0);
    }

    const double phi = rng.uniform(-M_PI, M_PI);
    const double tx = rng.uniform(-20.0, 20.0);
    const double ty = rng.uniform(-20.0, 20.0);
    const double c = std::cos(phi), sn = std::sin(phi);

    ReferencePath moved = base;
    for (Waypoint& w : moved.waypoints) {
      const double x = w.x, y = w.y;
      w.x = c * x - sn * y + tx;
      w.y = sn * x + c * y + ty;
      w.theta = wrap_angle(w.theta + phi);
    }
    VehicleState ms;
    ms.x = c * s.x - sn * s.y + tx;
    ms.y = sn * s.x + c * s.y + ty;
    ms.psi = wrap_angle(s.psi + phi);
    ms.xdot = c * s.xdot - sn * s.ydot;
    ms.ydot = sn * s.xdot + c * s.ydot;
    ms.psidot = s.psidot;

    std::ptrdiff_t h1 = -1, h2 = -1;
    const double beta_dot = rng.uniform(-2.0, 2.0);
    const TrackingErrors e1 = project(s, base, &h1, beta_dot);
    const TrackingErrors e2 = project(ms, moved, &h2, beta_dot);
    CHECK(h1 == h2);

    std::vector<double> o1(static_cast<std::size_t>(observation_dim(cfg)));
    std::vector<double> o2(o1.size());
    build_observation(s, base, e1, prev, cfg, o1);
    build_observation(ms, moved, e2, prev, cfg, o2);
    for (std::size_t i = 0; i < o1.size(); ++i) {
      CHECK(std::abs(o1[i] - o2[i]) < 1e-9);
    }
  }
}

TEST_CASE("reset draws follow the configured distributions") {
  const int n = 100000;
  EnvConfig cfg;
  DriftEnv env(single_path(make_straight(40.0)), cfg, VehicleParams{}, 31337,
               n);

  std::vector<double> dy, dpsi, speed, beta, rmag, tire_b;
  dy.reserve(n);
  dpsi.reserve(n);
  speed.reserve(n);
  beta.reserve(n);
  rmag.reserve(n);
  tire_b.reserve(n);
  for (int i = 0; i < n; ++i) {
    const VehicleState& s = env.state(i);
    dy.push_back(s.y);
    dpsi.push_back(wrap_angle(s.psi));
    speed.push_back(s.speed());
    const double b = s.speed() > 1e-9
                         ? wrap_angle(std::atan2(s.ydot, s.xdot) - s.psi)
                         : 0.0;
    beta.push_back(b);
    rmag.push_back(std::abs(s.psidot));
    tire_b.push_back(env.tires(i).b);
    // On a straight path the yaw rate counter-rotates the sideslip.
    if (b != 0.0) CHECK(s.psidot * b < 0.0);
    CHECK(env.tires(i).c >= 2.0);
    CHECK(env.tires(i).c <= 2.5);
    CHECK(env.tires(i).d >= 0.3);
    CHECK(env.tires(i).d <= 0.4);
  }

  CHECK(std::abs(sample_std(dy) - 0.1) < 0.005);
  CHECK(std::abs(sample_std(dpsi) - 0.1) < 0.005);
  const double b_mean = std::accumulate(tire_b.begin(), tire_b.end(), 0.0) / n;
  CHECK(std::abs(b_mean - 0.9) < 0.01);

  const double ks_crit = 1.949 / std::sqrt(static_cast<double>(n));  // 0.1%
  CHECK(ks_statistic(dy, [](double x) { return gaussian_cdf(x, 0.1); }) <
        ks_crit);
  CHECK(ks_statistic(speed, [](double x) {
          return std::clamp(x / 3.0, 0.0, 1.0);
        }) < ks_crit);
  CHECK(ks_statistic(beta, [](double x) {
          return std::clamp((x + 1.0) / 2.0, 0.0, 1.0);
        }) < ks_crit);
  CHECK(ks_statistic(rmag, [](double x) {
          return std::clamp((x - 1.0) / 2.0, 0.0, 1.0);
        }) < ks_crit);
  CHECK(ks_statistic(tire_b, [](double x) {
          return std::clamp((x - 0.8) / 0.2, 0.0, 1.0);
        }) < ks_crit);
}

TEST_CASE("reset signs follow the local corner direction") {
  const int n = 2000;
  EnvConfig cfg;
  DriftEnv env(single_path(gen_circle(1.0)), cfg, VehicleParams{}, 5150, n);
  for (int i = 0; i < n; ++i) {
    const VehicleState& s = env.state(i);
    // Counter-clockwise circle: beta_ref < 0 and kappa > 0 everywhere.
    const double b = wrap_angle(std::atan2(s.ydot, s.xdot) - s.psi);
    if (s.speed() > 1e-9) CHECK(b <= 0.0);
    CHECK(s.psidot >= 1.0);
    CHECK(s.psidot <= 3.0);
  }
}

TEST_CASE("disabling randomization gives on-path rest starts") {
  DriftEnv env(single_path(gen_circle(1.0)), config_without_randomization(),
               VehicleParams{}, 99, 16);
  for (int i = 0; i < 16; ++i) {
    const VehicleState& s = env.state(i);
    CHECK(s.xdot == 0.0);
    CHECK(s.ydot == 0.0);
    CHECK(s.psidot == 0.0);
    CHECK(env.errors(i).e_pos == 0.0);
    CHECK(env.tires(i).b == doctest::Approx(0.9));
    CHECK(env.tires(i).c == doctest::Approx(2.25));
    CHECK(env.tires(i).d == doctest::Approx(0.35));
    bool on_waypoint = false;
    const ReferencePath& path = env.path_of(i);
    for (const Waypoint& w : path.waypoints) {
      if (w.x == s.x && w.y == s.y && wrap_angle(w.theta) == s.psi) {
        on_waypoint = true;
        break;
      }
    }
    CHECK(on_waypoint);
  }
}

TEST_CASE("identical seeds give identical rollouts") {
  auto pool = make_random_path_pool(2711, 3);
  EnvConfig cfg;
  DriftEnv a(pool, cfg, VehicleParams{}, 17, 4);
  DriftEnv b(pool, cfg, VehicleParams{}, 17, 4);

  Eigen::MatrixXd oa(a.obs_dim(), 4), ob(a.obs_dim(), 4);
  Eigen::VectorXd ra(4), rb(4);
  std::vector<std::uint8_t> da, db;
  a.reset_all(oa);
  b.reset_all(ob);
  CHECK(oa == ob);

  Rng act_rng(555);
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXd acts =
        random_actions(act_rng, a.action_low(), a.action_high(), 4);
    a.step(acts, oa, ra, da);
    b.step(acts, ob, rb, db);
    CHECK(oa == ob);
    CHECK(ra == rb);
    CHECK(da == db);
  }
  CHECK(a.drain_summaries().size() == b.drain_summaries().size());
}

TEST_CASE("instance streams do not depend on the batch size") {
  auto pool = make_random_path_pool(2711, 3);
  EnvConfig cfg;
  DriftEnv small(pool, cfg, VehicleParams{}, 404, 2);
  DriftEnv large(pool, cfg, VehicleParams{}, 404, 6);

  Eigen::MatrixXd os(small.obs_dim(), 2), ol(large.obs_dim(), 6);
  Eigen::VectorXd rs(2), rl(6);
  std::vector<std::uint8_t> ds, dl;
  small.reset_all(os);
  large.reset_all(ol);
  CHECK(os == ol.leftCols(2));

  Rng act_rng(808);
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd acts =
        random_actions(act_rng, large.action_low(), large.action_high(), 6);
    small.step(acts.leftCols(2), os, rs, ds);
    large.step(acts, ol, rl, dl);
    CHECK(os == ol.leftCols(2));
    CHECK(rs(0) == rl(0));
    CHECK(rs(1) == rl(1));
    CHECK(ds[0] == dl[0]);
    CHECK(ds[1] == dl[1]);
  }
}

TEST_CASE("out-of-bounds actions behave exactly like clamped ones") {
  auto pool = single_path(gen_circle(1.0));
  EnvConfig cfg;
  DriftEnv a(pool, cfg, VehicleParams{}, 1234, 1);
  DriftEnv b(pool, cfg, VehicleParams{}, 1234, 1);

  Eigen::MatrixXd oa(a.obs_dim(), 1), ob(a.obs_dim(), 1);
  Eigen::VectorXd ra(1), rb(1);
  std::vector<std::uint8_t> da, db;
  Eigen::MatrixXd raw(5, 1), clamped(5, 1);
  raw << 10.0, 999.0, -5.0, 3.0, 0.0;
  clamped << 0.46, 7.0, 1.0, 3.0, 1.0;
  for (int t = 0; t < 50; ++t) {
    a.step(raw, oa, ra, da);
    b.step(clamped, ob, rb, db);
    CHECK(oa == ob);
    CHECK(ra(0) == rb(0));
  }
  CHECK(a.prev_action(0).delta == 0.46);
  CHECK(a.prev_action(0).wheel_speed[kFl] == 7.0);
  CHECK(a.prev_action(0).wheel_speed[kFr] == 1.0);
  CHECK(a.prev_action(0).wheel_speed[kRl] == 3.0);
  CHECK(a.prev_action(0).wheel_speed[kRr] == 1.0);
}

TEST_CASE("leaving the track tube terminates the episode") {
  EnvConfig cfg = config_without_randomization();
  cfg.auto_reset = false;
  DriftEnv env(single_path(gen_circle(1.0)), cfg, VehicleParams{}, 3, 1);

  Eigen::MatrixXd obs(env.obs_dim(), 1);
  Eigen::VectorXd rew(1);
  std::vector<std::uint8_t> done;
  Eigen::MatrixXd full_throttle(5, 1);
  full_throttle << 0.0, 7.0, 7.0, 7.0, 7.0;

  int steps = 0;
  do {
    env.step(full_throttle, obs, rew, done);
    ++steps;
  } while (!done[0] && steps < 1500);
  CHECK(done[0] == 1);
  CHECK(env.status(0).terminated == Termination::kOffTrack);
  CHECK(std::abs(env.errors(0).e_pos) > 1.0);
  CHECK(steps < 1500);

  // With auto-reset off the terminal state is held.
  const VehicleState before = env.state(0);
  env.step(full_throttle, obs, rew, done);
  CHECK(done[0] == 1);
  CHECK(rew(0) == 0.0);
  CHECK(env.state(0).x == before.x);
  CHECK(env.status(0).terminated == Termination::kOffTrack);
}

TEST_CASE("staying on the path runs to the step limit") {
  EnvConfig cfg = config_without_randomization();
  cfg.auto_reset = false;
  DriftEnv env(single_path(make_straight(60.0)), cfg, VehicleParams{}, 11, 1);

  Eigen::MatrixXd obs(env.obs_dim(), 1);
  Eigen::VectorXd rew(1);
  std::vector<std::uint8_t> done;
  Eigen::MatrixXd cruise(5, 1);
  cruise << 0.0, 2.0, 2.0, 2.0, 2.0;

  for (int t = 0; t < 1499; ++t) {
    env.step(cruise, obs, rew, done);
    CHECK(done[0] == 0);
    CHECK(std::abs(env.errors(0).e_pos) < 1e-6);
  }
  env.step(cruise, obs, rew, done);
  CHECK(done[0] == 1);
  CHECK(env.status(0).terminated == Termination::kMaxSteps);
  CHECK(env.status(0).step_count == 1500);
}

TEST_CASE("crashing costs w_term on the final step, timing out does not") {
  auto run_to_done = [](const EnvConfig& cfg, const ReferencePath& path,
                        const Eigen::MatrixXd& action, double* last_reward,
                        RewardBreakdown* last_breakdown) {
    DriftEnv env(single_path(path), cfg, VehicleParams{}, 3, 1);
    Eigen::MatrixXd obs(env.obs_dim(), 1);
    Eigen::VectorXd rew(1);
    std::vector<std::uint8_t> done;
    int steps = 0;
    do {
      env.step(action, obs, rew, done);
      ++steps;
    } while (!done[0] && steps < 2000);
    REQUIRE(done[0] == 1);
    *last_reward = rew(0);
    *last_breakdown = env.reward_breakdown(0);
    return env.status(0).terminated;
  };

  EnvConfig with = config_without_randomization();
  with.auto_reset = false;
  EnvConfig without = with;
  without.weights.w_term = 0.0;

  Eigen::MatrixXd full_throttle(5, 1);
  full_throttle << 0.0, 7.0, 7.0, 7.0, 7.0;
  double rew_with = 0.0, rew_without = 0.0;
  RewardBreakdown bd_with, bd_without;
  const auto why_with = run_to_done(with, gen_circle(1.0), full_throttle,
                                    &rew_with, &bd_with);
  const auto why_without = run_to_done(without, gen_circle(1.0), full_throttle,
                                       &rew_without, &bd_without);

  // The penalty does not touch the dynamics, so both runs crash identically
  // and the final rewards differ by exactly the default weight.
  CHECK(why_with == Termination::kOffTrack);
  CHECK(why_without == Termination::kOffTrack);
  CHECK(bd_with.term == -1.0);
  CHECK(bd_without.term == -1.0);
  CHECK(rew_with == rew_without - with.weights.w_term);
  CHECK(with.weights.w_term == 50.0);

  EnvConfig timeout = with;
  timeout.max_steps = 40;
  Eigen::MatrixXd cruise(5, 1);
  cruise << 0.0, 2.0, 2.0, 2.0, 2.0;
  double rew_t = 0.0;
  RewardBreakdown bd_t;
  const auto why_t =
      run_to_done(timeout, make_straight(60.0), cruise, &rew_t, &bd_t);
  CHECK(why_t == Termination::kMaxSteps);
  CHECK(bd_t.term == 0.0);
  CHECK(rew_t > -1.0);
}

TEST_CASE("final-step termination reasons and pre-reset observations") {
  const int e_pos_slot = 4 * EnvConfig{}.n_preview;

  // Auto-reset off: the returned observation is the terminal one, so the
  // terminal snapshot must match it bit for bit.
  EnvConfig cfg = config_without_randomization();
  cfg.auto_reset = false;
  {
    DriftEnv env(single_path(gen_circle(1.0)), cfg, VehicleParams{}, 3, 1);
    Eigen::MatrixXd obs(env.obs_dim(), 1);
    Eigen::VectorXd rew(1);
    std::vector<std::uint8_t> done;
    Eigen::MatrixXd full_throttle(5, 1);
    full_throttle << 0.0, 7.0, 7.0, 7.0, 7.0;
    int steps = 0;
    do {
      env.step(full_throttle, obs, rew, done);
      if (!done[0]) {
        CHECK(env.last_step_terminations()[0] == Termination::kRunning);
      }
      ++steps;
    } while (!done[0] && steps < 2000);
    REQUIRE(done[0] == 1);
    CHECK(env.last_step_terminations()[0] == Termination::kOffTrack);
    CHECK(env.last_step_terminal_obs().col(0) == obs.col(0));
    CHECK(std::abs(env.last_step_terminal_obs()(e_pos_slot, 0)) > 1.0);
  }

  // Auto-reset on: the returned observation belongs to the fresh episode
  // while the snapshot still shows the crash state.
  cfg.auto_reset = true;
  {
    DriftEnv env(single_path(gen_circle(1.0)), cfg, VehicleParams{}, 3, 1);
    Eigen::MatrixXd obs(env.obs_dim(), 1);
    Eigen::VectorXd rew(1);
    std::vector<std::uint8_t> done;
    Eigen::MatrixXd full_throttle(5, 1);
    full_throttle << 0.0, 7.0, 7.0, 7.0, 7.0;
    int steps = 0;
    do {
      env.step(full_throttle, obs, rew, done);
      ++steps;
    } while (!done[0] && steps < 2000);
    REQUIRE(done[0] == 1);
    CHECK(env.last_step_terminations()[0] == Termination::kOffTrack);
    CHECK(std::abs(env.last_step_terminal_obs()(e_pos_slot, 0)) > 1.0);
    CHECK(std::abs(obs(e_pos_slot, 0)) < 0.5);

    // The flag clears again on the next (non-terminal) step.
    env.step(full_throttle, obs, rew, done);
    if (!done[0]) {
      CHECK(env.last_step_terminations()[0] == Termination::kRunning);
    }
  }

  // Time limit: reported as kMaxSteps with an on-path terminal snapshot.
  cfg = config_without_randomization();
  cfg.max_steps = 25;
  {
    DriftEnv env(single_path(make_straight(60.0)), cfg, VehicleParams{}, 11,
                 1);
    Eigen::MatrixXd obs(env.obs_dim(), 1);
    Eigen::VectorXd rew(1);
    std::vector<std::uint8_t> done;
    Eigen::MatrixXd cruise(5, 1);
    cruise << 0.0, 2.0, 2.0, 2.0, 2.0;
    for (int t = 0; t < 25; ++t) env.step(cruise, obs, rew, done);
    CHECK(done[0] == 1);
    CHECK(env.last_step_terminations()[0] == Termination::kMaxSteps);
    CHECK(std::abs(env.last_step_terminal_obs()(e_pos_slot, 0)) < 1e-6);
  }
}

TEST_CASE("steady cruising earns the progress reward") {
  EnvConfig cfg = config_without_randomization();
  cfg.auto_reset = false;
  const double length = 60.0;
  DriftEnv env(single_path(make_straight(length)), cfg, VehicleParams{}, 21, 1);
  for (int k = 0; k < 50 && env.errors(0).s_proj > length - 10.0; ++k) {
    env.reset_instance(0);
  }
  REQUIRE(env.errors(0).s_proj <= length - 10.0);

  Eigen::MatrixXd obs(env.obs_dim(), 1);
  Eigen::VectorXd rew(1);
  std::vector<std::uint8_t> done;
  Eigen::MatrixXd cruise(5, 1);
  cruise << 0.0, 2.0, 2.0, 2.0, 2.0;
  for (int t = 0; t < 300; ++t) env.step(cruise, obs, rew, done);

  const RewardBreakdown& b = env.reward_breakdown(0);
  CHECK(env.state(0).speed() == doctest::Approx(2.0).epsilon(0.05));
  CHECK(b.prog > 0.6);
  CHECK(b.prog < 0.72);
  CHECK(b.pos == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(b.smooth == 0.0);
  CHECK(b.slip > -1e-3);
  CHECK(env.status(0).progress_s > 4.0);
}

TEST_CASE("auto-reset starts a fresh episode in the returned observation") {
  EnvConfig cfg = config_without_randomization();
  DriftEnv env(single_path(gen_circle(1.0)), cfg, VehicleParams{}, 3, 2);

  Eigen::MatrixXd obs(env.obs_dim(), 2);
  Eigen::VectorXd rew(2);
  std::vector<std::uint8_t> done;
  Eigen::MatrixXd full_throttle(5, 2);
  full_throttle << 0.0, 0.0, 7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 7.0;

  int resets_seen = 0;
  for (int t = 0; t < 2000; ++t) {
    env.step(full_throttle, obs, rew, done);
    for (int i = 0; i < 2; ++i) {
      if (done[i]) {
        ++resets_seen;
        CHECK(env.status(i).terminated == Termination::kRunning);
        CHECK(env.status(i).step_count == 0);
        // The returned column already shows the next episode: on-path rest
        // start with a cleared action history.
        CHECK(obs(40, i) == 0.0);
        for (int k = 44; k < 56; ++k) CHECK(obs(k, i) == 0.0);
      }
    }
  }
  CHECK(resets_seen >= 4);

  const auto summaries = env.drain_summaries();
  CHECK(static_cast<int>(summaries.size()) == resets_seen);
  for (const EpisodeSummary& s : summaries) {
    CHECK(s.reason == Termination::kOffTrack);
    CHECK(s.steps > 0);
    CHECK(s.path_index == 0);
    CHECK(s.rmse_epos > 0.0);
    CHECK(s.rmse_epos < 1.5);
    CHECK(s.ep_return < s.steps * 0.2);
  }
  CHECK(env.drain_summaries().empty());
}

TEST_CASE("trajectory randomization draws from the pool") {
  auto pool = make_random_path_pool(606, 4);
  EnvConfig cfg;
  DriftEnv env(pool, cfg, VehicleParams{}, 77, 256);
  std::array<int, 4> counts{};
  for (int i = 0; i < 256; ++i) {
    const ReferencePath& p = env.path_of(i);
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (&p == pool[j].get()) ++counts[j];
    }
  }
  for (int c : counts) CHECK(c > 25);
  CHECK(counts[0] + counts[1] + counts[2] + counts[3] == 256);

  cfg.rand.randomize_trajectory = false;
  DriftEnv fixed(pool, cfg, VehicleParams{}, 77, 64);
  for (int i = 0; i < 64; ++i) CHECK(&fixed.path_of(i) == pool[0].get());
}

TEST_CASE("vectorized interface shapes and bounds") {
  auto pool = single_path(gen_circle(1.0));
  DriftEnv env(pool, EnvConfig{}, VehicleParams{}, 1, 3);
  CHECK(env.num_envs() == 3);
  CHECK(env.obs_dim() == 56);
  CHECK(env.action_dim() == 5);
  const Eigen::VectorXd lo = env.action_low();
  const Eigen::VectorXd hi = env.action_high();
  CHECK(lo(0) == doctest::Approx(-0.46));
  CHECK(hi(0) == doctest::Approx(0.46));
  for (int i = 1; i < 5; ++i) {
    CHECK(lo(i) == 1.0);
    CHECK(hi(i) == 7.0);
  }
  Eigen::MatrixXd obs(env.obs_dim(), 3);
  env.reset_all(obs);
  CHECK(obs.allFinite());
  // Preview points are ahead of the car, so each column carries signal.
  for (int i = 0; i < 3; ++i) CHECK(obs.col(i).norm() > 0.0);
}

TEST_CASE("toy env dynamics and episode bookkeeping") {
  ToyEnv env(5, 3);
  CHECK(env.obs_dim() == 1);
  CHECK(env.action_dim() == 1);
  CHECK(env.action_low()(0) == -1.0);
  CHECK(env.action_high()(0) == 1.0);

  Eigen::MatrixXd obs(1, 3);
  Eigen::VectorXd rew(3);
  std::vector<std::uint8_t> done;
  env.reset_all(obs);
  for (int i = 0; i < 3; ++i) {
    CHECK(obs(0, i) >= -2.0);
    CHECK(obs(0, i) <= 2.0);
  }

  const double x0 = obs(0, 0);
  Eigen::MatrixXd act(1, 3);
  act << 0.5, -2.0, 0.0;  // second entry clamps to -1
  env.step(act, obs, rew, done);
  CHECK(obs(0, 0) == doctest::Approx(x0 + 0.25));
  CHECK(rew(0) == doctest::Approx(-(obs(0, 0) * obs(0, 0) + 0.01 * 0.25)));
  CHECK(done == std::vector<std::uint8_t>(3, 0));

  for (int t = 1; t < ToyEnv::kHorizon; ++t) env.step(act, obs, rew, done);
  CHECK(done == std::vector<std::uint8_t>(3, 1));
  for (int i = 0; i < 3; ++i) {
    CHECK(obs(0, i) >= -2.0);
    CHECK(obs(0, i) <= 2.0);
  }

  ToyEnv a(9, 2), b(9, 2);
  Eigen::MatrixXd oa(1, 2), ob(1, 2);
  a.reset_all(oa);
  b.reset_all(ob);
  CHECK(oa == ob);
}
