#include "driftsim/dynamics.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace driftsim {

namespace {

// Effective wheel angular velocities after drivetrain coupling. RWD front
// wheels follow the contact velocity (free rolling); AWD averages each
// axle pair.
std::array<double, kNumWheels> effective_omega(
    const ControlInput& input, const VehicleParams& params,
    const std::array<double, kNumWheels>& wheel_vx) {
  std::array<double, kNumWheels> omega = input.omega;
  switch (params.drivetrain) {
    case Drivetrain::kIwd:
      break;
    case Drivetrain::kRwd:
      omega[kFl] = wheel_vx[kFl] / params.wheel_radius;
      omega[kFr] = wheel_vx[kFr] / params.wheel_radius;
      break;
    case Drivetrain::kAwd: {
      const double front = 0.5 * (omega[kFl] + omega[kFr]);
      const double rear = 0.5 * (omega[kRl] + omega[kRr]);
      omega[kFl] = omega[kFr] = front;
      omega[kRl] = omega[kRr] = rear;
      break;
    }
  }
  return omega;
}

}  // namespace

WheelKinematics wheel_kinematics(const VehicleState& state,
                                 const ControlInput& input,
                                 const VehicleParams& params) {
  const double cpsi = std::cos(state.psi);
  const double spsi = std::sin(state.psi);
  const double vx_b = state.xdot * cpsi + state.ydot * spsi;
  const double vy_b = -state.xdot * spsi + state.ydot * cpsi;

  const double half_track = 0.5 * params.track;
  const double cd = std::cos(input.delta);
  const double sd = std::sin(input.delta);

  WheelKinematics kin;
  for (int w = 0; w < kNumWheels; ++w) {
    const bool front = (w == kFl || w == kFr);
    const bool left = (w == kFl || w == kRl);
    const double axle_l = front ? params.lf : -params.lr;
    const double lat = left ? half_track : -half_track;

    // Contact-point velocity in the body frame: omega x r adds
    // (-psidot*lat, psidot*axle_l) for a contact at (axle_l, lat).
    const double vx_contact = vx_b - state.psidot * lat;
    const double vy_contact = vy_b + state.psidot * axle_l;

    // Rotate front-wheel velocities into the steered wheel frame.
    double vx_w = vx_contact;
    double vy_w = vy_contact;
    if (front) {
      vx_w = cd * vx_contact + sd * vy_contact;
      vy_w = -sd * vx_contact + cd * vy_contact;
    }

    const double denom = std::max(std::abs(vx_w), kSlipSpeedFloor);
    kin.vx[w] = vx_w;
    kin.vy[w] = vy_w;
    kin.slip_angle[w] = -std::atan2(vy_w, denom);
    kin.slip_ratio[w] = 0.0;  // filled in below once omega is known
  }

  const auto omega = effective_omega(input, params, kin.vx);
  for (int w = 0; w < kNumWheels; ++w) {
    const double denom = std::max(std::abs(kin.vx[w]), kSlipSpeedFloor);
    kin.slip_ratio[w] =
        (omega[w] * params.wheel_radius - kin.vx[w]) / denom;
  }
  return kin;
}

std::pair<double, double> vertical_loads(double accel_x,
                                         const VehicleParams& params) {
  const double total = params.mass * params.gravity;
  const double wheelbase = params.wheelbase();
  double front = params.mass *
                 (params.gravity * params.lr - accel_x * params.h_cg) /
                 wheelbase;
  double rear = params.mass *
                (params.gravity * params.lf + accel_x * params.h_cg) /
                wheelbase;
  if (front < 0.0) {
    front = 0.0;
    rear = total;
  } else if (rear < 0.0) {
    rear = 0.0;
    front = total;
  }
  return {front, rear};
}

void pacejka_force(double slip_ratio, double slip_angle, double fz,
                   const TireParams& tires, double dist_x, double dist_y,
                   double& fx, double& fy) {
  fx = 0.0;
  fy = 0.0;
  if (fz <= 0.0) return;

  const double tan_alpha = std::tan(slip_angle);
  const double s = std::hypot(slip_ratio, tan_alpha);
  if (s == 0.0) return;

  const double s_peak = std::tan(1.57079632679489662 / tires.c) / tires.b;
  const double s_eff = std::min(s, s_peak);
  const double force =
      fz * tires.d * std::sin(tires.c * std::atan(tires.b * s_eff));

  fx = force * (slip_ratio / s) * (1.0 + dist_x);
  fy = force * (tan_alpha / s) * (1.0 + dist_y);

  const double limit = tires.d * fz;
  const double mag = std::hypot(fx, fy);
  if (mag > limit && mag > 0.0) {
    const double scale = limit / mag;
    fx *= scale;
    fy *= scale;
  }
}

namespace {

// Forces for a fixed longitudinal acceleration guess.
TireForces forces_at_accel(const WheelKinematics& kin, double accel_x,
                           const VehicleParams& params,
                           const TireParams& tires,
                           const DisturbanceState& disturbance) {
  const auto [front_axle, rear_axle] = vertical_loads(accel_x, params);
  TireForces f;
  for (int w = 0; w < kNumWheels; ++w) {
    const bool front = (w == kFl || w == kFr);
    f.fz[w] = 0.5 * (front ? front_axle : rear_axle);
    pacejka_force(kin.slip_ratio[w], kin.slip_angle[w], f.fz[w], tires,
                  disturbance.d[2 * w], disturbance.d[2 * w + 1], f.fx[w],
                  f.fy[w]);
  }
  return f;
}

// Body-frame longitudinal acceleration implied by a force set.
double body_accel_x(const TireForces& f, const ControlInput& input,
                    const VehicleParams& params) {
  const double cd = std::cos(input.delta);
  const double sd = std::sin(input.delta);
  const double fx_f = f.fx[kFl] + f.fx[kFr];
  const double fy_f = f.fy[kFl] + f.fy[kFr];
  const double fx_r = f.fx[kRl] + f.fx[kRr];
  return (cd * fx_f - sd * fy_f + fx_r) / params.mass;
}

}  // namespace

TireForces tire_forces(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params, const TireParams& tires,
                       const DisturbanceState& disturbance) {
  const WheelKinematics kin = wheel_kinematics(state, input, params);
  // Load transfer depends on the longitudinal acceleration, which depends on
  // the loads. Two fixed-point passes from a_x = 0; the contraction factor
  // h_cg/(lf+lr) * mu keeps the residual well below force tolerances.
  TireForces f = forces_at_accel(kin, 0.0, params, tires, disturbance);
  f = forces_at_accel(kin, body_accel_x(f, input, params), params, tires,
                      disturbance);
  return f;
}

StateDerivatives derivatives(const VehicleState& state,
                             const ControlInput& input,
                             const VehicleParams& params,
                             const TireParams& tires,
                             const DisturbanceState& disturbance) {
  const TireForces f = tire_forces(state, input, params, tires, disturbance);

  const double fx_f = f.fx[kFl] + f.fx[kFr];
  const double fy_f = f.fy[kFl] + f.fy[kFr];
  const double fx_r = f.fx[kRl] + f.fx[kRr];
  const double fy_r = f.fy[kRl] + f.fy[kRr];
  const double dfx_f = f.fx[kFr] - f.fx[kFl];
  const double dfy_f = f.fy[kFr] - f.fy[kFl];
  const double dfx_r = f.fx[kRr] - f.fx[kRl];

  const double cd = std::cos(input.delta);
  const double sd = std::sin(input.delta);
  const double cdp = std::cos(input.delta + state.psi);
  const double sdp = std::sin(input.delta + state.psi);
  const double cpsi = std::cos(state.psi);
  const double spsi = std::sin(state.psi);

  StateDerivatives d;
  d.xdot = state.xdot;
  d.ydot = state.ydot;
  d.psidot = state.psidot;
  d.xddot =
      (cdp * fx_f - sdp * fy_f + cpsi * fx_r - spsi * fy_r) / params.mass;
  d.yddot =
      (sdp * fx_f + cdp * fy_f + spsi * fx_r + cpsi * fy_r) / params.mass;
  d.psiddot = ((cd * fy_f + sd * fx_f) * params.lf - fy_r * params.lr +
               (cd * dfx_f - sd * dfy_f + dfx_r) * 0.5 * params.track) /
              params.inertia_z;
  return d;
}

StepResult step(const VehicleState& state, const ControlInput& input,
                const VehicleParams& params, const TireParams& tires,
                const DisturbanceState& disturbance, double dt) {
  const StateDerivatives d =
      derivatives(state, input, params, tires, disturbance);
  StepResult r;
  r.state.x = state.x + dt * d.xdot;
  r.state.y = state.y + dt * d.ydot;
  r.state.psi = state.psi + dt * d.psidot;
  r.state.xdot = state.xdot + dt * d.xddot;
  r.state.ydot = state.ydot + dt * d.yddot;
  r.state.psidot = state.psidot + dt * d.psiddot;
  r.diverged = !r.state.finite();
  return r;
}

void step_batch(std::span<const VehicleState> states,
                std::span<const ControlInput> inputs,
                std::span<const VehicleParams> params,
                std::span<const TireParams> tires,
                std::span<const DisturbanceState> disturbances, double dt,
                std::span<VehicleState> out,
                std::span<std::uint8_t> diverged) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(states.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const StepResult r =
        step(states[i], inputs[i], params[i], tires[i], disturbances[i], dt);
    out[i] = r.state;
    if (!diverged.empty()) diverged[i] = r.diverged ? 1 : 0;
  }
}

ControlInput clamp_control(const ControlInput& input,
                           const VehicleParams& params, double v_min,
                           double v_max) {
  ControlInput c;
  c.delta = std::clamp(input.delta, -params.delta_max, params.delta_max);
  for (int w = 0; w < kNumWheels; ++w) {
    c.omega[w] = std::clamp(input.omega[w], v_min / params.wheel_radius,
                            v_max / params.wheel_radius);
  }
  return c;
}

}  // namespace driftsim
