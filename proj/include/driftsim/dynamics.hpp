#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "driftsim/types.hpp"

namespace driftsim {

/// Slip-denominator guard. Action bounds keep wheel speeds at or above
/// 1 m/s, so normal operation stays far from the guard.
inline constexpr double kSlipSpeedFloor = 0.1;  // m/s

/// Time derivative of VehicleState.
struct StateDerivatives {
  double xdot = 0.0;
  double ydot = 0.0;
  double psidot = 0.0;
  double xddot = 0.0;
  double yddot = 0.0;
  double psiddot = 0.0;
};

struct StepResult {
  VehicleState state;
  bool diverged = false;
};

/// Contact-patch velocities and slips for all four wheels.
///
/// Body-frame contact velocity at wheel ij is (vx_b -/+ psidot*T/2,
/// vy_b +/- psidot*l) with the left wheels on the +T/2 (y-left) side and the
/// front axle at +lf, so the moment equation's right-minus-left differentials
/// carry a +T/2 lever arm. Front-wheel velocities are rotated into the steered wheel
/// frame. Slip ratio is (omega*R - v_x)/max(|v_x|, 0.1); slip angle is
/// -atan2(v_y, max(|v_x|, 0.1)) so that the resulting force opposes the
/// lateral sliding direction.
///
/// Drivetrain handling: RWD lets the front wheels roll freely (their slip
/// ratio is forced to zero); AWD ties left/right wheel speeds per axle to
/// their mean.
WheelKinematics wheel_kinematics(const VehicleState& state,
                                 const ControlInput& input,
                                 const VehicleParams& params);

/// Per-axle vertical loads (front, rear) for a given longitudinal
/// acceleration of the CoM in the body frame. Each axle splits its load
/// equally between left and right. If the transfer would drive one axle
/// negative, that axle is floored at zero and the other carries the full
/// weight, so the pair always sums to m*g.
std::pair<double, double> vertical_loads(double accel_x,
                                         const VehicleParams& params);

/// Magic formula on the combined slip s = sqrt(kappa^2 + tan^2(alpha)),
/// decomposed proportionally along the slip direction:
///   F = Fz * D * sin(C * atan(B * s)),  Fx = F*kappa/s,  Fy = F*tan(alpha)/s.
/// s is saturated at the formula's peak tan(pi/(2C))/B; past it the force
/// holds at D*Fz instead of following the sine into its negative tail, which
/// for C > 2 would turn deep slip into thrust reversal. Each component is
/// scaled by (1 + d) with its disturbance entry, then the pair is clamped
/// back onto the friction circle D*Fz.
void pacejka_force(double slip_ratio, double slip_angle, double fz,
                   const TireParams& tires, double dist_x, double dist_y,
                   double& fx, double& fy);

/// Tire forces for all wheels at the given state/input, including the load
/// transfer fixed point (two evaluation passes, starting from a_x = 0).
TireForces tire_forces(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params, const TireParams& tires,
                       const DisturbanceState& disturbance);

/// Equations of motion. Axle sums F^f = F^fl + F^fr and differentials
/// dF^f = F^fr - F^fl (same for the rear) feed
///   m xdd = cos(d+psi) Fx_f - sin(d+psi) Fy_f + cos(psi) Fx_r - sin(psi) Fy_r
///   m ydd = sin(d+psi) Fx_f + cos(d+psi) Fy_f + sin(psi) Fx_r + cos(psi) Fy_r
///   Iz pdd = [cos(d) Fy_f + sin(d) Fx_f] lf - Fy_r lr
///            + [cos(d) dFx_f - sin(d) dFy_f + dFx_r] T/2
StateDerivatives derivatives(const VehicleState& state,
                             const ControlInput& input,
                             const VehicleParams& params,
                             const TireParams& tires,
                             const DisturbanceState& disturbance);

/// One explicit Euler step. A non-finite result sets the diverged flag; the
/// caller (the environment) resets such instances.
StepResult step(const VehicleState& state, const ControlInput& input,
                const VehicleParams& params, const TireParams& tires,
                const DisturbanceState& disturbance, double dt = 0.01);

/// Steps N independent instances. Elementwise identical to calling step() in
/// a loop; instances never interact, so the loop may be partitioned across
/// any number of OpenMP workers without changing results. diverged may be
/// empty if the caller does not need the flags.
void step_batch(std::span<const VehicleState> states,
                std::span<const ControlInput> inputs,
                std::span<const VehicleParams> params,
                std::span<const TireParams> tires,
                std::span<const DisturbanceState> disturbances, double dt,
                std::span<VehicleState> out,
                std::span<std::uint8_t> diverged);

/// Clamps steering to +/-delta_max and wheel speeds so omega*R lands in
/// [v_min, v_max].
ControlInput clamp_control(const ControlInput& input,
                           const VehicleParams& params, double v_min = 1.0,
                           double v_max = 7.0);

}  // namespace driftsim
