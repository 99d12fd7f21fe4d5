#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace driftsim {

/// Wheel indexing used everywhere: front-left, front-right, rear-left,
/// rear-right.
inline constexpr int kFl = 0;
inline constexpr int kFr = 1;
inline constexpr int kRl = 2;
inline constexpr int kRr = 3;
inline constexpr int kNumWheels = 4;

enum class Drivetrain : std::uint8_t { kIwd, kRwd, kAwd };

/// Planar pose and rates of one car instance. Velocities are in the global
/// frame; psidot is the yaw rate r.
struct VehicleState {
  double x = 0.0;       // m
  double y = 0.0;       // m
  double psi = 0.0;     // rad
  double xdot = 0.0;    // m/s
  double ydot = 0.0;    // m/s
  double psidot = 0.0;  // rad/s

  double speed() const { return std::hypot(xdot, ydot); }

  /// Sideslip angle beta = atan2(ydot, xdot) - psi, wrapped to (-pi, pi].
  /// Zero below the speed floor where the velocity direction is undefined.
  double sideslip() const;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(psi) &&
           std::isfinite(xdot) && std::isfinite(ydot) && std::isfinite(psidot);
  }
};

/// Steering angle plus individual wheel angular velocities (rad/s), ordered
/// fl, fr, rl, rr.
struct ControlInput {
  double delta = 0.0;
  std::array<double, kNumWheels> omega{};
};

struct VehicleParams {
  double mass = 4.84;          // kg
  double inertia_z = 0.062;    // kg m^2; not published for the platform
  double lf = 0.175;           // m, CoM to front axle
  double lr = 0.175;           // m, CoM to rear axle
  double track = 0.26;         // m
  double wheel_radius = 0.0565;  // m
  double h_cg = 0.05;          // m, CoM height (drives longitudinal load transfer)
  double delta_max = 0.46;     // rad
  double gravity = 9.81;       // m/s^2
  Drivetrain drivetrain = Drivetrain::kIwd;

  double wheelbase() const { return lf + lr; }
};

/// Magic-formula coefficients. d is the peak friction coefficient.
struct TireParams {
  double b = 0.9;
  double c = 2.25;
  double d = 0.35;
};

/// Multiplicative tire-force perturbation, one entry per wheel per axis:
/// [fl_x, fl_y, fr_x, fr_y, rl_x, rl_y, rr_x, rr_y]. Each force component is
/// scaled by (1 + d_k) before the friction-circle clamp. Components live in
/// [-0.5, 0.5].
struct DisturbanceState {
  std::array<double, 8> d{};
};

/// Contact-patch kinematics per wheel, expressed in the wheel frame (front
/// wheels rotated by the steering angle).
struct WheelKinematics {
  std::array<double, kNumWheels> vx{};          // m/s
  std::array<double, kNumWheels> vy{};          // m/s
  std::array<double, kNumWheels> slip_ratio{};  // dimensionless
  std::array<double, kNumWheels> slip_angle{};  // rad
};

/// Tire forces in the wheel frame plus the vertical load carried per wheel.
struct TireForces {
  std::array<double, kNumWheels> fx{};  // N
  std::array<double, kNumWheels> fy{};  // N
  std::array<double, kNumWheels> fz{};  // N
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 6.283185307179586477;
  a = std::fmod(a, kTwoPi);
  if (a <= -3.14159265358979323846) a += kTwoPi;
  if (a > 3.14159265358979323846) a -= kTwoPi;
  return a;
}

inline double VehicleState::sideslip() const {
  if (speed() < 1e-9) return 0.0;
  return wrap_angle(std::atan2(ydot, xdot) - psi);
}

}  // namespace driftsim
