#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "driftsim/types.hpp"

namespace driftsim {

/// Fixed arc-length spacing between consecutive waypoints.
inline constexpr double kWaypointSpacing = 0.005;  // m

struct Waypoint {
  double s = 0.0;         // arc length from path start, m
  double x = 0.0;         // m
  double y = 0.0;         // m
  double theta = 0.0;     // tangent heading, rad
  double kappa = 0.0;     // signed curvature, 1/m
  double beta_ref = 0.0;  // reference sideslip, rad
};

/// Immutable waypoint sequence at kWaypointSpacing. Closed paths carry a
/// duplicate final waypoint at s = total_length that coincides with the
/// first, so the closure invariant is directly visible in the data.
struct ReferencePath {
  std::vector<Waypoint> waypoints;
  bool closed = false;
  double total_length = 0.0;

  /// Number of distinct waypoints (the duplicate endpoint of a closed path
  /// is not counted).
  std::size_t logical_size() const {
    return closed ? waypoints.size() - 1 : waypoints.size();
  }

  /// Arc position mapped into [0, total_length) for closed paths, clamped
  /// to [0, total_length] for open ones.
  double wrap_s(double s) const;

  /// Nearest waypoint index for an arc position (wrapped/clamped as above).
  std::size_t index_at(double s) const;
};

struct TrackingErrors {
  double e_pos = 0.0;    // signed lateral error, left of tangent positive, m
  double e_dir = 0.0;    // course minus tangent heading, wrapped, rad
  double e_kappa = 0.0;  // vehicle path curvature minus path curvature, 1/m
  double e_beta = 0.0;   // sideslip minus reference sideslip, rad
  double s_proj = 0.0;   // arc position of the nearest waypoint, m
};

/// Preview waypoint expressed in the vehicle body frame.
struct PreviewPoint {
  double x_rel = 0.0;
  double y_rel = 0.0;
  double theta_rel = 0.0;
  double beta_ref = 0.0;
};

struct RandomPathConfig {
  double seg_len_min = 1.5;  // m
  double seg_len_max = 4.0;  // m
  double kappa_min = 0.4;    // 1/m, magnitude range (signs drawn separately)
  double kappa_max = 1.2;    // 1/m
  double ramp_len = 0.3;     // m, linear curvature blend between arcs
  int min_segments = 4;
  int max_segments = 8;
};

/// Reference sideslip for a local curvature: opposite sign to kappa,
/// magnitude 0.9·|kappa| capped at 0.9 rad.
double beta_ref_for_kappa(double kappa);

/// Closed circle centered at the origin, radius snapped so the circumference
/// is a whole number of waypoint spacings (the stored curvature reflects the
/// snapped radius). direction +1 starts at (R, 0) heading +y and turns left;
/// -1 mirrors the geometry and negates kappa and beta_ref.
ReferencePath gen_circle(double radius, int direction = 1);

/// Closed figure-eight: two tangent circles of opposite curvature joined at
/// the origin, each lobe a full snapped circle.
ReferencePath gen_eight(double radius);

/// Open track alternating curvature plateaus at +1.0, +0.5, -1.0, -0.5 1/m
/// joined by linear ramps, two full alternation cycles.
ReferencePath gen_variable_curvature();

/// Open chain of five mutually tangent circles with curvature sign flipping
/// at each tangency: full outer laps at both ends, 1.5 laps for the three
/// middle circles.
ReferencePath gen_rings(double radius = 1.0);

/// Open path from a random piecewise-constant curvature profile with linear
/// ramps between arcs. Deterministic in the seed.
ReferencePath gen_random_path(std::uint64_t seed,
                              const RandomPathConfig& config = {});

/// Nearest-waypoint search. hint < 0 forces a full scan; otherwise a local
/// hill descent runs from the hint (wrapping on closed paths) with a full
/// scan fallback when the local minimum is implausibly far. The hint keeps
/// projection on the correct branch where a path self-intersects.
std::size_t nearest_index(const ReferencePath& path, double x, double y,
                          std::ptrdiff_t hint);

/// Tracking errors of a vehicle state against the path. hint is updated to
/// the projected index. beta_dot is the caller's sideslip-rate estimate used
/// for the vehicle path curvature (psidot + beta_dot)/max(V, 0.1).
TrackingErrors project(const VehicleState& state, const ReferencePath& path,
                       std::ptrdiff_t* hint, double beta_dot = 0.0);

/// n_points waypoints ahead of s_proj at fixed arc spacing, in the vehicle
/// frame. Closed paths wrap; open paths clamp to the final waypoint.
std::vector<PreviewPoint> preview(const VehicleState& state,
                                  const ReferencePath& path, double s_proj,
                                  int n_points = 10, double spacing = 0.1);

/// CSV round trip: "# closed=<0|1>" comment, header, then one
/// (s, x, y, theta, kappa, beta_ref) row per waypoint at full precision.
void write_path_csv(const ReferencePath& path, std::ostream& os);

/// Throws std::runtime_error on malformed input.
ReferencePath read_path_csv(std::istream& is);

}  // namespace driftsim
