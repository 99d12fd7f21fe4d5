#include "driftsim/path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

#include "driftsim/rng.hpp"

namespace driftsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ProfileSegment {
  double length;
  double kappa0;
  double kappa1;
};

// Piecewise-linear curvature profile with closed-form heading: theta is
// piecewise quadratic in arc length, so only the position integral needs
// numeric quadrature.
class CurvatureProfile {
 public:
  CurvatureProfile(std::vector<ProfileSegment> segs, double theta0)
      : segs_(std::move(segs)) {
    start_.reserve(segs_.size() + 1);
    theta_.reserve(segs_.size() + 1);
    start_.push_back(0.0);
    theta_.push_back(theta0);
    for (const auto& seg : segs_) {
      start_.push_back(start_.back() + seg.length);
      theta_.push_back(theta_.back() +
                       0.5 * (seg.kappa0 + seg.kappa1) * seg.length);
    }
  }

  double total() const { return start_.back(); }

  double theta_at(double s) const {
    const std::size_t k = find(s);
    const double u = s - start_[k];
    const double dk = (segs_[k].kappa1 - segs_[k].kappa0) / segs_[k].length;
    return theta_[k] + segs_[k].kappa0 * u + 0.5 * dk * u * u;
  }

  double kappa_at(double s) const {
    const std::size_t k = find(s);
    const double u = s - start_[k];
    return segs_[k].kappa0 +
           (segs_[k].kappa1 - segs_[k].kappa0) * (u / segs_[k].length);
  }

 private:
  // Right-continuous lookup: an exact boundary belongs to the next segment.
  std::size_t find(double s) const {
    auto it = std::upper_bound(start_.begin(), start_.end(), s);
    if (it == start_.begin()) return 0;
    const std::size_t k = static_cast<std::size_t>(it - start_.begin()) - 1;
    return std::min(k, segs_.size() - 1);
  }

  std::vector<ProfileSegment> segs_;
  std::vector<double> start_;
  std::vector<double> theta_;
};

// Samples the profile at kWaypointSpacing; positions by per-interval Simpson
// quadrature on the exact heading. The profile total must be a whole number
// of spacings (all generators arrange that).
ReferencePath integrate_profile(const CurvatureProfile& prof, double x0,
                                double y0, bool closed) {
  const double h = kWaypointSpacing;
  const long long n = std::llround(prof.total() / h);
  ReferencePath path;
  path.closed = closed;
  path.total_length = static_cast<double>(n) * h;
  path.waypoints.resize(static_cast<std::size_t>(n) + 1);

  double x = x0, y = y0;
  for (long long i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) * h;
    Waypoint& wp = path.waypoints[static_cast<std::size_t>(i)];
    wp.s = s;
    wp.x = x;
    wp.y = y;
    wp.theta = wrap_angle(prof.theta_at(s));
    wp.kappa = prof.kappa_at(s);
    wp.beta_ref = beta_ref_for_kappa(wp.kappa);
    if (i < n) {
      const double t0 = prof.theta_at(s);
      const double tm = prof.theta_at(s + 0.5 * h);
      const double t1 = prof.theta_at(s + h);
      x += h / 6.0 * (std::cos(t0) + 4.0 * std::cos(tm) + std::cos(t1));
      y += h / 6.0 * (std::sin(t0) + 4.0 * std::sin(tm) + std::sin(t1));
    }
  }
  return path;
}

// Interval count for one full lap of the given radius, snapped so the
// circumference is a whole number of spacings.
long long snapped_lap_intervals(double radius) {
  return std::max<long long>(
      8, std::llround(2.0 * kPi * radius / kWaypointSpacing));
}

}  // namespace

double beta_ref_for_kappa(double kappa) {
  if (kappa == 0.0) return 0.0;
  const double mag = std::min(0.9, 0.9 * std::abs(kappa));
  return kappa > 0.0 ? -mag : mag;
}

double ReferencePath::wrap_s(double s) const {
  if (closed) {
    s = std::fmod(s, total_length);
    if (s < 0.0) s += total_length;
    return s;
  }
  return std::clamp(s, 0.0, total_length);
}

std::size_t ReferencePath::index_at(double s) const {
  const long long idx = std::llround(wrap_s(s) / kWaypointSpacing);
  const long long last = static_cast<long long>(waypoints.size()) - 1;
  return static_cast<std::size_t>(std::clamp<long long>(idx, 0, last));
}

ReferencePath gen_circle(double radius, int direction) {
  if (radius <= 0.0) throw std::invalid_argument("gen_circle: radius <= 0");
  const int dir = direction >= 0 ? 1 : -1;
  const long long n = snapped_lap_intervals(radius);
  const double h = kWaypointSpacing;
  const double r_eff = static_cast<double>(n) * h / (2.0 * kPi);
  const double kappa = static_cast<double>(dir) / r_eff;

  ReferencePath path;
  path.closed = true;
  path.total_length = static_cast<double>(n) * h;
  path.waypoints.resize(static_cast<std::size_t>(n) + 1);
  for (long long i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) * h;
    const double phi = s / r_eff;
    Waypoint& wp = path.waypoints[static_cast<std::size_t>(i)];
    wp.s = s;
    wp.x = r_eff * std::cos(phi);
    wp.y = static_cast<double>(dir) * r_eff * std::sin(phi);
    wp.theta = wrap_angle(static_cast<double>(dir) * (phi + kPi / 2.0));
    wp.kappa = kappa;
    wp.beta_ref = beta_ref_for_kappa(kappa);
  }
  return path;
}

ReferencePath gen_eight(double radius) {
  if (radius <= 0.0) throw std::invalid_argument("gen_eight: radius <= 0");
  const long long m = snapped_lap_intervals(radius);
  const double lobe = static_cast<double>(m) * kWaypointSpacing;
  const double r_eff = lobe / (2.0 * kPi);
  const double k = 1.0 / r_eff;
  CurvatureProfile prof({{lobe, k, k}, {lobe, -k, -k}}, kPi / 2.0);
  return integrate_profile(prof, 0.0, 0.0, /*closed=*/true);
}

ReferencePath gen_variable_curvature() {
  const double plateau = 3.0;
  const double ramp = 0.3;
  const double levels[] = {1.0, 0.5, -1.0, -0.5, 1.0, 0.5, -1.0, -0.5};
  std::vector<ProfileSegment> segs;
  for (std::size_t i = 0; i < std::size(levels); ++i) {
    if (i > 0) segs.push_back({ramp, levels[i - 1], levels[i]});
    segs.push_back({plateau, levels[i], levels[i]});
  }
  CurvatureProfile prof(std::move(segs), 0.0);
  return integrate_profile(prof, 0.0, 0.0, /*closed=*/false);
}

ReferencePath gen_rings(double radius) {
  if (radius <= 0.0) throw std::invalid_argument("gen_rings: radius <= 0");
  // Even interval count per lap so the middle circles' 1.5 laps land on a
  // whole number of spacings.
  const long long m =
      2 * std::max<long long>(4, std::llround(kPi * radius / kWaypointSpacing));
  const double lap = static_cast<double>(m) * kWaypointSpacing;
  const double r_eff = lap / (2.0 * kPi);
  const double k = 1.0 / r_eff;
  const double lap15 = 1.5 * lap;
  CurvatureProfile prof(
      {{lap, k, k}, {lap15, -k, -k}, {lap15, k, k}, {lap15, -k, -k}, {lap, k, k}},
      kPi / 2.0);
  return integrate_profile(prof, 0.0, 0.0, /*closed=*/false);
}

ReferencePath gen_random_path(std::uint64_t seed,
                              const RandomPathConfig& config) {
  Rng rng(seed);
  const int span = config.max_segments - config.min_segments + 1;
  const int n_seg =
      config.min_segments +
      static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(span)));

  std::vector<double> lengths(n_seg), kappas(n_seg);
  for (int i = 0; i < n_seg; ++i) {
    lengths[i] = rng.uniform(config.seg_len_min, config.seg_len_max);
    const double mag = rng.uniform(config.kappa_min, config.kappa_max);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    kappas[i] = sign * mag;
  }

  std::vector<ProfileSegment> segs;
  double total = 0.0;
  for (int i = 0; i < n_seg; ++i) {
    if (i > 0 && config.ramp_len > 0.0) {
      segs.push_back({config.ramp_len, kappas[i - 1], kappas[i]});
      total += config.ramp_len;
    }
    segs.push_back({lengths[i], kappas[i], kappas[i]});
    total += lengths[i];
  }

  // Trim the tail so the length is a whole number of spacings.
  const double h = kWaypointSpacing;
  const double target =
      std::floor(total / h + 1e-9) * h;
  segs.back().length -= total - target;

  CurvatureProfile prof(std::move(segs), 0.0);
  return integrate_profile(prof, 0.0, 0.0, /*closed=*/false);
}

std::size_t nearest_index(const ReferencePath& path, double x, double y,
                          std::ptrdiff_t hint) {
  const auto& w = path.waypoints;
  const std::size_t m = path.logical_size();
  const auto d2 = [&](std::size_t i) {
    const double dx = w[i].x - x;
    const double dy = w[i].y - y;
    return dx * dx + dy * dy;
  };
  const auto full_scan = [&] {
    std::size_t best = 0;
    double bd = d2(0);
    for (std::size_t i = 1; i < m; ++i) {
      const double di = d2(i);
      if (di < bd) {
        bd = di;
        best = i;
      }
    }
    return best;
  };

  if (hint < 0 || hint >= static_cast<std::ptrdiff_t>(m)) return full_scan();

  std::size_t cur = static_cast<std::size_t>(hint);
  double best = d2(cur);
  for (std::size_t iter = 0; iter < m; ++iter) {
    std::size_t next = cur;
    double bn = best;
    const std::size_t fwd = path.closed ? (cur + 1) % m : cur + 1;
    if (fwd < m && d2(fwd) < bn) {
      bn = d2(fwd);
      next = fwd;
    }
    const std::size_t bwd = path.closed ? (cur + m - 1) % m
                                        : (cur > 0 ? cur - 1 : cur);
    if (bwd != cur && d2(bwd) < bn) {
      bn = d2(bwd);
      next = bwd;
    }
    if (next == cur) break;
    cur = next;
    best = bn;
  }
  // A local minimum far off the path means the hint was on the wrong
  // branch or stale; fall back to the global search.
  if (best > 4.0) return full_scan();
  return cur;
}

TrackingErrors project(const VehicleState& state, const ReferencePath& path,
                       std::ptrdiff_t* hint, double beta_dot) {
  if (path.waypoints.empty()) throw std::runtime_error("project: empty path");
  const std::size_t idx =
      nearest_index(path, state.x, state.y, hint ? *hint : -1);
  if (hint) *hint = static_cast<std::ptrdiff_t>(idx);
  const Waypoint& wp = path.waypoints[idx];

  const double dx = state.x - wp.x;
  const double dy = state.y - wp.y;
  const double beta = state.sideslip();

  TrackingErrors e;
  e.e_pos = -std::sin(wp.theta) * dx + std::cos(wp.theta) * dy;
  e.e_dir = wrap_angle(state.psi + beta - wp.theta);
  e.e_kappa =
      (state.psidot + beta_dot) / std::max(state.speed(), 0.1) - wp.kappa;
  e.e_beta = beta - wp.beta_ref;
  e.s_proj = wp.s;
  return e;
}

std::vector<PreviewPoint> preview(const VehicleState& state,
                                  const ReferencePath& path, double s_proj,
                                  int n_points, double spacing) {
  const double c = std::cos(state.psi);
  const double s = std::sin(state.psi);
  std::vector<PreviewPoint> out(static_cast<std::size_t>(n_points));
  for (int k = 1; k <= n_points; ++k) {
    const Waypoint& wp =
        path.waypoints[path.index_at(s_proj + static_cast<double>(k) * spacing)];
    const double dx = wp.x - state.x;
    const double dy = wp.y - state.y;
    PreviewPoint& p = out[static_cast<std::size_t>(k - 1)];
    p.x_rel = c * dx + s * dy;
    p.y_rel = -s * dx + c * dy;
    p.theta_rel = wrap_angle(wp.theta - state.psi);
    p.beta_ref = wp.beta_ref;
  }
  return out;
}

void write_path_csv(const ReferencePath& path, std::ostream& os) {
  os << "# closed=" << (path.closed ? 1 : 0) << "\n";
  os << "s,x,y,theta,kappa,beta_ref\n";
  char buf[256];
  for (const Waypoint& wp : path.waypoints) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  wp.s, wp.x, wp.y, wp.theta, wp.kappa, wp.beta_ref);
    os << buf;
  }
}

ReferencePath read_path_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# closed=", 0) != 0) {
    throw std::runtime_error("path csv: missing '# closed=' comment line");
  }
  ReferencePath path;
  path.closed = line == "# closed=1";
  if (!path.closed && line != "# closed=0") {
    throw std::runtime_error("path csv: bad closed flag: " + line);
  }
  if (!std::getline(is, line) || line != "s,x,y,theta,kappa,beta_ref") {
    throw std::runtime_error("path csv: bad header: " + line);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Waypoint wp;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &wp.s, &wp.x,
                    &wp.y, &wp.theta, &wp.kappa, &wp.beta_ref) != 6) {
      throw std::runtime_error("path csv: bad row: " + line);
    }
    path.waypoints.push_back(wp);
  }
  if (path.waypoints.size() < 2) {
    throw std::runtime_error("path csv: too few waypoints");
  }
  path.total_length = path.waypoints.back().s;
  return path;
}

}  // namespace driftsim
