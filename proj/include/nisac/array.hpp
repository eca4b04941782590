#pragma once

// Uniform linear array geometry, the rectangular desired beampattern, and the
// least-squares beampattern matching error.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "nisac/linalg.hpp"

namespace nisac {

/// Angles in degrees, strictly increasing, first -90 and last +90.
struct AngularGrid {
  std::vector<double> angles;

  std::size_t size() const { return angles.size(); }

  /// Uniform grid with the given spacing. When 180 is not a multiple of the
  /// spacing the last interval is shortened so +90 stays on the grid.
  static AngularGrid uniform(double spacing_deg) {
    if (!(spacing_deg > 0.0)) throw Error("AngularGrid: spacing must be > 0");
    AngularGrid g;
    const auto steps = static_cast<long>(std::floor(180.0 / spacing_deg + 1e-9));
    for (long i = 0; i <= steps; ++i) g.angles.push_back(-90.0 + static_cast<double>(i) * spacing_deg);
    g.angles.back() = std::min(g.angles.back(), 90.0);
    if (g.angles.back() < 90.0 - 1e-9) g.angles.push_back(90.0);
    if (g.angles.size() < 2) throw Error("AngularGrid: needs at least two points");
    return g;
  }
};

struct DesiredPattern {
  Vector values;                    // phi(theta_l), 0/1 valued
  std::vector<double> directions;   // target directions it was built from
  double beam_width = 0.0;
};

/// Columns a(theta_l), one per grid angle.
struct SteeringMatrix {
  CMatrix columns;  // N x L

  Eigen::Index n_antennas() const { return columns.rows(); }
  Eigen::Index size() const { return columns.cols(); }
  CVector column(Eigen::Index l) const { return columns.col(l); }
};

/// a(theta)_n = exp(j 2 pi (d/lambda) n sin(theta)), n = 0..N-1.
inline CVector steering_vector(double theta_deg, int n_antennas, double spacing_ratio = 0.5) {
  CVector a(n_antennas);
  const double phase = 2.0 * kPi * spacing_ratio * std::sin(deg_to_rad(theta_deg));
  for (int n = 0; n < n_antennas; ++n) a[n] = std::polar(1.0, phase * n);
  return a;
}

inline SteeringMatrix steering_matrix(const AngularGrid& grid, int n_antennas, double spacing_ratio = 0.5) {
  SteeringMatrix s;
  s.columns.resize(n_antennas, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t l = 0; l < grid.size(); ++l)
    s.columns.col(static_cast<Eigen::Index>(l)) = steering_vector(grid.angles[l], n_antennas, spacing_ratio);
  return s;
}

/// 1 on the union of closed windows [phi - width/2, phi + width/2], 0 elsewhere.
inline DesiredPattern desired_pattern(const AngularGrid& grid, const std::vector<double>& directions,
                                      double beam_width) {
  if (!(beam_width > 0.0)) throw Error("desired_pattern: beam width must be > 0");
  DesiredPattern d;
  d.directions = directions;
  d.beam_width = beam_width;
  d.values = Vector::Zero(static_cast<Eigen::Index>(grid.size()));
  const double half = 0.5 * beam_width;
  // Absorbs rounding in grid angles built by repeated addition.
  constexpr double slack = 1e-9;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double theta = grid.angles[l];
    for (double phi : directions)
      if (theta >= phi - half - slack && theta <= phi + half + slack) d.values[static_cast<Eigen::Index>(l)] = 1.0;
  }
  return d;
}

/// P(theta_l) = a_l^H R a_l. Throws when a value drops below -feas_tol, which
/// only happens for a non-PSD R.
inline Vector beampattern(const CMatrix& r, const SteeringMatrix& steering, double feas_tol = 1e-9) {
  if (r.rows() != steering.n_antennas() || r.cols() != steering.n_antennas())
    throw Error("beampattern: covariance does not match the array size");
  const CMatrix ra = r * steering.columns;
  Vector p(steering.size());
  for (Eigen::Index l = 0; l < steering.size(); ++l) {
    p[l] = steering.columns.col(l).dot(ra.col(l)).real();
    if (p[l] < -feas_tol * std::max(1.0, r.cwiseAbs().maxCoeff()))
      throw Error("beampattern: negative power, covariance is not PSD");
  }
  return p;
}

inline double matching_error(double delta, const Vector& pattern, const DesiredPattern& desired) {
  if (pattern.size() != desired.values.size()) throw Error("matching_error: grid size mismatch");
  return (delta * desired.values - pattern).squaredNorm();
}

/// sum_l |delta phi(theta_l) - a_l^H R a_l|^2.
inline double matching_error(double delta, const CMatrix& r, const DesiredPattern& desired,
                             const SteeringMatrix& steering) {
  return matching_error(delta, beampattern(r, steering, 1e300), desired);
}

/// Minimizer of the matching error over delta >= 0 for a fixed covariance.
inline double optimal_scale(const Vector& pattern, const DesiredPattern& desired) {
  const double denom = desired.values.squaredNorm();
  if (denom <= 0.0) throw Error("optimal_scale: desired pattern is identically zero");
  return std::max(0.0, desired.values.dot(pattern) / denom);
}

inline double optimal_scale(const CMatrix& r, const DesiredPattern& desired, const SteeringMatrix& steering) {
  return optimal_scale(beampattern(r, steering, 1e300), desired);
}

inline double power_db(double linear) {
  constexpr double floor_db = -120.0;
  if (!(linear > 0.0)) return floor_db;
  return std::max(floor_db, 10.0 * std::log10(linear));
}

/// CSV with header theta_deg,desired,power_linear,power_db. `desired` is written
/// as given, so callers pass delta * phi when they want the scaled target.
inline void write_beampattern_csv(std::ostream& os, const AngularGrid& grid, const Vector& desired,
                                  const Vector& power) {
  os << "theta_deg,desired,power_linear,power_db\n";
  char buf[160];
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const auto i = static_cast<Eigen::Index>(l);
    std::snprintf(buf, sizeof buf, "%.6f,%.12e,%.12e,%.6f\n", grid.angles[l], desired[i], power[i],
                  power_db(power[i]));
    os << buf;
  }
}

}  // namespace nisac
