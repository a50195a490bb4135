// Copyright 2026 The tatrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Position loci from timing measurements, and the solvers that intersect
// them. Everything is in a 2-D plane, in meters.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tatrack/errors.hpp"
#include "tatrack/timebase.hpp"

namespace tatrack {

struct Position {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Position operator+(Position a, Position b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Position operator-(Position a, Position b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Position operator*(double k, Position a) { return {k * a.x, k * a.y}; }
  friend constexpr bool operator==(Position, Position) = default;
};

inline double norm(Position p) { return std::hypot(p.x, p.y); }
inline double distance(Position a, Position b) { return norm(a - b); }

/// Soft-range weight of a TA ring: the std-dev of a uniform distribution
/// one ring wide.
inline const double kTaRingSigma = kTaRingWidth / std::sqrt(12.0);

/// Ring around an eNodeB, from a timing-advance value.
struct AnnulusLocus {
  Position center;
  double r_inner = 0.0;
  double r_outer = 0.0;
  /// Nominal range used when the ring enters a least-squares solve.
  double range = 0.0;
  double sigma = kTaRingSigma;

  bool contains(Position p) const {
    const double r = distance(p, center);
    return r >= r_inner && r <= r_outer;
  }
};

/// Points whose distances to the two foci add up to `sum_dist`.
struct EllipseLocus {
  Position focus_enb;
  Position focus_probe;
  double sum_dist = 0.0;
  /// 1-sigma error of sum_dist.
  double sigma = 0.0;

  double focal_distance() const { return distance(focus_enb, focus_probe); }
  double range_sum(Position p) const {
    return distance(p, focus_enb) + distance(p, focus_probe);
  }
};

using Locus = std::variant<AnnulusLocus, EllipseLocus>;

/// Ellipse arc, parameterized by eccentric anomaly theta in [begin, end).
/// `end` may exceed 2*pi when the arc wraps through theta = 0.
struct CandidateArc {
  double theta_begin = 0.0;
  double theta_end = 0.0;
  Position midpoint;
};

struct PositionEstimate {
  Position position;
  double residual_rms = 0.0;
  /// Row-major 2x2 covariance [m^2]; infinite when the fix is degenerate.
  std::array<double, 4> covariance{};
  /// Every equally good solution. Two entries when the geometry is mirror
  /// symmetric (all foci on one line).
  std::vector<Position> candidates;
  double gradient_norm = 0.0;
  int iterations = 0;
  double condition_number = 0.0;
  bool degenerate = false;
};

/// An ellipse whose range sum is below the focal distance.
class InfeasibleLocus : public Error {
 public:
  InfeasibleLocus(const std::string& what, double deficit_m) : Error(what), deficit_m_(deficit_m) {}
  /// Focal distance minus the measured range sum [m].
  double deficit_m() const { return deficit_m_; }

 private:
  double deficit_m_;
};

/// The solver hit its iteration bound. Carries the best iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, PositionEstimate best)
      : Error(what), best_(std::move(best)) {}
  const PositionEstimate& best() const { return best_; }

 private:
  PositionEstimate best_;
};

struct SolverOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-9;
  double gradient_tolerance = 1e-10;
};

/// Ring [mid - w/2, mid + w/2] with mid = c * ta_span(ta) / 2 and
/// w = c * 8 * Ts; the inner radius is clamped at 0.
AnnulusLocus annulus_from_ta(Position enb, TaIndex ta);

/// Ellipse with foci at the eNodeB and the probe and range sum
/// c * sum_delay. Throws InfeasibleLocus when the sum is shorter than the
/// focal distance. Co-located foci yield a circle of radius c * sum / 2.
EllipseLocus ellipse_from_sum(Position enb, Position probe, Span sum_delay, double sigma);

/// Point of the ellipse at eccentric anomaly theta.
Position ellipse_point(const EllipseLocus& e, double theta);

/// Disjoint ellipse arcs that lie inside the ring (hard constraint).
std::vector<CandidateArc> intersect(const AnnulusLocus& annulus, const EllipseLocus& ellipse);

/// Weighted residuals (measured - model) / sigma, one per locus.
std::vector<double> normalized_residuals(std::span<const Locus> loci, Position p);

/// d(residual_i)/d(x, y), one row per locus.
std::vector<std::array<double, 2>> residual_jacobian(std::span<const Locus> loci, Position p);

/// Starting point: the pairwise locus intersection with the smallest total
/// squared residual, falling back to the first eNodeB position.
Position initial_guess(std::span<const Locus> loci);

/// Levenberg-Marquardt fit of a position to the loci. Annuli enter as soft
/// ranges. Throws ConvergenceError after max_iterations.
PositionEstimate multilaterate(std::span<const Locus> loci, Position initial,
                               const SolverOptions& options = {});
/// Multi-start variant seeded from the pairwise crossings. Fixes that fit
/// as well as the best one are appended to `candidates`.
PositionEstimate multilaterate(std::span<const Locus> loci, const SolverOptions& options = {});

/// Position plus a common unknown delay added to every range sum, e.g. a
/// UE-side random transmit offset. Needs at least three ellipses.
struct OffsetEstimate {
  PositionEstimate estimate;
  Span offset;
};
OffsetEstimate multilaterate_with_offset(std::span<const EllipseLocus> ellipses, Position initial,
                                         const SolverOptions& options = {});

/// UE distance when eNodeB and probe share one location: c * sum / 2.
double colocated_distance(Span sum_delay);

bool point_in_polygon(Position p, std::span<const Position> polygon);

/// Keeps the candidates that fall inside the polygon (e.g. a street map).
std::vector<Position> filter_by_mask(std::span<const Position> candidates,
                                     std::span<const Position> polygon);

}  // namespace tatrack
