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

// Brute-force grid oracle for ring/ellipse intersections.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tatrack/geometry.hpp"

namespace tatrack::testing {

struct RingEllipseCase {
  AnnulusLocus ring;
  EllipseLocus ellipse;
};

/// eNodeB at the origin, probe and UE scattered within a few hundred
/// meters, range sum perturbed so the loci do not always pass through the UE.
inline RingEllipseCase random_ring_ellipse(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(-200.0, 200.0);
  std::uniform_real_distribution<double> ue_coord(-250.0, 250.0);
  std::uniform_real_distribution<double> jitter(-30.0, 30.0);
  std::uniform_int_distribution<int> ta_jitter(-1, 1);
  const Position enb{0.0, 0.0};
  const Position probe{coord(rng), coord(rng)};
  const Position ue{ue_coord(rng), ue_coord(rng)};
  const double focal = distance(enb, probe);
  const double sum = std::max(distance(ue, enb) + distance(ue, probe) + jitter(rng), focal + 20.0);
  const int ta = std::clamp(quantize_ta(Span::from_meters(distance(ue, enb)) * 2).value() +
                                ta_jitter(rng),
                            0, 1282);
  return {annulus_from_ta(enb, TaIndex(ta)), EllipseLocus{enb, probe, sum, 1.0}};
}

/// Eccentric angle of the ellipse point nearest to p: coarse global scan,
/// then successive local refinement.
inline double project_onto_ellipse(const EllipseLocus& e, Position p) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  constexpr int kCoarse = 256;
  double th = 0.0;
  double near = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kCoarse; ++k) {
    const double t = kTwoPi * k / kCoarse;
    const double d = distance(ellipse_point(e, t), p);
    if (d < near) {
      near = d;
      th = t;
    }
  }
  for (double step = kTwoPi / kCoarse; step > 1e-7; step *= 0.1) {
    const double c = th;
    for (int k = -10; k <= 10; ++k) {
      const double t = c + step * k;
      const double d = distance(ellipse_point(e, t), p);
      if (d < near) {
        near = d;
        th = t;
      }
    }
  }
  return th;
}

/// Distance from p to the arcs, given p's projection angle `th`; outside
/// every arc the nearer endpoint counts.
inline double distance_to_arcs(const EllipseLocus& e, const std::vector<CandidateArc>& arcs,
                               Position p, double th) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double near = distance(ellipse_point(e, th), p);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& arc : arcs) {
    double t = std::fmod(th - arc.theta_begin, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t <= arc.theta_end - arc.theta_begin) {
      best = std::min(best, near);
    } else {
      best = std::min({best, distance(ellipse_point(e, arc.theta_begin), p),
                       distance(ellipse_point(e, arc.theta_end), p)});
    }
  }
  return best;
}

struct GridCheck {
  bool ok = true;
  double worst_uncovered = 0.0;    // grid-feasible point farthest from any arc [m]
  double worst_midpoint = 0.0;     // largest ring violation of an arc midpoint [m]
  std::size_t feasible_points = 0;
};

/// Scans a 1 m grid over the ellipse's bounding box. A grid point is
/// feasible when its range sum is within `sum_tol` of the ellipse's and its
/// nearest ellipse point lies in the ring. Testing the grid point itself
/// would admit points next to a near-tangent crossing whose curve point is
/// outside the ring.
inline GridCheck check_against_grid(const RingEllipseCase& c,
                                    const std::vector<CandidateArc>& arcs, double limit = 2.0,
                                    double sum_tol = 0.5) {
  GridCheck out;
  const auto& e = c.ellipse;
  const Position mid = 0.5 * (e.focus_enb + e.focus_probe);
  const double a = 0.5 * e.sum_dist + 2.0;
  const double x0 = std::floor(mid.x - a), x1 = std::ceil(mid.x + a);
  const double y0 = std::floor(mid.y - a), y1 = std::ceil(mid.y + a);
  std::vector<std::pair<Position, double>> feasible;
  for (double x = x0; x <= x1; x += 1.0) {
    for (double y = y0; y <= y1; y += 1.0) {
      const Position p{x, y};
      if (std::abs(e.range_sum(p) - e.sum_dist) > sum_tol) continue;
      const double th = project_onto_ellipse(e, p);
      if (!c.ring.contains(ellipse_point(e, th))) continue;
      feasible.emplace_back(p, th);
    }
  }
  out.feasible_points = feasible.size();
  for (const auto& [p, th] : feasible) {
    const double d = distance_to_arcs(e, arcs, p, th);
    out.worst_uncovered = std::max(out.worst_uncovered, d);
  }
  for (const auto& arc : arcs) {
    const double r = distance(arc.midpoint, c.ring.center);
    const double violation = std::max({c.ring.r_inner - r, r - c.ring.r_outer, 0.0});
    out.worst_midpoint = std::max(out.worst_midpoint, violation);
  }
  out.ok = out.worst_uncovered <= limit && out.worst_midpoint <= limit;
  return out;
}

}  // namespace tatrack::testing
