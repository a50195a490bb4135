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

#include "tatrack/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace tatrack {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinSigma = 1e-3;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// p(theta) = center + a cos(theta) u + b sin(theta) v
struct Frame {
  Position center;
  Position u{1.0, 0.0};
  Position v{0.0, 1.0};
  double a = 0.0;
  double b = 0.0;

  Position at(double theta) const {
    return center + (a * std::cos(theta)) * u + (b * std::sin(theta)) * v;
  }
  Position tangent(double theta) const {
    return (-a * std::sin(theta)) * u + (b * std::cos(theta)) * v;
  }
};

double dot(Position a, Position b) { return a.x * b.x + a.y * b.y; }

Frame frame_of(const EllipseLocus& e) {
  Frame f;
  f.center = 0.5 * (e.focus_enb + e.focus_probe);
  const double focal = e.focal_distance();
  if (focal > 0.0) {
    f.u = (1.0 / focal) * (e.focus_probe - e.focus_enb);
    f.v = {-f.u.y, f.u.x};
  }
  f.a = 0.5 * e.sum_dist;
  const double c = 0.5 * focal;
  f.b = std::sqrt(std::max(f.a * f.a - c * c, 0.0));
  return f;
}

Frame frame_of(const AnnulusLocus& r) {
  Frame f;
  f.center = r.center;
  f.a = f.b = r.range;
  return f;
}

double effective_sigma(double s) { return std::max(s, kMinSigma); }

/// measured - model [m]
double raw_residual(const Locus& l, Position p) {
  if (const auto* ring = std::get_if<AnnulusLocus>(&l)) {
    return ring->range - distance(p, ring->center);
  }
  const auto& e = std::get<EllipseLocus>(l);
  return e.sum_dist - e.range_sum(p);
}

double locus_sigma(const Locus& l) {
  return std::visit([](const auto& x) { return effective_sigma(x.sigma); }, l);
}

Position unit_from(Position from, Position p) {
  const double d = distance(p, from);
  if (d < 1e-12) return {};
  return (1.0 / d) * (p - from);
}

/// Real roots of sum(coeffs[i] * t^i).
std::vector<double> real_roots(std::array<double, 5> coeffs) {
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  for (double& c : coeffs) c /= scale;
  int degree = 4;
  while (degree > 0 && std::abs(coeffs[degree]) < 1e-13) --degree;
  std::vector<double> roots;
  if (degree == 0) return roots;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) {
    companion(0, i) = -coeffs[degree - 1 - i] / coeffs[degree];
    if (i + 1 < degree) companion(i + 1, i) = 1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  for (int i = 0; i < degree; ++i) {
    const auto z = solver.eigenvalues()(i);
    // Near-double roots come back as complex pairs with a small imaginary
    // part; keep both flanks so a short arc between them is still bracketed.
    const double tol = 1e-3 * (1.0 + std::abs(z.real()));
    if (std::abs(z.imag()) <= tol) {
      roots.push_back(z.real());
      if (z.imag() != 0.0) {
        roots.push_back(z.real() - std::abs(z.imag()));
        roots.push_back(z.real() + std::abs(z.imag()));
      }
    }
  }
  return roots;
}

double wrap_angle(double t) {
  t = std::fmod(t, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  return t;
}

/// Angles where |p(theta) - center| = radius.
std::vector<double> radius_crossings(const Frame& f, Position center, double radius) {
  // Lengths scaled by a keep the quartic well conditioned.
  const double s = f.a > 0.0 ? f.a : 1.0;
  const Position w = (1.0 / s) * (f.center - center);
  const double a = f.a / s;
  const double b = f.b / s;
  const double r = radius / s;
  const double k = dot(w, w) - r * r;
  const double uu = dot(w, f.u);
  const double vv = dot(w, f.v);
  // tan half-angle substitution of |w + a cos u + b sin v|^2 - r^2
  const std::array<double, 5> coeffs{k + a * a + 2 * a * uu, 4 * b * vv,
                                     2 * k - 2 * a * a + 4 * b * b, 4 * b * vv,
                                     k + a * a - 2 * a * uu};
  std::vector<double> out;
  const auto fn = [&](double th) {
    const Position q = f.at(th) - center;
    return dot(q, q) - radius * radius;
  };
  const auto dfn = [&](double th) { return 2.0 * dot(f.at(th) - center, f.tangent(th)); };
  for (double t : real_roots(coeffs)) {
    double th = 2.0 * std::atan(t);
    for (int i = 0; i < 20; ++i) {
      const double d = dfn(th);
      if (d == 0.0) break;
      const double step = fn(th) / d;
      th -= step;
      if (std::abs(step) < 1e-15) break;
    }
    out.push_back(wrap_angle(th));
  }
  out.push_back(std::numbers::pi);  // t = infinity
  return out;
}

struct Step2 {
  Position delta;
  bool ok = false;
};

Step2 solve2(const std::array<double, 3>& h, Position rhs) {
  // [h0 h1; h1 h2] x = rhs
  const double det = h[0] * h[2] - h[1] * h[1];
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) return {};
  return {{(h[2] * rhs.x - h[1] * rhs.y) / det, (h[0] * rhs.y - h[1] * rhs.x) / det}, true};
}

double cost_of(std::span<const Locus> loci, Position p) {
  double c = 0.0;
  for (double r : normalized_residuals(loci, p)) c += r * r;
  return 0.5 * c;
}

void fill_statistics(std::span<const Locus> loci, PositionEstimate& est) {
  const auto jac = residual_jacobian(loci, est.position);
  const auto res = normalized_residuals(loci, est.position);
  std::array<double, 3> h{};
  Position g{};
  double sq = 0.0;
  for (std::size_t i = 0; i < loci.size(); ++i) {
    h[0] += jac[i][0] * jac[i][0];
    h[1] += jac[i][0] * jac[i][1];
    h[2] += jac[i][1] * jac[i][1];
    g.x += jac[i][0] * res[i];
    g.y += jac[i][1] * res[i];
    const double raw = raw_residual(loci[i], est.position);
    sq += raw * raw;
  }
  est.gradient_norm = norm(g);
  est.residual_rms = loci.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(loci.size()));
  const double tr = h[0] + h[2];
  const double det = h[0] * h[2] - h[1] * h[1];
  const double disc = std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
  const double lmax = 0.5 * tr + disc;
  const double lmin = 0.5 * tr - disc;
  est.condition_number = lmin > 0.0 ? lmax / lmin : kInf;
  est.degenerate = !(lmin > 0.0) || est.condition_number > 1e12;
  if (est.degenerate) {
    est.covariance = {kInf, 0.0, 0.0, kInf};
  } else {
    est.covariance = {h[2] / det, -h[1] / det, -h[1] / det, h[0] / det};
  }
}

/// Mirror image of p when every center and focus lies on one line.
std::optional<Position> mirror_candidate(std::span<const Locus> loci, Position p) {
  std::vector<Position> pts;
  for (const auto& l : loci) {
    if (const auto* ring = std::get_if<AnnulusLocus>(&l)) {
      pts.push_back(ring->center);
    } else {
      const auto& e = std::get<EllipseLocus>(l);
      pts.push_back(e.focus_enb);
      pts.push_back(e.focus_probe);
    }
  }
  Position p0{}, p1{};
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = distance(pts[i], pts[j]);
      if (d > best) {
        best = d;
        p0 = pts[i];
        p1 = pts[j];
      }
    }
  }
  if (best < 1e-6) return std::nullopt;
  const Position dir = (1.0 / best) * (p1 - p0);
  const Position nrm{-dir.y, dir.x};
  for (const Position& q : pts) {
    if (std::abs(dot(q - p0, nrm)) > 1e-6) return std::nullopt;
  }
  const double off = dot(p - p0, nrm);
  const Position m = p - (2.0 * off) * nrm;
  if (distance(m, p) <= 1e-3) return std::nullopt;
  return m;
}

}  // namespace

AnnulusLocus annulus_from_ta(Position enb, TaIndex ta) {
  const double mid = static_cast<double>(ta.value()) * kTaRingWidth;
  const double half = 0.5 * kTaRingWidth;
  return {enb, std::max(mid - half, 0.0), mid + half, mid, kTaRingSigma};
}

EllipseLocus ellipse_from_sum(Position enb, Position probe, Span sum_delay, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("negative ellipse sigma");
  const double sum = sum_delay.meters();
  const double focal = distance(enb, probe);
  if (sum < focal) {
    // Picosecond rounding can put a point on the focal segment just below it.
    if (focal - sum > 1e-6) {
      throw InfeasibleLocus("range sum " + std::to_string(sum) + " m is below focal distance " +
                                std::to_string(focal) + " m",
                            focal - sum);
    }
    return {enb, probe, focal, sigma};
  }
  return {enb, probe, sum, sigma};
}

Position ellipse_point(const EllipseLocus& e, double theta) { return frame_of(e).at(theta); }

std::vector<CandidateArc> intersect(const AnnulusLocus& annulus, const EllipseLocus& ellipse) {
  const Frame f = frame_of(ellipse);
  std::vector<double> breaks;
  constexpr int kUniform = 512;
  breaks.reserve(kUniform + 16);
  for (int i = 0; i < kUniform; ++i) breaks.push_back(kTwoPi * i / kUniform);
  for (double th : radius_crossings(f, annulus.center, annulus.r_outer)) breaks.push_back(th);
  if (annulus.r_inner > 0.0) {
    for (double th : radius_crossings(f, annulus.center, annulus.r_inner)) breaks.push_back(th);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double x, double y) { return y - x < 1e-14; }),
               breaks.end());

  const std::size_t n = breaks.size();
  const auto interval_end = [&](std::size_t i) {
    return i + 1 < n ? breaks[i + 1] : breaks[0] + kTwoPi;
  };
  std::vector<char> inside(n);
  std::size_t n_inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mid = 0.5 * (breaks[i] + interval_end(i));
    inside[i] = annulus.contains(f.at(mid)) ? 1 : 0;
    n_inside += inside[i];
  }
  std::vector<CandidateArc> arcs;
  if (n_inside == 0) return arcs;
  if (n_inside == n) {
    arcs.push_back({0.0, kTwoPi, f.at(std::numbers::pi)});
    return arcs;
  }
  std::size_t start = 0;
  while (inside[start]) ++start;  // first interval outside the ring
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t i = (start + k) % n;
    if (!inside[i]) continue;
    const double begin = breaks[i];
    std::size_t last = i;
    std::size_t steps = 0;
    while (inside[(last + 1) % n] && steps < n) {
      last = (last + 1) % n;
      ++steps;
    }
    double end = interval_end(last);
    if (last < i) end += kTwoPi;
    arcs.push_back({begin, end, f.at(0.5 * (begin + end))});
    k += steps;
  }
  return arcs;
}

std::vector<double> normalized_residuals(std::span<const Locus> loci, Position p) {
  std::vector<double> out;
  out.reserve(loci.size());
  for (const auto& l : loci) out.push_back(raw_residual(l, p) / locus_sigma(l));
  return out;
}

std::vector<std::array<double, 2>> residual_jacobian(std::span<const Locus> loci, Position p) {
  std::vector<std::array<double, 2>> out;
  out.reserve(loci.size());
  for (const auto& l : loci) {
    Position g;
    if (const auto* ring = std::get_if<AnnulusLocus>(&l)) {
      g = unit_from(ring->center, p);
    } else {
      const auto& e = std::get<EllipseLocus>(l);
      g = unit_from(e.focus_enb, p) + unit_from(e.focus_probe, p);
    }
    const double s = locus_sigma(l);
    out.push_back({-g.x / s, -g.y / s});
  }
  return out;
}

namespace {

/// Pairwise locus crossings, cheapest first; a single fallback point when
/// no two loci cross.
std::vector<Position> start_points(std::span<const Locus> loci) {
  if (loci.empty()) return {Position{}};
  const auto frame = [](const Locus& l) {
    return std::visit([](const auto& x) { return frame_of(x); }, l);
  };
  std::vector<Position> points;
  constexpr int kSamples = 720;
  for (std::size_t i = 0; i < loci.size(); ++i) {
    const Frame fi = frame(loci[i]);
    if (fi.a <= 0.0) continue;
    for (std::size_t j = 0; j < loci.size(); ++j) {
      if (i == j) continue;
      const auto g = [&](double th) { return raw_residual(loci[j], fi.at(th)); };
      double prev_t = 0.0;
      double prev = g(prev_t);
      for (int k = 1; k <= kSamples; ++k) {
        const double t = kTwoPi * k / kSamples;
        const double cur = g(t);
        if ((prev < 0.0) != (cur < 0.0)) {
          double lo = prev_t, hi = t, glo = prev;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = g(mid);
            if ((gm < 0.0) == (glo < 0.0)) {
              lo = mid;
              glo = gm;
            } else {
              hi = mid;
            }
          }
          points.push_back(fi.at(0.5 * (lo + hi)));
        }
        prev_t = t;
        prev = cur;
      }
    }
  }
  if (points.empty()) {
    for (const auto& l : loci) {
      if (const auto* e = std::get_if<EllipseLocus>(&l)) {
        return {ellipse_point(*e, 0.5 * std::numbers::pi)};
      }
    }
    const auto& ring = std::get<AnnulusLocus>(loci.front());
    return {ring.center + Position{ring.range, 0.0}};
  }
  std::vector<std::pair<double, Position>> scored;
  scored.reserve(points.size());
  for (const Position& q : points) scored.emplace_back(cost_of(loci, q), q);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<Position> out;
  for (const auto& [c, q] : scored) {
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](Position o) { return distance(o, q) < 1.0; });
    if (!dup) out.push_back(q);
  }
  return out;
}

}  // namespace

Position initial_guess(std::span<const Locus> loci) { return start_points(loci).front(); }

PositionEstimate multilaterate(std::span<const Locus> loci, Position initial,
                               const SolverOptions& options) {
  if (loci.empty()) throw InvalidArgument("multilaterate needs at least one locus");
  PositionEstimate est;
  Position p = initial;
  double cost = cost_of(loci, p);
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations && !converged; ++it) {
    const auto jac = residual_jacobian(loci, p);
    const auto res = normalized_residuals(loci, p);
    std::array<double, 3> h{};
    Position g{};
    for (std::size_t i = 0; i < loci.size(); ++i) {
      h[0] += jac[i][0] * jac[i][0];
      h[1] += jac[i][0] * jac[i][1];
      h[2] += jac[i][1] * jac[i][1];
      g.x += jac[i][0] * res[i];
      g.y += jac[i][1] * res[i];
    }
    if (norm(g) < options.gradient_tolerance) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      const std::array<double, 3> damped{h[0] + lambda * std::max(h[0], 1e-12), h[1],
                                         h[2] + lambda * std::max(h[2], 1e-12)};
      const Step2 step = solve2(damped, -1.0 * g);
      if (step.ok) {
        const Position q = p + step.delta;
        const double c = cost_of(loci, q);
        if (c < cost) {
          p = q;
          cost = c;
          lambda = std::max(lambda * 0.1, 1e-15);
          accepted = true;
          if (norm(step.delta) < options.step_tolerance) converged = true;
          continue;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent direction left at double precision.
        converged = true;
        break;
      }
    }
  }
  est.position = p;
  est.iterations = it;
  fill_statistics(loci, est);
  est.candidates.push_back(p);
  if (auto m = mirror_candidate(loci, p)) est.candidates.push_back(*m);
  if (!converged) {
    throw ConvergenceError("no convergence after " + std::to_string(options.max_iterations) +
                               " iterations",
                           est);
  }
  return est;
}

PositionEstimate multilaterate(std::span<const Locus> loci, const SolverOptions& options) {
  if (loci.empty()) throw InvalidArgument("multilaterate needs at least one locus");
  // Multi-start from the cheapest crossings so that every equally good fix
  // (e.g. both crossings of two ellipses) is reported.
  constexpr std::size_t kMaxStarts = 8;
  const auto starts = start_points(loci);
  std::vector<PositionEstimate> fits;
  std::optional<ConvergenceError> first_failure;
  for (std::size_t i = 0; i < std::min(starts.size(), kMaxStarts); ++i) {
    try {
      fits.push_back(multilaterate(loci, starts[i], options));
    } catch (const ConvergenceError& e) {
      if (!first_failure) first_failure = e;
    }
  }
  if (fits.empty()) throw *first_failure;
  const auto cost = [&](const PositionEstimate& e) { return cost_of(loci, e.position); };
  std::stable_sort(fits.begin(), fits.end(),
                   [&](const auto& l, const auto& r) { return cost(l) < cost(r); });
  PositionEstimate best = fits.front();
  const double best_cost = cost(best);
  const double tie = 1e-6 * std::max(1.0, best_cost) + 1e-9;
  for (std::size_t i = 1; i < fits.size(); ++i) {
    if (cost(fits[i]) - best_cost > tie) break;
    for (const Position& q : fits[i].candidates) {
      const bool dup = std::any_of(best.candidates.begin(), best.candidates.end(),
                                   [&](Position o) { return distance(o, q) < 1e-3; });
      if (!dup) best.candidates.push_back(q);
    }
  }
  return best;
}

namespace {

struct OffsetFit {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  double cost = kInf;
  int iterations = 0;
  bool converged = false;
};

OffsetFit fit_with_offset(std::span<const EllipseLocus> ellipses, Eigen::Vector3d x,
                          const SolverOptions& options) {
  const auto eval = [&](const Eigen::Vector3d& v, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
    const Position p{v(0), v(1)};
    r.resize(static_cast<Eigen::Index>(ellipses.size()));
    if (j) j->resize(r.size(), 3);
    for (std::size_t i = 0; i < ellipses.size(); ++i) {
      const auto& e = ellipses[i];
      const double s = effective_sigma(e.sigma);
      const auto k = static_cast<Eigen::Index>(i);
      r(k) = (e.sum_dist - v(2) - e.range_sum(p)) / s;
      if (j) {
        const Position g = unit_from(e.focus_enb, p) + unit_from(e.focus_probe, p);
        (*j)(k, 0) = -g.x / s;
        (*j)(k, 1) = -g.y / s;
        (*j)(k, 2) = -1.0 / s;
      }
    }
  };
  OffsetFit fit;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  eval(x, r, nullptr);
  double cost = 0.5 * r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations && !converged; ++it) {
    eval(x, r, &jac);
    const Eigen::Matrix3d h = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * r;
    if (g.norm() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix3d damped = h;
      for (int d = 0; d < 3; ++d) damped(d, d) += lambda * std::max(h(d, d), 1e-12);
      const Eigen::Vector3d step = damped.ldlt().solve(-g);
      Eigen::VectorXd rq;
      const Eigen::Vector3d q = x + step;
      eval(q, rq, nullptr);
      const double c = 0.5 * rq.squaredNorm();
      if (step.allFinite() && c < cost) {
        x = q;
        cost = c;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (step.norm() < options.step_tolerance) converged = true;
        continue;
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        converged = true;
        break;
      }
    }
  }
  fit.x = x;
  fit.cost = cost;
  fit.iterations = it;
  fit.converged = converged;
  return fit;
}

}  // namespace

OffsetEstimate multilaterate_with_offset(std::span<const EllipseLocus> ellipses, Position initial,
                                         const SolverOptions& options) {
  if (ellipses.size() < 3) {
    throw InvalidArgument("offset estimation needs at least three ellipses");
  }
  // The offset cannot exceed the smallest slack sum - focal.
  double slack = kInf;
  for (const auto& e : ellipses) slack = std::min(slack, e.sum_dist - e.focal_distance());
  slack = std::max(slack, 0.0);

  OffsetFit best;
  for (double frac : {0.0, 0.25, 0.5, 0.75, 0.95}) {
    const double o = frac * slack;
    std::vector<Locus> shifted;
    for (auto e : ellipses) {
      e.sum_dist -= o;
      shifted.emplace_back(e);
    }
    Position start = frac == 0.0 ? initial : initial_guess(shifted);
    const OffsetFit fit = fit_with_offset(ellipses, Eigen::Vector3d(start.x, start.y, o), options);
    if (fit.cost < best.cost) best = fit;
  }

  OffsetEstimate out;
  out.estimate.position = {best.x(0), best.x(1)};
  out.estimate.iterations = best.iterations;
  out.offset = Span::from_meters(best.x(2));
  std::vector<Locus> corrected;
  for (auto e : ellipses) {
    e.sum_dist -= best.x(2);
    corrected.emplace_back(e);
  }
  fill_statistics(corrected, out.estimate);
  out.estimate.candidates.push_back(out.estimate.position);
  if (!best.converged) {
    throw ConvergenceError("offset fit did not converge", out.estimate);
  }
  return out;
}

double colocated_distance(Span sum_delay) {
  if (sum_delay < Span{}) throw InvalidArgument("negative sum delay");
  return 0.5 * sum_delay.meters();
}

bool point_in_polygon(Position p, std::span<const Position> polygon) {
  bool in = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Position a = polygon[i];
    const Position b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y) &&
        p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
      in = !in;
    }
  }
  return in;
}

std::vector<Position> filter_by_mask(std::span<const Position> candidates,
                                     std::span<const Position> polygon) {
  std::vector<Position> out;
  for (const Position& c : candidates) {
    if (point_in_polygon(c, polygon)) out.push_back(c);
  }
  return out;
}

}  // namespace tatrack
