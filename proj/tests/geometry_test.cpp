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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "support/geometry_oracle.hpp"

namespace tatrack {
namespace {

EllipseLocus exact_ellipse(Position enb, Position probe, Position ue, double sigma = 1.0) {
  return {enb, probe, distance(ue, enb) + distance(ue, probe), sigma};
}

TEST(Annulus, ZeroTaClampsInnerRadius) {
  const auto r = annulus_from_ta({}, TaIndex(0));
  EXPECT_EQ(r.r_inner, 0.0);
  EXPECT_NEAR(r.r_outer, 39.035, 1e-3);
}

TEST(Annulus, FirstRing) {
  const auto r = annulus_from_ta({}, TaIndex(1));
  EXPECT_NEAR(r.range, 78.07, 1e-2);
  EXPECT_NEAR(r.r_inner, 39.04, 1e-2);
  EXPECT_NEAR(r.r_outer, 117.11, 1e-2);
}

TEST(Annulus, SixthRingMidRadius) {
  // 6 steps of 8 Ts = 6 / 3.84 MHz of light travel
  const double oracle = 6.0 * 299'792'458.0 / 3'840'000.0;
  EXPECT_NEAR(annulus_from_ta({}, TaIndex(6)).range, oracle, 1e-9);
  EXPECT_NEAR(oracle, 468.43, 1e-2);
}

TEST(Annulus, WidthConstantForAllIndices) {
  for (int k = 1; k <= kMaxTaIndex; ++k) {
    const auto r = annulus_from_ta({3.0, -4.0}, TaIndex(k));
    ASSERT_NEAR(r.r_outer - r.r_inner, 78.0709, 1e-4);
    ASSERT_LT(r.r_inner, r.r_outer);
  }
}

TEST(Ellipse, ColocatedFociGiveCircle) {
  const Span sum = Span::us(1);
  const auto e = ellipse_from_sum({10.0, 20.0}, {10.0, 20.0}, sum, 1.0);
  for (double th = 0.0; th < 6.28; th += 0.3) {
    EXPECT_NEAR(distance(ellipse_point(e, th), {10.0, 20.0}), sum.meters() / 2.0, 1e-9);
  }
}

TEST(Ellipse, PythagorasExample) {
  const Position enb{0.0, 0.0}, probe{1000.0, 0.0}, ue{500.0, 400.0};
  const double one_way_sum = 2.0 * std::sqrt(500.0 * 500.0 + 400.0 * 400.0);
  EXPECT_NEAR(one_way_sum, 1280.62, 1e-2);
  const Span s = Span::from_meters(distance(ue, enb)) + Span::from_meters(distance(ue, probe));
  const auto e = ellipse_from_sum(enb, probe, s, 1.0);
  EXPECT_NEAR(e.sum_dist, one_way_sum, 1e-3);
}

TEST(Ellipse, InfeasibleSumReportsDeficit) {
  try {
    ellipse_from_sum({}, {1000.0, 0.0}, Span::from_meters(900.0), 1.0);
    FAIL() << "expected InfeasibleLocus";
  } catch (const InfeasibleLocus& e) {
    EXPECT_NEAR(e.deficit_m(), 100.0, 1e-3);
  }
}

TEST(Ellipse, PointsSatisfyRangeSum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(-1000.0, 1000.0);
  for (int i = 0; i < 200; ++i) {
    const Position f1{c(rng), c(rng)}, f2{c(rng), c(rng)}, ue{c(rng), c(rng)};
    const auto e = exact_ellipse(f1, f2, ue);
    for (int k = 0; k < 64; ++k) {
      const Position p = ellipse_point(e, 0.1 * k);
      ASSERT_LT(std::abs(e.range_sum(p) - e.sum_dist), 1e-6);
    }
  }
}

TEST(Ellipse, UplinkPipelinePlacesUeOnLocus) {
  const Position enb{0.0, 0.0}, probe{300.0, 100.0}, ue{120.0, -80.0};
  const Span d_ue = Span::from_meters(distance(ue, enb));
  const Span d_ul = Span::from_meters(distance(ue, probe));
  const Span dta = ta_span(quantize_ta(d_ue * 2));
  const Instant t_n = Instant::at(Span::ms(42));
  const Span s = sum_delay(uplink_toa(t_n, d_ue, d_ul, dta), t_n, dta);
  const auto e = ellipse_from_sum(enb, probe, s, 1.0);
  EXPECT_LT(std::abs(e.range_sum(ue) - e.sum_dist), 1e-3);
}

TEST(Intersect, RingContainingEllipseYieldsFullArc) {
  const AnnulusLocus ring{{}, 0.0, 1000.0, 500.0, kTaRingSigma};
  const auto e = exact_ellipse({}, {10.0, 0.0}, {50.0, 0.0});
  const auto arcs = intersect(ring, e);
  ASSERT_EQ(arcs.size(), 1u);
  EXPECT_NEAR(arcs[0].theta_end - arcs[0].theta_begin, 2.0 * std::numbers::pi, 1e-12);
}

TEST(Intersect, DisjointLociYieldNothing) {
  const AnnulusLocus ring{{}, 2000.0, 2078.0, 2039.0, kTaRingSigma};
  EXPECT_TRUE(intersect(ring, exact_ellipse({}, {10.0, 0.0}, {50.0, 0.0})).empty());
}

TEST(Intersect, SeparatedDevicesGiveTwoAreas) {
  // eNodeB and probe 400 m apart, UE between them and off the axis.
  const Position enb{0.0, 0.0}, probe{400.0, 0.0}, ue{180.0, 60.0};
  const auto ta = quantize_ta(Span::from_meters(distance(ue, enb)) * 2);
  const auto ring = annulus_from_ta(enb, ta);
  const auto e = exact_ellipse(enb, probe, ue);
  const auto arcs = intersect(ring, e);
  ASSERT_EQ(arcs.size(), 2u);
  // one arc above the axis, one below
  EXPECT_LT(arcs[0].midpoint.y * arcs[1].midpoint.y, 0.0);
  for (const auto& a : arcs) EXPECT_TRUE(ring.contains(a.midpoint));
}

TEST(Intersect, ArcsAreDisjointAndInsideRing) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto c = testing::random_ring_ellipse(rng);
    const auto arcs = intersect(c.ring, c.ellipse);
    ASSERT_LE(arcs.size(), 2u);
    for (const auto& a : arcs) {
      ASSERT_LT(a.theta_begin, a.theta_end);
      for (int k = 1; k < 16; ++k) {
        const double th = a.theta_begin + (a.theta_end - a.theta_begin) * k / 16.0;
        const double r = distance(ellipse_point(c.ellipse, th), c.ring.center);
        ASSERT_GE(r, c.ring.r_inner - 1e-6);
        ASSERT_LE(r, c.ring.r_outer + 1e-6);
      }
    }
  }
}

TEST(Intersect, AgreesWithGridOracle) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 40; ++i) {
    const auto c = testing::random_ring_ellipse(rng);
    const auto g = testing::check_against_grid(c, intersect(c.ring, c.ellipse));
    ASSERT_TRUE(g.ok) << "case " << i << ": uncovered " << g.worst_uncovered << " m, midpoint "
                      << g.worst_midpoint << " m";
  }
}

TEST(Intersect, GridOracleSkipsGrazingBand) {
  // Circle 0.18 m outside the outer edge: no intersection, although the
  // oracle's range-sum band reaches into the ring.
  testing::RingEllipseCase c{annulus_from_ta({0.0, 0.0}, TaIndex(4)),
                             EllipseLocus{{0.0, 0.0}, {0.0, 0.0}, 2.0 * 351.5, 1.0}};
  const auto arcs = intersect(c.ring, c.ellipse);
  EXPECT_TRUE(arcs.empty());
  const auto g = testing::check_against_grid(c, arcs);
  EXPECT_TRUE(g.ok) << g.worst_uncovered;
  EXPECT_EQ(g.feasible_points, 0u);
}

TEST(Multilaterate, TwoNoiselessEllipsesRecoverPosition) {
  const Position enb{0.0, 0.0}, ue{140.0, 95.0};
  const std::vector<Locus> loci{exact_ellipse(enb, {300.0, 0.0}, ue),
                                exact_ellipse(enb, {0.0, 250.0}, ue)};
  const auto near = multilaterate(loci, Position{100.0, 100.0});
  EXPECT_LT(distance(near.position, ue), 1e-3);
  EXPECT_LT(near.gradient_norm, 1e-9);
  EXPECT_FALSE(near.degenerate);

  // Two ellipses cross twice; both crossings are exact fits.
  const auto all = multilaterate(loci);
  ASSERT_EQ(all.candidates.size(), 2u);
  EXPECT_LT(std::min(distance(all.candidates[0], ue), distance(all.candidates[1], ue)), 1e-3);
}

TEST(Multilaterate, ThreeNoiselessEllipsesAreUnique) {
  const Position enb{0.0, 0.0}, ue{140.0, 95.0};
  const std::vector<Locus> loci{exact_ellipse(enb, {300.0, 0.0}, ue),
                                exact_ellipse(enb, {0.0, 250.0}, ue),
                                exact_ellipse(enb, {-200.0, -150.0}, ue)};
  const auto est = multilaterate(loci);
  EXPECT_LT(distance(est.position, ue), 1e-3);
  EXPECT_EQ(est.candidates.size(), 1u);
}

TEST(Multilaterate, SingleProbeRingAndEllipseGiveTwoCandidates) {
  const Position enb{0.0, 0.0}, probe{400.0, 0.0}, ue{180.0, 60.0};
  const auto ring = annulus_from_ta(enb, quantize_ta(Span::from_meters(distance(ue, enb)) * 2));
  const std::vector<Locus> loci{ring, exact_ellipse(enb, probe, ue)};
  const auto est = multilaterate(loci);
  ASSERT_EQ(est.candidates.size(), 2u);
  EXPECT_NEAR(est.candidates[0].x, est.candidates[1].x, 1e-6);
  EXPECT_NEAR(est.candidates[0].y, -est.candidates[1].y, 1e-6);
}

TEST(Multilaterate, CollinearFociAreFlagged) {
  const Position ue{150.0, 0.0};
  const std::vector<Locus> loci{exact_ellipse({}, {300.0, 0.0}, ue),
                                exact_ellipse({}, {500.0, 0.0}, ue)};
  const auto est = multilaterate(loci, Position{150.0, 0.5});
  EXPECT_TRUE(est.degenerate || est.condition_number > 1e6);
}

TEST(Multilaterate, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(-500.0, 500.0);
  for (int i = 0; i < 200; ++i) {
    const Position ue{c(rng), c(rng)};
    const std::vector<Locus> loci{exact_ellipse({}, {c(rng), c(rng)}, ue, 2.0),
                                  annulus_from_ta({c(rng), c(rng)}, TaIndex(3)),
                                  exact_ellipse({c(rng), c(rng)}, {c(rng), c(rng)}, ue, 0.5)};
    const Position p{c(rng), c(rng)};
    const auto jac = residual_jacobian(loci, p);
    constexpr double h = 1e-4;
    const auto rxp = normalized_residuals(loci, p + Position{h, 0.0});
    const auto rxm = normalized_residuals(loci, p - Position{h, 0.0});
    const auto ryp = normalized_residuals(loci, p + Position{0.0, h});
    const auto rym = normalized_residuals(loci, p - Position{0.0, h});
    for (std::size_t k = 0; k < loci.size(); ++k) {
      const double fx = (rxp[k] - rxm[k]) / (2 * h);
      const double fy = (ryp[k] - rym[k]) / (2 * h);
      const double scale = std::max(std::hypot(jac[k][0], jac[k][1]), 1e-12);
      ASSERT_LT(std::abs(fx - jac[k][0]) / scale, 1e-6);
      ASSERT_LT(std::abs(fy - jac[k][1]) / scale, 1e-6);
    }
  }
}

TEST(Multilaterate, MonteCarloErrorMatchesCovariance) {
  const Position enb{0.0, 0.0}, ue{120.0, 80.0};
  const std::array<Position, 3> probes{Position{300.0, 0.0}, Position{0.0, 300.0},
                                       Position{-250.0, -200.0}};
  constexpr double sigma = 2.0;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, sigma);
  double sq = 0.0;
  double predicted = 0.0;
  constexpr int kTrials = 2'000;
  for (int t = 0; t < kTrials; ++t) {
    std::vector<Locus> loci;
    for (const auto& pr : probes) {
      auto e = exact_ellipse(enb, pr, ue, sigma);
      e.sum_dist += noise(rng);
      loci.push_back(e);
    }
    const auto est = multilaterate(loci);
    const Position d = est.position - ue;
    sq += d.x * d.x + d.y * d.y;
    predicted += est.covariance[0] + est.covariance[3];
  }
  const double rms = std::sqrt(sq / kTrials);
  const double crlb = std::sqrt(predicted / kTrials);
  EXPECT_NEAR(rms / crlb, 1.0, 0.25);
}

TEST(Multilaterate, IterationBoundRaisesWithBestIterate) {
  const Position ue{140.0, 95.0};
  const std::vector<Locus> loci{exact_ellipse({}, {300.0, 0.0}, ue),
                                exact_ellipse({}, {0.0, 250.0}, ue)};
  SolverOptions opts;
  opts.max_iterations = 1;
  try {
    multilaterate(loci, Position{-800.0, 900.0}, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best().iterations, 1);
    EXPECT_TRUE(std::isfinite(e.best().position.x));
  }
}

TEST(Multilaterate, CovarianceIsSymmetricPsd) {
  const Position ue{60.0, -30.0};
  const std::vector<Locus> loci{exact_ellipse({}, {300.0, 10.0}, ue),
                                exact_ellipse({}, {-20.0, 250.0}, ue),
                                annulus_from_ta({}, TaIndex(1))};
  const auto est = multilaterate(loci);
  Eigen::Matrix2d cov;
  cov << est.covariance[0], est.covariance[1], est.covariance[2], est.covariance[3];
  EXPECT_DOUBLE_EQ(cov(0, 1), cov(1, 0));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_GE(est.residual_rms, 0.0);
}

TEST(OffsetSolve, RecoversCommonDelay) {
  const Position enb{0.0, 0.0}, ue{110.0, 70.0};
  const Span offset = Span::ns(400);
  std::vector<EllipseLocus> ellipses;
  for (Position pr : {Position{300.0, 0.0}, Position{0.0, 300.0}, Position{-250.0, -200.0},
                      Position{200.0, -260.0}}) {
    auto e = exact_ellipse(enb, pr, ue);
    e.sum_dist += offset.meters();
    ellipses.push_back(e);
  }
  const auto fit = multilaterate_with_offset(ellipses, enb);
  EXPECT_LT(distance(fit.estimate.position, ue), 1e-2);
  EXPECT_NEAR(fit.offset.ticks(), offset.ticks(), 50);
}

TEST(OffsetSolve, NeedsThreeEllipses) {
  const std::vector<EllipseLocus> two{exact_ellipse({}, {1.0, 0.0}, {5.0, 5.0}),
                                      exact_ellipse({}, {0.0, 1.0}, {5.0, 5.0})};
  EXPECT_THROW(multilaterate_with_offset(two, {}), InvalidArgument);
}

TEST(Colocated, Examples) {
  EXPECT_EQ(colocated_distance(Span{}), 0.0);
  EXPECT_NEAR(colocated_distance(Span::us(1)), kSpeedOfLight / 2.0 * 1e-6, 1e-9);
  EXPECT_NEAR(colocated_distance(Span::us(1)), 149.896, 1e-3);
  const Span d = Span::from_meters(60.0);
  EXPECT_NEAR(colocated_distance(d * 2), 60.0, 1e-3);
  EXPECT_THROW(colocated_distance(Span::ps(-1)), InvalidArgument);
}

TEST(Mask, KeepsCandidatesInsidePolygon) {
  const std::vector<Position> street{{0, -5}, {500, -5}, {500, 5}, {0, 5}};
  const std::vector<Position> cand{{100.0, 0.0}, {100.0, 50.0}};
  const auto kept = filter_by_mask(cand, street);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], (Position{100.0, 0.0}));
  EXPECT_FALSE(point_in_polygon({600.0, 0.0}, street));
}

}  // namespace
}  // namespace tatrack
