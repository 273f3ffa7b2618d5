#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "random.hpp"
#include "shellkin/energy.hpp"

using namespace shellkin;

TEST(Koiter, ZeroTensorsGiveZeroEnergy) {
  EnergyDensity d = koiter_density(Mat2::Zero(), Mat2::Zero(), Material{});
  EXPECT_EQ(d.stretching, 0.0);
  EXPECT_EQ(d.bending, 0.0);
}

TEST(Koiter, PublishedMagnitudes) {
  // Traces of 0.1 with E = 1 MPa, nu = 0.5, h = 0.3 mm:
  //   stretching = 0.3 / 1.5 * (0.05 + 0.05) = 0.02
  //   bending = 0.027 / 18 * 0.1 = 1.5e-4
  TraceInvariants t{0.1, 0.1};
  EnergyDensity d = koiter_density(t, t, Material{1.0, 0.5, 0.3});
  EXPECT_NEAR(d.stretching, 0.02, 1e-15);
  EXPECT_NEAR(d.bending, 1.5e-4, 1e-17);
}

TEST(Koiter, PureBendingHasNoStretching) {
  Mat2 h;
  h << 0.2, 0.05, 0.05, -0.1;
  EnergyDensity d = koiter_density(Mat2::Zero(), h, Material{});
  EXPECT_EQ(d.stretching, 0.0);
  EXPECT_GT(d.bending, 0.0);
}

TEST(Koiter, PoissonRatioOfOneRejected) {
  EXPECT_THROW(koiter_density(TraceInvariants{}, TraceInvariants{}, Material{1.0, 1.0, 0.3}), InvalidArgument);
  EXPECT_THROW((Material{1.0, 0.6, 0.3}.validate()), InvalidArgument);
  EXPECT_NO_THROW((Material{1.0, 0.5, 0.3}.validate()));
}

TEST(Traces, Examples) {
  TraceInvariants id = trace_invariants(Mat2::Identity());
  EXPECT_EQ(id.tr_sq, 2.0);
  EXPECT_EQ(id.sq_tr, 4.0);
  Mat2 d;
  d << 1.0, 0.0, 0.0, -1.0;
  TraceInvariants t = trace_invariants(d);
  EXPECT_EQ(t.tr_sq, 2.0);
  EXPECT_EQ(t.sq_tr, 0.0);
  // Uniaxial stretch 1.3: eigenvalues {0.345, 0}
  TraceInvariants s = trace_invariants_from_eigenvalues(0.345, 0.0);
  EXPECT_NEAR(s.tr_sq, 0.119025, 1e-15);
  EXPECT_NEAR(s.sq_tr, 0.119025, 1e-15);
}

TEST(Traces, ComponentsMatchEigenvaluesRandomized) {
  testgen::Gen gen(88);
  Material m{gen.uniform(0.5, 2.0), 0.3, 0.2};
  for (int trial = 0; trial < 500; ++trial) {
    Mat2 e, h;
    double eo = gen.uniform(-0.3, 0.3), ho = gen.uniform(-0.5, 0.5);
    e << gen.uniform(-0.5, 0.5), eo, eo, gen.uniform(-0.5, 0.5);
    h << gen.uniform(-1, 1), ho, ho, gen.uniform(-1, 1);
    PrincipalDecomposition pe = principal_decomposition(e), ph = principal_decomposition(h);
    EnergyDensity a = koiter_density(e, h, m);
    EnergyDensity b = koiter_density(trace_invariants_from_eigenvalues(pe.values[0], pe.values[1]),
                                     trace_invariants_from_eigenvalues(ph.values[0], ph.values[1]), m);
    EXPECT_NEAR(a.stretching, b.stretching, 1e-12);
    EXPECT_NEAR(a.bending, b.bending, 1e-12);
  }
}

TEST(Koiter, NonNegativeForPhysicalPoissonRange) {
  testgen::Gen gen(3);
  for (int trial = 0; trial < 1000; ++trial) {
    Material m{gen.uniform(0.1, 5.0), gen.uniform(0.0, 0.5), gen.uniform(0.05, 1.0)};
    Mat2 e, h;
    double eo = gen.uniform(-1, 1), ho = gen.uniform(-1, 1);
    e << gen.uniform(-1, 1), eo, eo, gen.uniform(-1, 1);
    h << gen.uniform(-1, 1), ho, ho, gen.uniform(-1, 1);
    EnergyDensity d = koiter_density(e, h, m);
    EXPECT_GE(d.stretching, 0.0);
    EXPECT_GE(d.bending, 0.0);
  }
}

TEST(Scaling, TubeParameters) {
  ScalingReport r = scaling_estimates({3.0, 19.0, 25.0, {1.0, 0.5, 0.3}});
  // theta1 = 3 / 9.5
  EXPECT_NEAR(r.theta1, 0.3157894736842105, 1e-15);
  EXPECT_NEAR(r.d2theta2, 1.0 / 3.0, 1e-15);
  EXPECT_GT(r.d2theta2, r.d1theta2);
  EXPECT_GT(r.d2theta2, r.d1theta1);
  EXPECT_FALSE(r.small_angle_exceeded);
  // (lambda^2 - 1)^2 / 4 with lambda = 25/19
  double lam2 = 625.0 / 361.0;
  EXPECT_NEAR(r.strain.tr_sq, 0.25 * (lam2 - 1) * (lam2 - 1), 1e-15);
  EXPECT_NEAR(r.curvature.tr_sq, 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(r.strain_magnitude.tr_sq, 0.1, 1e-15);
  EXPECT_NEAR(r.curvature_magnitude.tr_sq, 0.1, 1e-15);
  EXPECT_NEAR(r.magnitude.stretching, 0.02, 1e-15);
  EXPECT_NEAR(r.magnitude.bending, 1.5e-4, 1e-17);
  EXPECT_NEAR(r.bend_to_stretch(), 7.5e-3, 1e-15);
  EXPECT_GE(r.ratio(), 50.0);
  EXPECT_LE(r.ratio(), 200.0);
}

TEST(Scaling, RatioIsThicknessSquaredOverTwelveTimesTraces) {
  ScalingParams p{3.0, 19.0, 25.0, {2.0, 0.3, 0.4}};
  ScalingReport r = scaling_estimates(p);
  double nu = p.material.poisson;
  double te = (1 - nu) * r.strain.tr_sq + nu * r.strain.sq_tr;
  double th = (1 - nu) * r.curvature.tr_sq + nu * r.curvature.sq_tr;
  EXPECT_NEAR(r.raw.bending / r.raw.stretching, p.material.thickness * p.material.thickness / 12.0 * th / te, 1e-15);
}

TEST(Scaling, NoPrestrainGivesNoStretching) {
  ScalingReport r = scaling_estimates({3.0, 19.0, 19.0, {}});
  EXPECT_EQ(r.strain.tr_sq, 0.0);
  EXPECT_EQ(r.raw.stretching, 0.0);
}

TEST(Scaling, ShortTubeStaysOrderOneOverA) {
  for (double l0 : {19.0, 12.0, 6.0, 3.0}) {
    ScalingReport r = scaling_estimates({3.0, l0, l0 * 25.0 / 19.0, {}});
    EXPECT_TRUE(std::isfinite(r.curvature.tr_sq));
    EXPECT_NEAR(r.curvature.tr_sq, 1.0 / 9.0, 1e-15);
    EXPECT_LT(r.raw.bending, r.raw.stretching);
  }
  ScalingReport r = scaling_estimates({3.0, 6.0, 6.0 * 25.0 / 19.0, {}});
  EXPECT_TRUE(r.small_angle_exceeded);
  for (double v : {r.d1theta1, r.d1theta2, r.d2theta2}) {
    EXPECT_GT(v, 1.0 / 3.0 / 4.0);
    EXPECT_LT(v, 4.0 / 3.0);
  }
}

TEST(Scaling, OneSignificantFigure) {
  EXPECT_DOUBLE_EQ(one_significant_figure(0.1337), 0.1);
  EXPECT_DOUBLE_EQ(one_significant_figure(0.111), 0.1);
  EXPECT_DOUBLE_EQ(one_significant_figure(0.0267), 0.03);
  EXPECT_DOUBLE_EQ(one_significant_figure(-260.0), -300.0);
  EXPECT_EQ(one_significant_figure(0.0), 0.0);
}
