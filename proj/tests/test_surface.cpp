#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "random.hpp"
#include "shellkin/surface.hpp"

using namespace shellkin;

namespace {

constexpr double kPi = std::numbers::pi;

double max_rel(const Vec3& a, const Vec3& b, double scale) { return (a - b).norm() / scale; }

// Reciprocal frame (e^1, e^2, e_3) of a chart at a point, from its jet.
std::array<Vec3, 3> up_frame(const Chart& c, double x1, double x2) {
  SurfaceFrame f = frame_at(c, x1, x2);
  return {f.reciprocal[0], f.reciprocal[1], f.normal};
}

}  // namespace

TEST(Frame, CylinderHandDifferentiation) {
  Chart cyl = make_cylinder(3.0, 10.0);
  double phi = 0.7;
  SurfaceFrame f = frame_at(cyl, 2.0, phi);
  EXPECT_TRUE(f.tangent[0].isApprox(Vec3::UnitX(), 1e-14));
  EXPECT_NEAR(f.tangent[1].norm(), 3.0, 1e-14);
  // E1 x E2 = x * (0, -sin, cos) * 3 = 3 (0, -cos, -sin): radially inward.
  Vec3 radial(0.0, std::cos(phi), std::sin(phi));
  EXPECT_TRUE(f.normal.isApprox(-radial, 1e-14));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(f.reciprocal[i].dot(f.tangent[j]), i == j ? 1.0 : 0.0, 1e-10);
    EXPECT_NEAR(f.normal.dot(f.tangent[i]), 0.0, 1e-14);
  }
}

TEST(Frame, PlaneIsOrthonormal) {
  SurfaceFrame f = frame_at(make_plane(4.0, 5.0), 1.0, 2.0);
  for (int i = 0; i < 2; ++i) EXPECT_TRUE(f.reciprocal[i].isApprox(f.tangent[i]));
  EXPECT_TRUE(f.normal.isApprox(Vec3::UnitZ()));
  EXPECT_TRUE(f.metric.isApprox(Mat2::Identity()));
}

TEST(Frame, SphereEquator) {
  const double r = 3.0;
  SurfaceFrame f = frame_at(make_sphere(r), 0.4, kPi / 2.0);
  EXPECT_NEAR(f.tangent[0].norm(), r, 1e-14);
  Vec3 radial(std::cos(0.4), std::sin(0.4), 0.0);
  EXPECT_NEAR(std::abs(f.normal.dot(radial)), 1.0, 1e-14);
}

TEST(Frame, DegenerateMetricThrows) {
  Chart bad("collapsed", Domain{}, [](double u, double v) { return Vec3(u + v, u + v, 0.0); });
  EXPECT_THROW(frame_at(bad, 0.5, 0.5), SingularParametrization);
}

TEST(Curvature, PlaneIsZero) {
  TangentTensor b = curvature_tensor(make_plane(3.0, 3.0), 1.0, 1.0);
  EXPECT_EQ(b.m.norm(), 0.0);
}

TEST(Curvature, CylinderPrincipalCurvatures) {
  Chart cyl = make_cylinder(3.0, 10.0);
  TangentTensor b = curvature_tensor(cyl, 5.0, 1.1);
  PrincipalDecomposition p = principal_decomposition(b);
  EXPECT_NEAR(p.values[0], 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(p.values[1], 0.0, 1e-14);
  // Largest curvature is azimuthal, zero curvature axial.
  EXPECT_NEAR(std::abs(p.vectors[1].dot(Vec3::UnitX())), 1.0, 1e-14);
  EXPECT_NEAR(p.vectors[0].dot(Vec3::UnitX()), 0.0, 1e-14);
  EXPECT_LT(b.asymmetry(), 1e-8);
}

TEST(Curvature, SphereBothPrincipal) {
  for (double r : {1.0, 3.0, 4.5}) {
    PrincipalDecomposition p = principal_decomposition(curvature_tensor(make_sphere(r), 1.3, 1.0));
    EXPECT_NEAR(p.values[0], 1.0 / r, 1e-13);
    EXPECT_NEAR(p.values[1], 1.0 / r, 1e-13);
  }
}

TEST(Curvature, ReparametrizationInvariance) {
  // Same cylinder, angle vs arc-length azimuth, same 3D point.
  const double a = 3.0, phi = 2.2, z = 4.0;
  Chart c1 = make_cylinder(a, 10.0, Azimuth::angle);
  Chart c2 = make_cylinder(a, 10.0, Azimuth::arc_length);
  EXPECT_LT((c1.position(z, phi) - c2.position(z, a * phi)).norm(), 1e-13);
  TangentTensor b1 = curvature_tensor(c1, z, phi);
  TangentTensor b2 = curvature_tensor(c2, z, a * phi);
  EXPECT_LT((b1.m - b2.m).cwiseAbs().maxCoeff(), 1e-6);

  // A sheared relabelling of a sphere patch: orthonormal frames differ, so
  // compare the basis-free map on a set of tangent vectors.
  Chart s = make_sphere(2.0);
  Chart sheared(
      "sheared-sphere", Domain{{0.0, 0.9}, {1.0, 2.2}, {false, false}},
      [s](double u, double v) { return s.position(u + 0.3 * v, v); });
  TangentTensor bs = curvature_tensor(s, 0.5 + 0.3 * 1.4, 1.4);
  TangentTensor bh = curvature_tensor(sheared, 0.5, 1.4);
  for (const Vec3& y : bs.basis) EXPECT_LT((bs.apply(y) - bh.apply(y)).norm(), 1e-6);
}

TEST(Curvature, TraceIdentitiesAgainstPrincipalValues) {
  testgen::Gen gen(41);
  for (int trial = 0; trial < 200; ++trial) {
    double a = gen.uniform(-3, 3), b = gen.uniform(-3, 3), c = gen.uniform(-3, 3);
    Mat2 m;
    m << a, b, b, c;
    PrincipalDecomposition p = principal_decomposition(m);
    double a1 = p.values[0], a2 = p.values[1];
    EXPECT_GE(a1, a2);
    EXPECT_NEAR(m.trace() * m.trace(), a1 * a1 + 2 * a1 * a2 + a2 * a2, 1e-12);
    EXPECT_NEAR((m * m).trace(), a1 * a1 + a2 * a2, 1e-12);
    EXPECT_NEAR(p.components[0].dot(p.components[1]), 0.0, 1e-14);
    for (int k = 0; k < 2; ++k) {
      EXPECT_LT((m * p.components[k] - p.values[k] * p.components[k]).norm(), 1e-12);
    }
  }
}

TEST(Principal, TrivialExamples) {
  PrincipalDecomposition id = principal_decomposition(Mat2::Identity());
  EXPECT_DOUBLE_EQ(id.values[0], 1.0);
  EXPECT_DOUBLE_EQ(id.values[1], 1.0);
  Mat2 d;
  d << -1.0, 0.0, 0.0, 2.0;
  PrincipalDecomposition p = principal_decomposition(d);
  EXPECT_DOUBLE_EQ(p.values[0], 2.0);
  EXPECT_DOUBLE_EQ(p.values[1], -1.0);
}

TEST(Christoffel, PlaneAllZero) {
  Christoffels c = christoffels(make_plane(2.0, 2.0), 1.0, 1.0);
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 2; ++i)
      for (int b = 0; b < 3; ++b) EXPECT_EQ(c(a, i, b), 0.0);
}

TEST(Christoffel, CylinderArcLength) {
  const double a = 3.0;
  Christoffels c = christoffels(make_cylinder(a, 10.0, Azimuth::arc_length), 2.0, 1.7);
  EXPECT_NEAR(c(2, 1, 1), 1.0 / a, 1e-14);
  EXPECT_NEAR(c(0, 1, 1), 0.0, 1e-14);
  EXPECT_NEAR(c(1, 1, 1), 0.0, 1e-14);
  EXPECT_NEAR(c(1, 1, 2), -1.0 / a, 1e-14);
}

TEST(Christoffel, SphereEquatorClosedForm) {
  // Hand differentiation at theta = pi/2 of the (phi, theta) chart:
  //   e_phi = r(-sin, cos, 0), d_phi e_phi = -r(cos, sin, 0), n = -(cos, sin, 0)
  //   gamma^3_11 = gamma^3_22 = r, gamma^1_13 = gamma^2_23 = -1/r, others 0
  //   except gamma^1_12 = gamma^1_21 = cot(theta) = 0 at the equator.
  const double r = 2.5;
  Christoffels c = christoffels(make_sphere(r), 0.9, kPi / 2.0);
  EXPECT_NEAR(c(2, 0, 0), r, 1e-13);
  EXPECT_NEAR(c(2, 1, 1), r, 1e-13);
  EXPECT_NEAR(c(0, 0, 2), -1.0 / r, 1e-13);
  EXPECT_NEAR(c(1, 1, 2), -1.0 / r, 1e-13);
  EXPECT_NEAR(c(0, 0, 1), 0.0, 1e-13);
  EXPECT_NEAR(c(0, 1, 0), 0.0, 1e-13);
  EXPECT_NEAR(c(1, 0, 0), 0.0, 1e-13);
  EXPECT_NEAR(c(2, 0, 1), 0.0, 1e-13);
}

TEST(Christoffel, NormalUnitAndReciprocalIdentity) {
  // e_b . d_i e^a = -gamma^a_ib, checked with finite differences of the
  // reciprocal frame.
  Chart charts[] = {make_sphere(2.0), make_cylinder(3.0, 8.0),
                    Chart("saddle", Domain{{-1.0, -1.0}, {1.0, 1.0}, {false, false}},
                          [](double u, double v) { return Vec3(u, v, 0.3 * u * v + 0.1 * u * u); },
                          [](double u, double v) {
                            Jet j;
                            j.x = Vec3(u, v, 0.3 * u * v + 0.1 * u * u);
                            j.d1 = Vec3(1.0, 0.0, 0.3 * v + 0.2 * u);
                            j.d2 = Vec3(0.0, 1.0, 0.3 * u);
                            j.d11 = Vec3(0.0, 0.0, 0.2);
                            j.d12 = Vec3(0.0, 0.0, 0.3);
                            return j;
                          })};
  double x[2][2] = {{0.4, 1.2}, {0.3, -0.2}};
  for (const Chart& ch : charts) {
    for (auto& p : x) {
      double x1 = ch.domain().lo[0] + 0.5 * ch.domain().span(0) + 0.1 * p[0];
      double x2 = ch.domain().lo[1] + 0.5 * ch.domain().span(1) + 0.1 * p[1];
      Christoffels c = christoffels(ch, x1, x2);
      SurfaceFrame f = frame_at(ch, x1, x2);
      std::array<Vec3, 3> down{f.tangent[0], f.tangent[1], f.normal};
      for (int i = 0; i < 2; ++i) {
        EXPECT_NEAR(c(2, i, 2), 0.0, 1e-12);
        double h = 1e-5;
        auto plus = up_frame(ch, i == 0 ? x1 + h : x1, i == 1 ? x2 + h : x2);
        auto minus = up_frame(ch, i == 0 ? x1 - h : x1, i == 1 ? x2 - h : x2);
        for (int a = 0; a < 3; ++a) {
          Vec3 d = (plus[a] - minus[a]) / (2.0 * h);
          for (int b = 0; b < 3; ++b) EXPECT_NEAR(down[b].dot(d), -c(a, i, b), 1e-8) << ch.name();
        }
      }
    }
  }
}

TEST(FiniteDifference, AgreesWithAnalytic) {
  Chart charts[] = {make_sphere(3.0), make_cylinder(3.0, 19.0), make_cylinder(3.0, 19.0, Azimuth::arc_length)};
  testgen::Gen gen(5);
  for (const Chart& ch : charts) {
    Chart fd = ch.with_mode(DerivativeMode::finite_difference);
    const Domain& d = ch.domain();
    double scale = ch.position(d.lo[0], d.lo[1]).norm() + 1.0;
    for (int trial = 0; trial < 40; ++trial) {
      double x1 = gen.uniform(d.lo[0] + 0.01 * d.span(0), d.hi[0] - 0.01 * d.span(0));
      double x2 = gen.uniform(d.lo[1] + 0.01 * d.span(1), d.hi[1] - 0.01 * d.span(1));
      Jet ja = ch.jet(x1, x2), jf = fd.jet(x1, x2);
      EXPECT_LT(max_rel(ja.d1, jf.d1, std::max(ja.d1.norm(), 1.0)), 1e-5) << ch.name();
      EXPECT_LT(max_rel(ja.d2, jf.d2, std::max(ja.d2.norm(), 1.0)), 1e-5) << ch.name();
      EXPECT_LT(max_rel(ja.d11, jf.d11, scale), 1e-5) << ch.name();
      EXPECT_LT(max_rel(ja.d12, jf.d12, scale), 1e-5) << ch.name();
      EXPECT_LT(max_rel(ja.d22, jf.d22, scale), 1e-5) << ch.name();
      TangentTensor ba = curvature_tensor_from_jet(ja), bf = curvature_tensor_from_jet(jf);
      EXPECT_LT((ba.m - bf.m).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_FALSE(fd.reduced_accuracy(x1, x2));
    }
  }
}

TEST(FiniteDifference, OneSidedAtBoundaries) {
  Chart fd = make_cylinder(3.0, 19.0).with_mode(DerivativeMode::finite_difference);
  EXPECT_TRUE(fd.reduced_accuracy(0.0, 1.0));
  EXPECT_TRUE(fd.reduced_accuracy(19.0, 1.0));
  EXPECT_FALSE(fd.reduced_accuracy(9.0, 0.0));  // azimuth is periodic
  PrincipalDecomposition p = principal_decomposition(curvature_tensor(fd, 0.0, 0.0));
  EXPECT_NEAR(p.values[0], 1.0 / 3.0, 1e-5);
  EXPECT_NEAR(p.values[1], 0.0, 1e-5);
}

TEST(FiniteDifference, MixedPartialsSymmetric) {
  // The stencil computes d1 d2 X by nested differences; swapping the order of
  // the coordinates must give the same mixed partial.
  Chart s = make_sphere(3.0).with_mode(DerivativeMode::finite_difference);
  Chart swapped("swapped", Domain{{s.domain().lo[1], 0.0}, {s.domain().hi[1], 2.0 * kPi}, {false, true}},
                [s](double th, double ph) { return s.position(ph, th); });
  swapped = swapped.with_mode(DerivativeMode::finite_difference);
  Jet a = s.jet(1.0, 1.2), b = swapped.jet(1.2, 1.0);
  EXPECT_LT((a.d12 - b.d12).norm() / a.d12.norm(), 1e-6);
}

TEST(Chart, AnalyticModeRequiresJet) {
  Chart fd_only("fd", Domain{}, [](double u, double v) { return Vec3(u, v, u * v); });
  EXPECT_EQ(fd_only.mode(), DerivativeMode::finite_difference);
  EXPECT_THROW(fd_only.with_mode(DerivativeMode::analytic), InvalidArgument);
}

TEST(Grid, PeriodicSpacingOmitsEndpoint) {
  Grid2 g(make_cylinder(3.0, 10.0).domain(), 11, 8);
  EXPECT_DOUBLE_EQ(g.spacing(0), 1.0);
  EXPECT_DOUBLE_EQ(g.spacing(1), 2.0 * kPi / 8.0);
  EXPECT_FALSE(g.interior(0, 3));
  EXPECT_TRUE(g.interior(5, 0));
  int count = 0;
  g.for_each_neighbor(5, 0, [&](int, int nj) {
    ++count;
    EXPECT_TRUE(nj >= 0 && nj < 8);
  });
  EXPECT_EQ(count, 4);
  count = 0;
  g.for_each_neighbor(0, 3, [&](int, int) { ++count; });
  EXPECT_EQ(count, 3);
}
