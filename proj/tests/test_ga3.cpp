#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "random.hpp"
#include "shellkin/ga3.hpp"

using namespace shellkin;
using namespace shellkin::ga;

namespace {

constexpr double kPi = std::numbers::pi;

Multivector e(Blade b) { return Multivector::blade(b); }

void expect_mv_near(const Multivector& a, const Multivector& b, double tol) {
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(a[i], b[i], tol) << "blade " << i;
}

}  // namespace

TEST(GeometricProduct, BasisSquaresAndAnticommutation) {
  expect_mv_near(e(kE1) * e(kE1), Multivector::scalar(1.0), 0.0);
  expect_mv_near(e(kE1) * e(kE2), e(kE12), 0.0);
  expect_mv_near(e(kE2) * e(kE1), -e(kE12), 0.0);
  expect_mv_near(e(kE12) * e(kE12), Multivector::scalar(-1.0), 0.0);
  expect_mv_near(e(kE123) * e(kE123), Multivector::scalar(-1.0), 0.0);
}

TEST(GeometricProduct, OnePlusBivectorTimesConjugate) {
  // (1 + e12)(1 - e12) = 1 - e12 e12 = 2
  Multivector a = Multivector::scalar(1.0) + e(kE12);
  Multivector b = Multivector::scalar(1.0) - e(kE12);
  expect_mv_near(a * b, Multivector::scalar(2.0), 0.0);
}

TEST(Products, CommutatorAndInnerExamples) {
  expect_mv_near(commutator(e(kE12), e(kE13)), -e(kE23), 1e-15);
  testgen::Gen gen(7);
  Multivector m = gen.multivector();
  expect_mv_near(commutator(m, m), Multivector{}, 1e-15);
  // e3 e13 = e3 e1 e3 = -e1
  expect_mv_near(inner(e(kE3), e(kE13)), -e(kE1), 1e-15);
}

TEST(Products, CrossProductRightHanded) {
  EXPECT_TRUE(cross_product(Vec3::UnitX(), Vec3::UnitY()).isApprox(Vec3::UnitZ()));
  EXPECT_TRUE(cross_product(Vec3::UnitY(), Vec3::UnitZ()).isApprox(Vec3::UnitX()));
  Vec3 a(0.3, -1.2, 2.0);
  EXPECT_LT(cross_product(a, a).norm(), 1e-15);
  EXPECT_THROW(cross_product(e(kE12), e(kE1)), InvalidArgument);
}

TEST(Products, RandomizedAlgebraIdentities) {
  testgen::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    Multivector a = gen.multivector(), b = gen.multivector(), c = gen.multivector();
    expect_mv_near(a * (b * c), (a * b) * c, 1e-10);
    expect_mv_near(a * (b + c), a * b + a * c, 1e-10);
    expect_mv_near(a.reverse().reverse(), a, 0.0);
    Multivector sum;
    for (int k = 0; k <= 3; ++k) sum += a.grade(k);
    expect_mv_near(sum, a, 0.0);

    Vec3 u = gen.vec3(), v = gen.vec3();
    Multivector mu = Multivector::vector(u), mv = Multivector::vector(v);
    expect_mv_near(inner(mu, mv), 0.5 * (mu * mv + mv * mu), 1e-12);
    expect_mv_near(outer(mu, mv), 0.5 * (mu * mv - mv * mu), 1e-12);
    expect_mv_near(mu * mv, inner(mu, mv) + outer(mu, mv), 1e-12);
    Vec3 classical = u.cross(v);
    EXPECT_LT((cross_product(u, v) - classical).norm(), 1e-14);
  }
}

TEST(Rotor, ExpExamples) {
  Rotor one = rotor_exp({});
  EXPECT_DOUBLE_EQ(one.s, 1.0);
  EXPECT_DOUBLE_EQ(one.bivector().norm(), 0.0);

  // cos(pi/2) - e12 sin(pi/2) = -e12
  Rotor r = rotor_exp({kPi, 0.0, 0.0});
  EXPECT_NEAR(r.s, 0.0, 1e-15);
  EXPECT_NEAR(r.e12, -1.0, 1e-15);
  EXPECT_TRUE(apply_rotor(r, Vec3::UnitX()).isApprox(-Vec3::UnitX(), 1e-14));
}

TEST(Rotor, OrientationConventionTakesE1TowardE2) {
  // Hand-expanded sandwich: R e1 R~ with R = c - s e12, c = s = 1/sqrt 2
  // gives (c^2 - s^2) e1 + 2cs e2 = e2.
  Rotor r = rotor_exp({kPi / 2.0, 0.0, 0.0});
  Vec3 out = apply_rotor(r, Vec3::UnitX());
  EXPECT_NEAR(out.x(), 0.0, 1e-15);
  EXPECT_NEAR(out.y(), 1.0, 1e-15);
  EXPECT_NEAR(out.z(), 0.0, 1e-15);
  // Ahat = I3 n: right-handed rotation about n = e3.
  EXPECT_TRUE(dual_axis({1.0, 0.0, 0.0}).isApprox(Vec3::UnitZ()));
}

TEST(Rotor, LogExamples) {
  RotorLog l = rotor_log(Rotor{});
  EXPECT_EQ(l.a.norm(), 0.0);
  EXPECT_FALSE(l.degenerate);

  l = rotor_log(rotor_exp({0.0, 0.3, 0.0}));
  EXPECT_NEAR(l.a.e12, 0.0, 1e-15);
  EXPECT_NEAR(l.a.e13, 0.3, 1e-15);
  EXPECT_NEAR(l.a.e23, 0.0, 1e-15);

  // exp(7 e12) reduces to |7 - 2 pi| = 0.717 rad in the e12 sense.
  Rotor r7 = rotor_exp({7.0, 0.0, 0.0});
  l = rotor_log(r7);
  EXPECT_GE(l.a.norm(), 0.0);
  EXPECT_LE(l.a.norm(), kPi);
  EXPECT_NEAR(l.a.e12, 7.0 - 2.0 * kPi, 1e-12);
  EXPECT_TRUE(rotation_matrix(rotor_exp(l.a)).isApprox(rotation_matrix(r7), 1e-12));
}

TEST(Rotor, LogAtPiIsFlaggedDegenerate) {
  RotorLog l = rotor_log(rotor_exp({0.0, 0.0, kPi}));
  EXPECT_TRUE(l.degenerate);
  EXPECT_NEAR(l.a.norm(), kPi, 1e-12);
  EXPECT_TRUE(rotation_matrix(rotor_exp(l.a)).isApprox(rotation_matrix(rotor_exp({0.0, 0.0, kPi})), 1e-12));
}

TEST(Rotor, ApplyExamples) {
  testgen::Gen gen(3);
  Vec3 x = gen.vec3();
  EXPECT_TRUE(apply_rotor(Rotor{}, x).isApprox(x));
  EXPECT_EQ(apply_rotor(gen.rotor(), Vec3::Zero()).norm(), 0.0);
}

TEST(Rotor, RandomizedProperties) {
  testgen::Gen gen(19);
  for (int trial = 0; trial < 500; ++trial) {
    Rotor r1 = gen.rotor(), r2 = gen.rotor();
    Vec3 x = gen.vec3(5.0), y = gen.vec3(5.0);
    double a = gen.uniform(-2, 2);

    EXPECT_NEAR((r1 * r1.reverse()).s, 1.0, 1e-12);
    EXPECT_NEAR(apply_rotor(r1, x).norm(), x.norm(), 1e-12);
    EXPECT_LT((apply_rotor(r1, a * x + y) - (a * apply_rotor(r1, x) + apply_rotor(r1, y))).norm(), 1e-12);
    EXPECT_LT((apply_rotor(r2, apply_rotor(r1, x)) - apply_rotor(r2 * r1, x)).norm(), 1e-12);

    // exp(log(R)) reproduces the rotation (sign of R is irrelevant)
    RotorLog l = rotor_log(r1);
    EXPECT_LE(l.a.norm(), kPi + 1e-12);
    EXPECT_LT((rotation_matrix(rotor_exp(l.a)) - rotation_matrix(r1)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((rotation_matrix(rotor_exp(l.a)) - rotation_matrix(-r1)).cwiseAbs().maxCoeff(), 1e-10);

    // Rotors commute with the pseudoscalar.
    Multivector rm = r1.multivector();
    EXPECT_LT((rm * kPseudoscalar - kPseudoscalar * rm).norm(), 1e-14);

    // Matrix -> rotor -> matrix
    Eigen::Matrix3d m = rotation_matrix(r1);
    EXPECT_NEAR(m.determinant(), 1.0, 1e-12);
    EXPECT_TRUE(rotation_matrix(rotor_from_matrix(m)).isApprox(m, 1e-12));
  }
}

TEST(Rotor, UnitBivectorSquaresToMinusOne) {
  testgen::Gen gen(5);
  Bivector b = gen.bivector();
  b *= 1.0 / b.norm();
  Multivector sq = b.multivector() * b.multivector();
  expect_mv_near(sq, Multivector::scalar(-1.0), 1e-14);
}

TEST(Rotor, FromMatrixNearHalfTurn) {
  for (double eps : {0.0, 1e-9, 1e-6}) {
    Rotor r = rotor_exp(Bivector{0.2, -0.5, 0.8} * ((kPi - eps) / Bivector{0.2, -0.5, 0.8}.norm()));
    Eigen::Matrix3d m = rotation_matrix(r);
    EXPECT_TRUE(rotation_matrix(rotor_from_matrix(m)).isApprox(m, 1e-12));
  }
}

TEST(Rotor, DexpMatchesFiniteDifferenceOfRotor) {
  // -2 (dR) R~ computed from rotor components is the independent check.
  testgen::Gen gen(23);
  for (int trial = 0; trial < 50; ++trial) {
    Bivector a = gen.bivector(1.5), da = gen.bivector(1.0);
    double h = 1e-6;
    Rotor rp = rotor_exp(a + h * da), rm = rotor_exp(a - h * da), r = rotor_exp(a);
    Multivector dr = (rp.multivector() - rm.multivector()) * (1.0 / (2.0 * h));
    Bivector fd = Bivector::from(-2.0 * (dr * r.reverse().multivector()));
    Bivector series = bivector_dexp(a, da);
    EXPECT_LT((fd - series).norm(), 1e-8);
  }
  // Commuting planes: no correction.
  Bivector a{0.7, 0.0, 0.0}, da{0.2, 0.0, 0.0};
  EXPECT_LT((bivector_dexp(a, da) - da).norm(), 1e-15);
}

TEST(Rotor, ReverseDerivativeIdentity) {
  // d(R~) = -R~ (dR) R~ along a smooth rotor curve.
  testgen::Gen gen(29);
  Bivector a0 = gen.bivector(), a1 = gen.bivector();
  auto curve = [&](double t) { return rotor_exp(a0 + t * a1); };
  double h = 1e-5;
  Multivector dr = (curve(h).multivector() - curve(-h).multivector()) * (0.5 / h);
  Multivector drrev = (curve(h).reverse().multivector() - curve(-h).reverse().multivector()) * (0.5 / h);
  Multivector rrev = curve(0.0).reverse().multivector();
  expect_mv_near(drrev, -(rrev * dr * rrev), 1e-9);
}
