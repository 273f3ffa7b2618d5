#pragma once

// Closed-form deformations used for verification and as built-in scenarios.

#include <cmath>
#include <complex>
#include <numbers>

#include "shellkin/kinematics.hpp"
#include "shellkin/surface.hpp"

namespace shellkin::models {

/// Sphere inflated from radius r0 to r1 over the same (phi, theta) patch.
/// H = ((r1 - r0) / r0^2) G, rotor identically 1.
inline Deformation sphere_inflate(double r0, double r1, double theta_lo = 0.25 * std::numbers::pi,
                                  double theta_hi = 0.75 * std::numbers::pi) {
  return {make_sphere(r0, theta_lo, theta_hi), make_sphere(r1, theta_lo, theta_hi)};
}

/// Flat lu x lv plate rolled isometrically about an axis parallel to y onto a
/// cylinder of radius rho:
///   (u, v, 0) -> (rho sin(u/rho), v, rho (1 - cos(u/rho)))
/// H has principal values {1/rho, 0}; the rotation angle is u/rho about -y.
inline Deformation plate_roll(double lu, double lv, double rho) {
  if (!(rho > 0.0)) throw InvalidArgument("plate_roll: radius must be positive");
  Chart plane = make_plane(lu, lv);
  auto pos = [rho](double u, double v) {
    double t = u / rho;
    return Vec3(rho * std::sin(t), v, rho * (1.0 - std::cos(t)));
  };
  auto jet = [rho](double u, double v) {
    double t = u / rho, c = std::cos(t), s = std::sin(t);
    Jet j;
    j.x = Vec3(rho * s, v, rho * (1.0 - c));
    j.d1 = Vec3(c, 0.0, s);
    j.d2 = Vec3::UnitY();
    j.d11 = Vec3(-s, 0.0, c) / rho;
    return j;
  };
  return {plane, Chart("rolled-plate", plane.domain(), pos, jet)};
}

/// Uniform stretch of a plate by lambda along x.
inline Deformation plate_stretch(double lu, double lv, double lambda) {
  Chart plane = make_plane(lu, lv);
  auto pos = [lambda](double u, double v) { return Vec3(lambda * u, v, 0.0); };
  auto jet = [lambda](double u, double v) {
    Jet j;
    j.x = Vec3(lambda * u, v, 0.0);
    j.d1 = Vec3(lambda, 0.0, 0.0);
    j.d2 = Vec3::UnitY();
    return j;
  };
  return {plane, Chart("stretched-plate", plane.domain(), pos, jet)};
}

/// Pre-stretched tube collapsing into a two-lobe section.
///
/// The reference is a cylinder of radius a and length l0 with axis along x.
/// The spatial tube is stretched uniformly to length l; its cross-section at
/// axial coordinate z keeps the reference circumference (the wall is
/// inextensible azimuthally) and has curvature
///   k(phi) = (1 + beta s(z) cos 2 phi) / a,    s(z) = sin(pi z / l0),
/// so the clamped ends stay circular and the section flattens toward the
/// middle. The tangent turns by phi + (beta s / 2) sin 2 phi, a rotation of
/// up to beta/2 relative to the circle. The section profile is
///   P(b, phi) = a sum_n J_n(b) exp(i (2n + 1) phi) / (2n + 1),  b = beta s / 2.
/// `collapse` is the fractional reduction of the minor half-width at z = l0/2.
struct TubeSquash {
  double a = 3.0;
  double l0 = 19.0;
  double l = 25.0;
  double collapse = 0.7;

  double lambda() const { return l / l0; }
};

namespace detail {

inline constexpr int kBesselTerms = 24;

// J_n for negative orders via J_{-n} = (-1)^n J_n.
inline double bessel_j(int n, double x) {
  double v = std::cyl_bessel_j(static_cast<double>(std::abs(n)), x);
  return (n < 0 && (n % 2) != 0) ? -v : v;
}

// Minor half-width of the section divided by a, as a function of b.
inline double section_half_width(double b) {
  double w = 0.0;
  for (int n = -kBesselTerms; n <= kBesselTerms; ++n) {
    w += bessel_j(n, b) * ((n % 2 == 0) ? 1.0 : -1.0) / (2 * n + 1);
  }
  return w;
}

// beta giving the requested collapse at the mid-section, by bisection on the
// monotone half-width.
inline double collapse_amplitude(double collapse) {
  double lo = 0.0, hi = 2.5;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (1.0 - section_half_width(0.5 * mid) < collapse ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline Deformation tube_squash(const TubeSquash& p) {
  if (!(p.a > 0.0 && p.l0 > 0.0 && p.l > 0.0)) throw InvalidArgument("tube_squash: lengths must be positive");
  if (!(p.collapse >= 0.0 && p.collapse <= 0.9)) {
    throw InvalidArgument("tube_squash: collapse fraction must lie in [0, 0.9]");
  }
  Chart ref = make_cylinder(p.a, p.l0);
  const double a = p.a, lam = p.lambda(), w = std::numbers::pi / p.l0;
  const double half_beta = 0.5 * detail::collapse_amplitude(p.collapse);
  auto jet = [=](double z, double phi) {
    using C = std::complex<double>;
    const C i(0.0, 1.0);
    double b = half_beta * std::sin(w * z);
    double b1 = half_beta * w * std::cos(w * z);
    double b2 = -w * w * b;
    C pos, p_b, p_bb, p_f, p_ff, p_bf;
    for (int n = -detail::kBesselTerms; n <= detail::kBesselTerms; ++n) {
      double m = 2 * n + 1;
      double j0 = detail::bessel_j(n, b);
      double j1 = 0.5 * (detail::bessel_j(n - 1, b) - detail::bessel_j(n + 1, b));
      double j2 = 0.25 * (detail::bessel_j(n - 2, b) - 2.0 * j0 + detail::bessel_j(n + 2, b));
      C e = std::exp(i * (m * phi));
      pos += j0 * e / m;
      p_b += j1 * e / m;
      p_bb += j2 * e / m;
      p_f += i * j0 * e;
      p_ff += -m * j0 * e;
      p_bf += i * j1 * e;
    }
    auto vec = [a](double x, C c) { return Vec3(x, a * c.real(), a * c.imag()); };
    Jet j;
    j.x = vec(lam * z, pos);
    j.d1 = vec(lam, b1 * p_b);
    j.d2 = vec(0.0, p_f);
    j.d11 = vec(0.0, b2 * p_b + b1 * b1 * p_bb);
    j.d12 = vec(0.0, b1 * p_bf);
    j.d22 = vec(0.0, p_ff);
    return j;
  };
  return {ref, Chart("collapsed-tube", ref.domain(), [jet](double z, double phi) { return jet(z, phi).x; }, jet)};
}

/// Oscillating collapse: collapse(t) = collapse0 + amplitude sin(2 pi f t).
struct TubeSquashMotion {
  TubeSquash base;
  double amplitude = 0.1;
  double frequency = 1.0;  // Hz

  TubeSquash at(double t) const {
    TubeSquash p = base;
    p.collapse = base.collapse + amplitude * std::sin(2.0 * std::numbers::pi * frequency * t);
    return p;
  }
};

}  // namespace shellkin::models
