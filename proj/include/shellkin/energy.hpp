#pragma once

// Koiter shell energy densities, trace invariants, and closed-form scaling
// estimates for a pre-stretched, squashed tube. Units: mm, N/mm^2 (MPa), N/mm.

#include <cmath>
#include <numbers>

#include "shellkin/error.hpp"
#include "shellkin/surface.hpp"

namespace shellkin {

struct Material {
  double youngs = 1.0;     // E [N/mm^2]
  double poisson = 0.5;    // nu [-]
  double thickness = 0.3;  // h [mm]

  void validate() const {
    if (!(youngs > 0.0)) throw InvalidArgument("material: Young's modulus must be positive");
    if (!(thickness > 0.0)) throw InvalidArgument("material: thickness must be positive");
    if (!(poisson > -1.0 && poisson <= 0.5 + 1e-12)) {
      throw InvalidArgument("material: Poisson ratio must lie in (-1, 0.5]");
    }
  }
};

/// Energy per unit reference area [N/mm].
struct EnergyDensity {
  double stretching = 0.0;
  double bending = 0.0;
};

struct TraceInvariants {
  double tr_sq = 0.0;  // tr(T^2)
  double sq_tr = 0.0;  // tr(T)^2
};

inline TraceInvariants trace_invariants(const Mat2& t) {
  double tr = t.trace();
  return {t(0, 0) * t(0, 0) + t(0, 1) * t(1, 0) + t(1, 0) * t(0, 1) + t(1, 1) * t(1, 1), tr * tr};
}

inline TraceInvariants trace_invariants_from_eigenvalues(double a1, double a2) {
  return {a1 * a1 + a2 * a2, a1 * a1 + 2.0 * a1 * a2 + a2 * a2};
}

inline EnergyDensity koiter_density(const TraceInvariants& e, const TraceInvariants& h, const Material& m) {
  double nu = m.poisson;
  double denom = 1.0 - nu * nu;
  if (denom == 0.0) throw InvalidArgument("koiter_density: Poisson ratio of magnitude 1");
  EnergyDensity out;
  out.stretching = m.youngs * m.thickness / (2.0 * denom) * ((1.0 - nu) * e.tr_sq + nu * e.sq_tr);
  out.bending = m.youngs * std::pow(m.thickness, 3) / (24.0 * denom) * ((1.0 - nu) * h.tr_sq + nu * h.sq_tr);
  return out;
}

/// Strain E (dimensionless) and change of curvature H [1/mm], both in the
/// reference orthonormal frame.
inline EnergyDensity koiter_density(const Mat2& strain, const Mat2& h, const Material& m) {
  return koiter_density(trace_invariants(strain), trace_invariants(h), m);
}

/// Rounds to one significant figure, the precision of an order-of-magnitude
/// estimate.
inline double one_significant_figure(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  double p = std::pow(10.0, std::floor(std::log10(std::abs(x))));
  return std::round(x / p) * p;
}

struct ScalingParams {
  double a = 3.0;    // tube radius [mm]
  double l0 = 19.0;  // unstrained length [mm]
  double l = 25.0;   // strained length [mm]
  Material material;

  double lambda() const { return l / l0; }

  void validate() const {
    if (!(a > 0.0 && l0 > 0.0 && l > 0.0)) throw InvalidArgument("scaling: lengths must be positive");
    material.validate();
  }
};

struct ScalingReport {
  double lambda = 1.0;
  // Rotation components and their gradients.
  double theta1 = 0.0;    // a / (l0/2)
  double d1theta1 = 0.0;  // 4a / l0^2
  double d1theta2 = 0.0;  // pi / (2 l0), equal to d2theta1
  double d2theta2 = 0.0;  // 1 / a
  Mat2 h_estimate = Mat2::Zero();
  bool small_angle_exceeded = false;  // theta1 > tan(30 deg)
  // Trace estimates.
  TraceInvariants strain;     // (lambda^2 - 1)^2 / 4 for both
  TraceInvariants curvature;  // (1/a)^2 for both
  // Energies straight from the estimated traces.
  EnergyDensity raw;
  // Energies from the traces rounded to one significant figure.
  TraceInvariants strain_magnitude;
  TraceInvariants curvature_magnitude;
  EnergyDensity magnitude;

  double ratio() const { return magnitude.stretching / magnitude.bending; }
  double raw_ratio() const { return raw.stretching / raw.bending; }
  double bend_to_stretch() const { return magnitude.bending / magnitude.stretching; }
};

inline ScalingReport scaling_estimates(const ScalingParams& p) {
  p.validate();
  ScalingReport r;
  r.lambda = p.lambda();
  r.theta1 = p.a / (0.5 * p.l0);
  r.d1theta1 = 4.0 * p.a / (p.l0 * p.l0);
  r.d1theta2 = std::numbers::pi / (2.0 * p.l0);
  r.d2theta2 = 1.0 / p.a;
  r.h_estimate << r.d1theta1, r.d1theta2, r.d1theta2, r.d2theta2;
  r.small_angle_exceeded = r.theta1 > std::tan(std::numbers::pi / 6.0);

  double e = 0.25 * std::pow(r.lambda * r.lambda - 1.0, 2);
  double h = 1.0 / (p.a * p.a);
  r.strain = {e, e};
  r.curvature = {h, h};
  r.raw = koiter_density(r.strain, r.curvature, p.material);

  double em = one_significant_figure(e);
  double hm = one_significant_figure(h);
  r.strain_magnitude = {em, em};
  r.curvature_magnitude = {hm, hm};
  r.magnitude = koiter_density(r.strain_magnitude, r.curvature_magnitude, p.material);
  return r;
}

}  // namespace shellkin
