#pragma once

// Deformation of a shell between a reference and a spatial chart sharing
// convected coordinates: deformation gradient, polar decomposition, strain,
// rotor and rotation-bivector fields, and the change-of-curvature tensor
// computed both from the two curvature tensors and from the rotor field.

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "shellkin/error.hpp"
#include "shellkin/ga3.hpp"
#include "shellkin/surface.hpp"

namespace shellkin {

using ga::Bivector;
using ga::Rotor;

/// A reference chart B and a spatial chart S over the same coordinates.
class Deformation {
 public:
  Deformation(Chart reference, Chart spatial)
      : reference_(std::move(reference)), spatial_(std::move(spatial)) {
    const Domain& a = reference_.domain();
    const Domain& b = spatial_.domain();
    for (int k = 0; k < 2; ++k) {
      double tol = 1e-12 * a.span(k);
      if (std::abs(a.lo[k] - b.lo[k]) > tol || std::abs(a.hi[k] - b.hi[k]) > tol ||
          a.periodic[k] != b.periodic[k]) {
        throw InvalidArgument("Deformation: reference and spatial charts must share a coordinate domain");
      }
    }
  }

  const Chart& reference() const { return reference_; }
  const Chart& spatial() const { return spatial_; }
  const Domain& domain() const { return reference_.domain(); }

  Deformation with_mode(DerivativeMode mode, double step_fraction = kDefaultFdStep) const {
    return {reference_.with_mode(mode, step_fraction), spatial_.with_mode(mode, step_fraction)};
  }

 private:
  Chart reference_;
  Chart spatial_;
};

/// Tangent map F from the reference tangent plane to the spatial one, stored
/// as the images of the reference orthonormal pair.
struct TangentMap {
  std::array<Vec3, 2> basis{Vec3::UnitX(), Vec3::UnitY()};  // t_a
  Vec3 reference_normal = Vec3::UnitZ();
  std::array<Vec3, 2> image{Vec3::UnitX(), Vec3::UnitY()};  // F(t_a)
  Vec3 spatial_normal = Vec3::UnitZ();

  /// F(Y) for a reference tangent vector Y.
  Vec3 apply(const Vec3& y) const { return y.dot(basis[0]) * image[0] + y.dot(basis[1]) * image[1]; }

  /// Adjoint F-bar(v), a reference tangent vector: F-bar(v) . Y = v . F(Y).
  Vec3 adjoint(const Vec3& v) const { return v.dot(image[0]) * basis[0] + v.dot(image[1]) * basis[1]; }
  Vec2 adjoint_components(const Vec3& v) const { return {v.dot(image[0]), v.dot(image[1])}; }

  /// C = F-bar F in the reference orthonormal frame.
  Mat2 right_cauchy_green() const {
    Mat2 c;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) c(a, b) = image[a].dot(image[b]);
    }
    return c;
  }

  /// Build from explicit images; the spatial normal defaults to unit(F t1 x F t2).
  static TangentMap from_images(const std::array<Vec3, 2>& basis, const Vec3& ref_normal,
                                const std::array<Vec3, 2>& image) {
    return {basis, ref_normal, image, image[0].cross(image[1]).normalized()};
  }
};

/// With convected coordinates F(E_i) = e_i, so F(t_a) = sum_i (t_a . E^i) e_i.
inline TangentMap deformation_gradient(const SurfaceFrame& ref, const SurfaceFrame& spa) {
  TangentMap f;
  f.basis = ref.ortho;
  f.reference_normal = ref.normal;
  f.spatial_normal = spa.normal;
  for (int a = 0; a < 2; ++a) {
    f.image[a] = ref.ortho[a].dot(ref.reciprocal[0]) * spa.tangent[0] +
                 ref.ortho[a].dot(ref.reciprocal[1]) * spa.tangent[1];
  }
  return f;
}

inline TangentMap deformation_gradient(const Deformation& def, double x1, double x2) {
  return deformation_gradient(frame_at(def.reference(), x1, x2), frame_at(def.spatial(), x1, x2));
}

struct PolarDecomposition {
  Rotor rotor;
  Mat2 stretch = Mat2::Identity();  // U, reference orthonormal frame
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

/// F = R U with U = sqrt(F-bar F). The rotation carries (t1, t2, N) onto
/// (F U^-1 t1, F U^-1 t2, n).
inline PolarDecomposition polar_decompose(const TangentMap& f) {
  Mat2 c = f.right_cauchy_green();
  Vec3 cross = f.image[0].cross(f.image[1]);
  if (!(c.determinant() > 1e-24) || !(cross.dot(f.spatial_normal) > 0.0)) {
    throw OrientationReversal("polar_decompose: deformation gradient is singular or orientation-reversing");
  }
  PrincipalDecomposition p = principal_decomposition(c);
  Mat2 u = Mat2::Zero(), u_inv = Mat2::Zero();
  for (int k = 0; k < 2; ++k) {
    double lam = std::sqrt(p.values[k]);
    Mat2 proj = p.components[k] * p.components[k].transpose();
    u += lam * proj;
    u_inv += proj / lam;
  }
  Eigen::Matrix3d target, source;
  for (int a = 0; a < 2; ++a) {
    target.col(a) = u_inv(0, a) * f.image[0] + u_inv(1, a) * f.image[1];
    source.col(a) = f.basis[a];
  }
  target.col(2) = target.col(0).cross(target.col(1));
  source.col(2) = f.reference_normal;
  PolarDecomposition out;
  out.stretch = 0.5 * (u + u.transpose());
  out.rotation = target * source.transpose();
  out.rotor = ga::rotor_from_matrix(out.rotation);
  return out;
}

/// E = (F-bar F - G) / 2 in the reference orthonormal frame.
inline Mat2 strain(const TangentMap& f) { return 0.5 * (f.right_cauchy_green() - Mat2::Identity()); }

/// H = F-bar b F - B from the two second fundamental forms, in the reference
/// orthonormal frame.
inline Mat2 curvature_change_classical(const Jet& ref, const Jet& spa) {
  SurfaceFrame fr = frame_from_jet(ref);
  SurfaceFrame fs = frame_from_jet(spa);
  Mat2 p = fr.coord_to_ortho();
  Mat2 h = second_fundamental_form(spa, fs) - second_fundamental_form(ref, fr);
  return p.transpose() * h * p;
}

inline Mat2 curvature_change_classical(const Deformation& def, double x1, double x2) {
  return curvature_change_classical(def.reference().jet(x1, x2), def.spatial().jet(x1, x2));
}

// ---------------------------------------------------------------------------
// Rotor and bivector fields

/// How the rotation term converts derivatives of A into -2 (Y.dR) R~.
enum class RotorRoute {
  exact,        // full derivative of the exponential map
  first_order,  // Y.dR = -(Y.dA) R / 2, exact only when dA commutes with A
};

struct KinematicOptions {
  RotorRoute route = RotorRoute::exact;
  double fd_step = kDefaultFdStep;       // fraction of the coordinate span
  double smallangle_threshold = 0.05;    // tolerated normal-axis share of |A|
  double ambiguity_tolerance = 1e-3;     // minimum |<R1 R2~>| between neighbours
};

inline Rotor rotor_at(const Deformation& def, double x1, double x2) {
  return polar_decompose(deformation_gradient(def, x1, x2)).rotor;
}

/// Flip r onto the sign sheet of hint; throws when the relative rotation is
/// too close to a half turn to decide.
inline Rotor align_sign(const Rotor& r, const Rotor& hint, double tolerance) {
  double c = ga::rotor_alignment(r, hint);
  if (std::abs(c) < tolerance) {
    throw BranchAmbiguity("rotor continuation is ambiguous (relative rotation near pi)");
  }
  return c < 0.0 ? -r : r;
}

struct RotorField {
  Grid2 grid;
  std::vector<Rotor> rotors;
  std::vector<bool> ambiguous;
  std::size_t seed = 0;
};

/// Polar rotors on a grid, sign-continuized by a breadth-first sweep seeded at
/// the point with the smallest rotation angle.
inline RotorField rotor_field(const Deformation& def, const Grid2& grid,
                              const KinematicOptions& opts = {}) {
  RotorField field{grid, std::vector<Rotor>(grid.size()), std::vector<bool>(grid.size(), false), 0};
  double best = -1.0;
  for (int i = 0; i < grid.n1(); ++i) {
    for (int j = 0; j < grid.n2(); ++j) {
      Vec2 x = grid.coords(i, j);
      Rotor r = rotor_at(def, x.x(), x.y());
      std::size_t k = grid.index(i, j);
      field.rotors[k] = r;
      if (std::abs(r.s) > best) {
        best = std::abs(r.s);
        field.seed = k;
      }
    }
  }
  if (field.rotors[field.seed].s < 0.0) field.rotors[field.seed] = -field.rotors[field.seed];

  std::vector<bool> done(grid.size(), false);
  std::deque<std::pair<int, int>> queue;
  int si = static_cast<int>(field.seed / grid.n2()), sj = static_cast<int>(field.seed % grid.n2());
  queue.emplace_back(si, sj);
  done[field.seed] = true;
  while (!queue.empty()) {
    auto [i, j] = queue.front();
    queue.pop_front();
    const Rotor& here = field.rotors[grid.index(i, j)];
    grid.for_each_neighbor(i, j, [&](int ni, int nj) {
      std::size_t k = grid.index(ni, nj);
      double c = ga::rotor_alignment(field.rotors[k], here);
      if (std::abs(c) < opts.ambiguity_tolerance) {
        field.ambiguous[k] = true;
        field.ambiguous[grid.index(i, j)] = true;
      }
      if (done[k]) return;
      if (c < 0.0) field.rotors[k] = -field.rotors[k];
      done[k] = true;
      queue.emplace_back(ni, nj);
    });
  }
  return field;
}

struct BivectorField {
  Grid2 grid;
  std::vector<Bivector> a;
  std::vector<bool> ambiguous;
};

/// A with R = exp(-A/2), taken on each rotor's own sign sheet so that A is
/// continuous wherever the rotor field is. Points where R is close to -1 (the
/// plane of A is undefined there) are flagged.
inline BivectorField bivector_field_A(const RotorField& rotors) {
  BivectorField out{rotors.grid, std::vector<Bivector>(rotors.rotors.size()), rotors.ambiguous};
  for (std::size_t k = 0; k < rotors.rotors.size(); ++k) {
    const Rotor& r = rotors.rotors[k];
    out.a[k] = ga::rotor_log_unwrapped(r);
    if (r.s < -1.0 + 1e-9) out.ambiguous[k] = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotor route for H

struct RotorRouteTerms {
  Mat2 strain_term = Mat2::Zero();    // (U - G) B
  Mat2 rotation_term = Mat2::Zero();  // F-bar(e3 . Omega(Y)), subtracted
  Mat2 h = Mat2::Zero();
  Bivector a;                         // rotation bivector at the point
  std::array<Bivector, 2> da;         // dA/dX^i
  bool reduced_accuracy = false;
};

namespace detail {

// Rotor at a stencil point with its sign aligned to the centre rotor.
struct StencilSample {
  Rotor rotor;
  Bivector a;
};

template <class Sample>
std::array<decltype(std::declval<Sample>()(0.0, 0.0)), 2> stencil_derivatives(
    const Domain& dom, double x1, double x2, double step, Sample&& sample, bool& one_sided) {
  using T = decltype(sample(0.0, 0.0));
  std::array<T, 2> d{};
  double x[2] = {x1, x2};
  for (int i = 0; i < 2; ++i) {
    double h = step * dom.span(i);
    Stencil s = choose_stencil(dom, i, x[i], h);
    one_sided = one_sided || s.one_sided;
    T acc{};
    if constexpr (std::is_base_of_v<Eigen::MatrixBase<T>, T>) acc = T::Zero();
    for (int k = 0; k < s.n; ++k) {
      if (s.w1[k] == 0.0) continue;
      double y[2] = {x1, x2};
      y[i] += s.off[k] * h;
      acc += s.w1[k] * sample(y[0], y[1]);
    }
    d[i] = (1.0 / h) * acc;
  }
  return d;
}

}  // namespace detail

/// H(Y) = (U - G) B(Y) - F-bar(e3 . Omega_Y) with Omega_Y = -2 (Y.dR) R~ and
/// derivatives of A taken by finite differences on a stencil around the
/// point. sign_hint fixes the sign sheet of the centre rotor (from a grid
/// field); without it the rotor with non-negative scalar part is used.
inline RotorRouteTerms curvature_change_rotor(const Deformation& def, double x1, double x2,
                                              const KinematicOptions& opts = {},
                                              const std::optional<Rotor>& sign_hint = std::nullopt) {
  Jet jr = def.reference().jet(x1, x2);
  Jet js = def.spatial().jet(x1, x2);
  SurfaceFrame fr = frame_from_jet(jr);
  SurfaceFrame fs = frame_from_jet(js);
  TangentMap f = deformation_gradient(fr, fs);
  PolarDecomposition pd = polar_decompose(f);
  Rotor r0 = pd.rotor;
  if (sign_hint) {
    r0 = align_sign(r0, *sign_hint, opts.ambiguity_tolerance);
  } else if (r0.s < 0.0) {
    r0 = -r0;
  }

  RotorRouteTerms out;
  out.a = ga::rotor_log_unwrapped(r0);
  auto sample = [&](double y1, double y2) {
    Rotor r = align_sign(rotor_at(def, y1, y2), r0, opts.ambiguity_tolerance);
    return ga::rotor_log_unwrapped(r);
  };
  out.da = detail::stencil_derivatives(def.domain(), x1, x2, opts.fd_step, sample, out.reduced_accuracy);

  std::array<Bivector, 2> omega_i;
  for (int i = 0; i < 2; ++i) {
    omega_i[i] = opts.route == RotorRoute::exact ? ga::bivector_dexp(out.a, out.da[i]) : out.da[i];
  }

  Mat2 b = fr.coord_to_ortho().transpose() * second_fundamental_form(jr, fr) * fr.coord_to_ortho();
  Vec3 e3 = ga::apply_rotor(r0, fr.normal);
  Mat2 p = fr.coord_to_ortho();
  for (int a = 0; a < 2; ++a) {
    // Omega along t_a: t_a . d = sum_i (t_a . E^i) d_i
    Bivector omega = p(0, a) * omega_i[0] + p(1, a) * omega_i[1];
    out.rotation_term.col(a) = f.adjoint_components(ga::inner(e3, omega));
  }
  out.strain_term = (pd.stretch - Mat2::Identity()) * b;
  out.h = out.strain_term - out.rotation_term;
  return out;
}

// ---------------------------------------------------------------------------
// Small-angle components

struct SmallAngleComponents {
  Mat2 h = Mat2::Zero();       // H_ij, coordinate components
  Mat2 h_ortho = Mat2::Zero(); // the same in the reference orthonormal frame
  Vec2 theta = Vec2::Zero();   // A = theta_i e^i ^ e3
  double symmetry_defect = 0.0;
  double residual_fraction = 0.0;  // normal-axis share of |A|
};

namespace detail {

inline Vec2 theta_components(const Bivector& a, const SurfaceFrame& spa) {
  Vec3 w = ga::inner(spa.normal, a);  // e3 . A = -theta_i e^i
  return {-w.dot(spa.tangent[0]), -w.dot(spa.tangent[1])};
}

inline double normal_axis_fraction(const Bivector& a, const Vec3& normal) {
  double n = a.norm();
  return n < 1e-12 ? 0.0 : std::abs(ga::dual_axis(a).dot(normal)) / n;
}

}  // namespace detail

/// H_ij = d_j theta_i - theta_k gamma^k_ji for a rotation bivector dominated
/// by its e^i ^ e3 parts. Throws AssumptionViolated when the rotation about
/// the normal exceeds the configured share of |A|.
inline SmallAngleComponents h_components_smallangle(const Deformation& def, double x1, double x2,
                                                    const KinematicOptions& opts = {},
                                                    const std::optional<Rotor>& sign_hint = std::nullopt) {
  Jet js = def.spatial().jet(x1, x2);
  SurfaceFrame fs = frame_from_jet(js);
  Rotor r0 = rotor_at(def, x1, x2);
  if (sign_hint) {
    r0 = align_sign(r0, *sign_hint, opts.ambiguity_tolerance);
  } else if (r0.s < 0.0) {
    r0 = -r0;
  }
  Bivector a0 = ga::rotor_log_unwrapped(r0);

  SmallAngleComponents out;
  out.residual_fraction = detail::normal_axis_fraction(a0, fs.normal);
  if (out.residual_fraction > opts.smallangle_threshold) {
    throw AssumptionViolated("small-angle components: rotation about the normal is " +
                             std::to_string(100.0 * out.residual_fraction) + "% of |A|");
  }
  out.theta = detail::theta_components(a0, fs);

  auto sample = [&](double y1, double y2) {
    Rotor r = align_sign(rotor_at(def, y1, y2), r0, opts.ambiguity_tolerance);
    return detail::theta_components(ga::rotor_log_unwrapped(r), frame_at(def.spatial(), y1, y2));
  };
  bool one_sided = false;
  auto dtheta = detail::stencil_derivatives(def.domain(), x1, x2, opts.fd_step, sample, one_sided);

  Christoffels g = christoffels_from_jet(js);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double v = dtheta[j][i];
      for (int k = 0; k < 2; ++k) v -= out.theta[k] * g(k, j, i);
      out.h(i, j) = v;
    }
  }
  out.symmetry_defect = std::abs(dtheta[0][1] - dtheta[1][0]);
  Mat2 p = frame_at(def.reference(), x1, x2).coord_to_ortho();
  out.h_ortho = p.transpose() * out.h * p;
  return out;
}

// ---------------------------------------------------------------------------
// Per-point bundle

struct KinematicState {
  Vec2 coords = Vec2::Zero();
  SurfaceFrame reference;
  SurfaceFrame spatial;
  TangentMap f;
  Rotor rotor;
  Bivector a;
  Mat2 stretch = Mat2::Identity();  // U
  Mat2 strain = Mat2::Zero();       // E
  TangentTensor b_reference;        // B, reference orthonormal frame
  TangentTensor b_spatial;          // b, spatial orthonormal frame
  Mat2 h_classical = Mat2::Zero();
  RotorRouteTerms h_rotor;
  bool branch_ambiguous = false;
  bool reduced_accuracy = false;
};

inline KinematicState kinematic_state(const Deformation& def, double x1, double x2,
                                      const KinematicOptions& opts = {},
                                      const std::optional<Rotor>& sign_hint = std::nullopt) {
  KinematicState s;
  s.coords = Vec2(x1, x2);
  Jet jr = def.reference().jet(x1, x2);
  Jet js = def.spatial().jet(x1, x2);
  s.reference = frame_from_jet(jr);
  s.spatial = frame_from_jet(js);
  s.f = deformation_gradient(s.reference, s.spatial);
  PolarDecomposition pd = polar_decompose(s.f);
  s.rotor = pd.rotor;
  s.stretch = pd.stretch;
  s.strain = strain(s.f);
  s.b_reference = curvature_tensor_from_jet(jr);
  s.b_spatial = curvature_tensor_from_jet(js);
  s.h_classical = curvature_change_classical(jr, js);
  s.reduced_accuracy = def.reference().reduced_accuracy(x1, x2) || def.spatial().reduced_accuracy(x1, x2);
  try {
    if (sign_hint) s.rotor = align_sign(s.rotor, *sign_hint, opts.ambiguity_tolerance);
    else if (s.rotor.s < 0.0) s.rotor = -s.rotor;
    s.h_rotor = curvature_change_rotor(def, x1, x2, opts, s.rotor);
    s.a = s.h_rotor.a;
    s.reduced_accuracy = s.reduced_accuracy || s.h_rotor.reduced_accuracy;
  } catch (const BranchAmbiguity&) {
    s.branch_ambiguous = true;
    s.a = ga::rotor_log_unwrapped(s.rotor);
  }
  return s;
}

/// Kinematic states on every grid point, with rotor signs continuized over
/// the grid first.
inline std::vector<KinematicState> evaluate_grid(const Deformation& def, const Grid2& grid,
                                                 const KinematicOptions& opts = {}) {
  RotorField field = rotor_field(def, grid, opts);
  std::vector<KinematicState> out(grid.size());
  for (int i = 0; i < grid.n1(); ++i) {
    for (int j = 0; j < grid.n2(); ++j) {
      std::size_t k = grid.index(i, j);
      Vec2 x = grid.coords(i, j);
      out[k] = kinematic_state(def, x.x(), x.y(), opts, field.rotors[k]);
      out[k].branch_ambiguous = out[k].branch_ambiguous || field.ambiguous[k];
    }
  }
  return out;
}

}  // namespace shellkin
