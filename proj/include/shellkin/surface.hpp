#pragma once

// Parametric surface charts and their local differential geometry.
//
// Lengths are in mm. Tensors on a tangent plane are stored as 2x2 components
// in the local orthonormal frame obtained by Gram-Schmidt from (E1, E2); in
// that frame curvature and strain tensors are symmetric matrices.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "shellkin/error.hpp"
#include "shellkin/ga3.hpp"

namespace shellkin {

using Vec3 = ga::Vec3;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Position and its first and second partials with respect to (X1, X2).
struct Jet {
  Vec3 x = Vec3::Zero();
  Vec3 d1 = Vec3::Zero();
  Vec3 d2 = Vec3::Zero();
  Vec3 d11 = Vec3::Zero();
  Vec3 d12 = Vec3::Zero();
  Vec3 d22 = Vec3::Zero();

  const Vec3& d(int i) const { return i == 0 ? d1 : d2; }
  const Vec3& dd(int i, int j) const {
    if (i != j) return d12;
    return i == 0 ? d11 : d22;
  }
};

struct Domain {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<bool, 2> periodic{false, false};

  double span(int k) const { return hi[k] - lo[k]; }

  double wrap(int k, double x) const {
    if (!periodic[k]) return x;
    double s = span(k);
    double r = std::fmod(x - lo[k], s);
    if (r < 0.0) r += s;
    return lo[k] + r;
  }

  bool contains(double x1, double x2, double slack = 1e-12) const {
    auto in = [&](int k, double x) {
      return periodic[k] || (x >= lo[k] - slack * span(k) && x <= hi[k] + slack * span(k));
    };
    return in(0, x1) && in(1, x2);
  }
};

enum class DerivativeMode { analytic, finite_difference };

inline constexpr double kDefaultFdStep = 1e-4;  // fraction of the coordinate span

namespace detail {

// 1D finite-difference stencil: f'(x) ~ sum w1[k] f(x + off[k] h) / h and
// f''(x) ~ sum w2[k] f(x + off[k] h) / h^2, all second order.
struct Stencil {
  int n = 3;
  std::array<double, 4> off{-1.0, 0.0, 1.0, 0.0};
  std::array<double, 4> w1{-0.5, 0.0, 0.5, 0.0};
  std::array<double, 4> w2{1.0, -2.0, 1.0, 0.0};
  bool one_sided = false;

  static Stencil central() { return {}; }
  static Stencil forward() {
    return {4, {0.0, 1.0, 2.0, 3.0}, {-1.5, 2.0, -0.5, 0.0}, {2.0, -5.0, 4.0, -1.0}, true};
  }
  static Stencil backward() {
    return {4, {0.0, -1.0, -2.0, -3.0}, {1.5, -2.0, 0.5, 0.0}, {2.0, -5.0, 4.0, -1.0}, true};
  }
};

inline Stencil choose_stencil(const Domain& dom, int k, double x, double h) {
  if (dom.periodic[k]) return Stencil::central();
  double slack = 1e-12 * dom.span(k);
  if (x - h < dom.lo[k] - slack) return Stencil::forward();
  if (x + h > dom.hi[k] + slack) return Stencil::backward();
  return Stencil::central();
}

}  // namespace detail

/// A parametric surface patch X(X1, X2) -> R^3 with derivatives either from
/// an analytic jet or from central finite differences of the position.
/// Immutable once built; copies share the evaluators.
class Chart {
 public:
  using PositionFn = std::function<Vec3(double, double)>;
  using JetFn = std::function<Jet(double, double)>;

  Chart(std::string name, Domain domain, PositionFn position, JetFn analytic = {})
      : name_(std::move(name)),
        domain_(domain),
        position_(std::move(position)),
        analytic_(std::move(analytic)),
        mode_(analytic_ ? DerivativeMode::analytic : DerivativeMode::finite_difference) {
    if (!position_) throw InvalidArgument("Chart: position evaluator is required");
    for (int k = 0; k < 2; ++k) {
      if (!(domain_.hi[k] > domain_.lo[k])) throw InvalidArgument("Chart: empty coordinate domain");
    }
  }

  const std::string& name() const { return name_; }
  const Domain& domain() const { return domain_; }
  bool has_analytic() const { return static_cast<bool>(analytic_); }
  DerivativeMode mode() const { return mode_; }
  double fd_step_fraction() const { return fd_step_; }

  Chart with_mode(DerivativeMode mode, double step_fraction = kDefaultFdStep) const {
    if (mode == DerivativeMode::analytic && !analytic_) {
      throw InvalidArgument("Chart '" + name_ + "' has no analytic derivatives");
    }
    if (!(step_fraction > 0.0)) throw InvalidArgument("Chart: finite-difference step must be positive");
    Chart c = *this;
    c.mode_ = mode;
    c.fd_step_ = step_fraction;
    return c;
  }

  Vec3 position(double x1, double x2) const {
    return position_(domain_.wrap(0, x1), domain_.wrap(1, x2));
  }

  Jet jet(double x1, double x2) const {
    return mode_ == DerivativeMode::analytic ? analytic_jet(x1, x2) : fd_jet(x1, x2);
  }

  Jet analytic_jet(double x1, double x2) const {
    if (!analytic_) throw InvalidArgument("Chart '" + name_ + "' has no analytic derivatives");
    return analytic_(domain_.wrap(0, x1), domain_.wrap(1, x2));
  }

  Jet fd_jet(double x1, double x2) const {
    const double h1 = fd_step_ * domain_.span(0);
    const double h2 = fd_step_ * domain_.span(1);
    auto s1 = detail::choose_stencil(domain_, 0, x1, h1);
    auto s2 = detail::choose_stencil(domain_, 1, x2, h2);
    Jet j;
    j.x = position(x1, x2);
    for (int a = 0; a < s1.n; ++a) {
      Vec3 p = position(x1 + s1.off[a] * h1, x2);
      j.d1 += s1.w1[a] * p;
      j.d11 += s1.w2[a] * p;
    }
    for (int b = 0; b < s2.n; ++b) {
      Vec3 p = position(x1, x2 + s2.off[b] * h2);
      j.d2 += s2.w1[b] * p;
      j.d22 += s2.w2[b] * p;
    }
    for (int a = 0; a < s1.n; ++a) {
      if (s1.w1[a] == 0.0) continue;
      for (int b = 0; b < s2.n; ++b) {
        if (s2.w1[b] == 0.0) continue;
        j.d12 += s1.w1[a] * s2.w1[b] * position(x1 + s1.off[a] * h1, x2 + s2.off[b] * h2);
      }
    }
    j.d1 /= h1;
    j.d2 /= h2;
    j.d11 /= h1 * h1;
    j.d22 /= h2 * h2;
    j.d12 /= h1 * h2;
    return j;
  }

  /// True where finite differencing falls back to one-sided stencils.
  bool reduced_accuracy(double x1, double x2) const {
    if (mode_ == DerivativeMode::analytic) return false;
    return detail::choose_stencil(domain_, 0, x1, fd_step_ * domain_.span(0)).one_sided ||
           detail::choose_stencil(domain_, 1, x2, fd_step_ * domain_.span(1)).one_sided;
  }

 private:
  std::string name_;
  Domain domain_;
  PositionFn position_;
  JetFn analytic_;
  DerivativeMode mode_;
  double fd_step_ = kDefaultFdStep;
};

/// Coordinate frame, reciprocal frame, unit normal and orthonormal tangent
/// pair at one point.
struct SurfaceFrame {
  Vec3 position = Vec3::Zero();
  std::array<Vec3, 2> tangent;     // E_i = dX/dX^i
  std::array<Vec3, 2> reciprocal;  // E^i with E^i . E_j = delta
  Vec3 normal = Vec3::UnitZ();     // unit(E_1 x E_2)
  Mat2 metric = Mat2::Identity();  // E_i . E_j
  std::array<Vec3, 2> ortho;       // Gram-Schmidt of (E_1, E_2)

  /// P(i, a) = E^i . t_a: converts covariant coordinate components to the
  /// orthonormal frame via T_ortho = P^T T_coord P.
  Mat2 coord_to_ortho() const {
    Mat2 p;
    for (int i = 0; i < 2; ++i) {
      for (int a = 0; a < 2; ++a) p(i, a) = reciprocal[i].dot(ortho[a]);
    }
    return p;
  }

  /// Tangent vector with orthonormal-frame components c.
  Vec3 from_ortho(const Vec2& c) const { return c.x() * ortho[0] + c.y() * ortho[1]; }
  Vec2 to_ortho(const Vec3& v) const { return {v.dot(ortho[0]), v.dot(ortho[1])}; }
};

inline constexpr double kMinMetricDeterminant = 1e-12;

inline SurfaceFrame frame_from_jet(const Jet& j) {
  SurfaceFrame f;
  f.position = j.x;
  f.tangent = {j.d1, j.d2};
  f.metric << j.d1.dot(j.d1), j.d1.dot(j.d2), j.d2.dot(j.d1), j.d2.dot(j.d2);
  double det = f.metric.determinant();
  if (!(det >= kMinMetricDeterminant)) {
    throw SingularParametrization("surface frame: metric determinant " + std::to_string(det) +
                                  " below threshold");
  }
  Mat2 inv = f.metric.inverse();
  f.reciprocal = {inv(0, 0) * j.d1 + inv(0, 1) * j.d2, inv(1, 0) * j.d1 + inv(1, 1) * j.d2};
  f.normal = ga::cross_product(j.d1, j.d2).normalized();
  f.ortho[0] = j.d1.normalized();
  f.ortho[1] = (j.d2 - j.d2.dot(f.ortho[0]) * f.ortho[0]).normalized();
  return f;
}

inline SurfaceFrame frame_at(const Chart& chart, double x1, double x2) {
  return frame_from_jet(chart.jet(x1, x2));
}

/// Linear map on a tangent plane, stored in an orthonormal tangent basis.
struct TangentTensor {
  Mat2 m = Mat2::Zero();
  std::array<Vec3, 2> basis{Vec3::UnitX(), Vec3::UnitY()};

  Vec3 apply(const Vec3& y) const {
    Vec2 c(y.dot(basis[0]), y.dot(basis[1]));
    Vec2 r = m * c;
    return r.x() * basis[0] + r.y() * basis[1];
  }
  double asymmetry() const { return std::abs(m(0, 1) - m(1, 0)); }
};

/// Second fundamental form h_ij = n . d_i d_j X in coordinate components.
inline Mat2 second_fundamental_form(const Jet& j, const SurfaceFrame& f) {
  Mat2 h;
  h << f.normal.dot(j.d11), f.normal.dot(j.d12), f.normal.dot(j.d12), f.normal.dot(j.d22);
  return h;
}

/// B(Y) = -Y . dE3 in the chart's orthonormal frame.
inline TangentTensor curvature_tensor_from_jet(const Jet& j) {
  SurfaceFrame f = frame_from_jet(j);
  Mat2 p = f.coord_to_ortho();
  return {p.transpose() * second_fundamental_form(j, f) * p, f.ortho};
}

inline TangentTensor curvature_tensor(const Chart& chart, double x1, double x2) {
  return curvature_tensor_from_jet(chart.jet(x1, x2));
}

/// gamma^a_{ib} = e^a . d e_b / d x^i with e_3 = e^3 the unit normal.
/// Indices are zero-based: a, b in {0, 1, 2}; i in {0, 1}.
struct Christoffels {
  std::array<std::array<std::array<double, 3>, 2>, 3> g{};

  double operator()(int a, int i, int b) const { return g[a][i][b]; }
};

/// Derivative of the unit normal along coordinate i (Weingarten relation).
inline Vec3 normal_derivative(const Jet& j, const SurfaceFrame& f, int i) {
  Mat2 h = second_fundamental_form(j, f);
  return -(h(i, 0) * f.reciprocal[0] + h(i, 1) * f.reciprocal[1]);
}

inline Christoffels christoffels_from_jet(const Jet& j) {
  SurfaceFrame f = frame_from_jet(j);
  std::array<Vec3, 3> up{f.reciprocal[0], f.reciprocal[1], f.normal};
  Christoffels c;
  for (int i = 0; i < 2; ++i) {
    std::array<Vec3, 3> de{j.dd(i, 0), j.dd(i, 1), normal_derivative(j, f, i)};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) c.g[a][i][b] = up[a].dot(de[b]);
    }
  }
  return c;
}

inline Christoffels christoffels(const Chart& chart, double x1, double x2) {
  return christoffels_from_jet(chart.jet(x1, x2));
}

struct PrincipalDecomposition {
  std::array<double, 2> values{};   // descending
  std::array<Vec2, 2> components;   // eigenvectors in the tensor's basis
  std::array<Vec3, 2> vectors;      // the same as 3D tangent vectors
};

/// Eigen-decomposition of the symmetric part of a 2x2 tangent tensor.
inline PrincipalDecomposition principal_decomposition(const TangentTensor& t) {
  double a = t.m(0, 0);
  double c = t.m(1, 1);
  double b = 0.5 * (t.m(0, 1) + t.m(1, 0));
  double mean = 0.5 * (a + c);
  double radius = std::hypot(0.5 * (a - c), b);
  double angle = 0.5 * std::atan2(2.0 * b, a - c);
  PrincipalDecomposition p;
  p.values = {mean + radius, mean - radius};
  p.components[0] = Vec2(std::cos(angle), std::sin(angle));
  p.components[1] = Vec2(-std::sin(angle), std::cos(angle));
  for (int k = 0; k < 2; ++k) {
    p.vectors[k] = p.components[k].x() * t.basis[0] + p.components[k].y() * t.basis[1];
  }
  return p;
}

inline PrincipalDecomposition principal_decomposition(const Mat2& m) {
  return principal_decomposition(TangentTensor{m, {Vec3::UnitX(), Vec3::UnitY()}});
}

/// Regular sample grid over a chart domain. Periodic coordinates omit the
/// duplicated end point.
class Grid2 {
 public:
  Grid2(const Domain& domain, int n1, int n2) : domain_(domain), n_{n1, n2} {
    if (n1 < 2 || n2 < 2) throw InvalidArgument("Grid2: need at least 2 points per direction");
  }

  int n1() const { return n_[0]; }
  int n2() const { return n_[1]; }
  std::size_t size() const { return static_cast<std::size_t>(n_[0]) * n_[1]; }
  const Domain& domain() const { return domain_; }

  double spacing(int k) const {
    return domain_.span(k) / (domain_.periodic[k] ? n_[k] : n_[k] - 1);
  }
  double coord(int k, int idx) const { return domain_.lo[k] + idx * spacing(k); }
  Vec2 coords(int i, int j) const { return {coord(0, i), coord(1, j)}; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_[1] + j; }

  bool interior(int i, int j) const {
    auto in = [&](int k, int idx) { return domain_.periodic[k] || (idx > 0 && idx < n_[k] - 1); };
    return in(0, i) && in(1, j);
  }

  /// 4-neighbourhood with periodic wrapping.
  template <class F>
  void for_each_neighbor(int i, int j, F&& f) const {
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int ni = i + di[k], nj = j + dj[k];
      if (!wrap_index(0, ni) || !wrap_index(1, nj)) continue;
      f(ni, nj);
    }
  }

 private:
  bool wrap_index(int k, int& idx) const {
    if (idx >= 0 && idx < n_[k]) return true;
    if (!domain_.periodic[k]) return false;
    idx = (idx + n_[k]) % n_[k];
    return true;
  }

  Domain domain_;
  std::array<int, 2> n_;
};

// ---------------------------------------------------------------------------
// Built-in analytic charts

/// Plane X(u, v) = (u, v, 0) over [0, lu] x [0, lv]; normal +z.
inline Chart make_plane(double lu, double lv) {
  if (!(lu > 0.0 && lv > 0.0)) throw InvalidArgument("plane: sizes must be positive");
  Domain d{{0.0, 0.0}, {lu, lv}, {false, false}};
  return Chart(
      "plane", d, [](double u, double v) { return Vec3(u, v, 0.0); },
      [](double u, double v) {
        Jet j;
        j.x = Vec3(u, v, 0.0);
        j.d1 = Vec3::UnitX();
        j.d2 = Vec3::UnitY();
        return j;
      });
}

enum class Azimuth { angle, arc_length };

/// Cylinder of radius a with axis along world x:
///   X(z, s) = (z, a cos phi, a sin phi)
/// where phi = s (angle) or s / a (arc length). Coordinate order (axial,
/// azimuthal) puts the normal inward, so the azimuthal curvature is +1/a.
/// The azimuthal range defaults to the full, periodic circle.
inline Chart make_cylinder(double a, double length, Azimuth azimuth = Azimuth::angle,
                           double phi_lo = 0.0, double phi_hi = 2.0 * std::numbers::pi) {
  if (!(a > 0.0 && length > 0.0)) throw InvalidArgument("cylinder: radius and length must be positive");
  const double scale = azimuth == Azimuth::angle ? 1.0 : 1.0 / a;
  bool full = std::abs(phi_hi - phi_lo - 2.0 * std::numbers::pi) < 1e-12;
  Domain d{{0.0, phi_lo / scale}, {length, phi_hi / scale}, {false, full}};
  auto pos = [a, scale](double z, double s) {
    double phi = s * scale;
    return Vec3(z, a * std::cos(phi), a * std::sin(phi));
  };
  auto jet = [a, scale](double z, double s) {
    double phi = s * scale, c = std::cos(phi), sn = std::sin(phi);
    Jet j;
    j.x = Vec3(z, a * c, a * sn);
    j.d1 = Vec3::UnitX();
    j.d2 = a * scale * Vec3(0.0, -sn, c);
    j.d22 = a * scale * scale * Vec3(0.0, -c, -sn);
    return j;
  };
  return Chart(azimuth == Azimuth::angle ? "cylinder" : "cylinder-arclength", d, pos, jet);
}

/// Sphere of radius r in (longitude phi, colatitude theta) order:
///   X(phi, theta) = r (sin theta cos phi, sin theta sin phi, cos theta)
/// which puts the normal inward (both principal curvatures +1/r).
inline Chart make_sphere(double r, double theta_lo = 0.25 * std::numbers::pi,
                         double theta_hi = 0.75 * std::numbers::pi) {
  if (!(r > 0.0)) throw InvalidArgument("sphere: radius must be positive");
  if (!(theta_lo > 0.0 && theta_hi < std::numbers::pi && theta_hi > theta_lo)) {
    throw InvalidArgument("sphere: colatitude range must avoid the poles");
  }
  Domain d{{0.0, theta_lo}, {2.0 * std::numbers::pi, theta_hi}, {true, false}};
  auto pos = [r](double phi, double th) {
    return Vec3(r * std::sin(th) * std::cos(phi), r * std::sin(th) * std::sin(phi), r * std::cos(th));
  };
  auto jet = [r](double phi, double th) {
    double sp = std::sin(phi), cp = std::cos(phi), st = std::sin(th), ct = std::cos(th);
    Jet j;
    j.x = r * Vec3(st * cp, st * sp, ct);
    j.d1 = r * Vec3(-st * sp, st * cp, 0.0);
    j.d2 = r * Vec3(ct * cp, ct * sp, -st);
    j.d11 = r * Vec3(-st * cp, -st * sp, 0.0);
    j.d12 = r * Vec3(-ct * sp, ct * cp, 0.0);
    j.d22 = r * Vec3(-st * cp, -st * sp, -ct);
    return j;
  };
  return Chart("sphere", d, pos, jet);
}

}  // namespace shellkin
