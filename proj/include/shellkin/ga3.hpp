#pragma once

// Geometric algebra of 3D Euclidean space.
//
// Coefficients are stored in the canonical order
//   {1, e1, e2, e3, e12, e13, e23, e123}
// over a right-handed orthonormal frame with ei ei = 1 and ei ej = -ej ei.
//
// Rotation convention: R = exp(-A/2) with A = theta * Ahat rotates by theta in
// the plane of Ahat, in the sense that takes e1 toward e2 when Ahat = e12.
// Equivalently Ahat = I3 n for a right-handed rotation about the unit axis n.

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "shellkin/error.hpp"

namespace shellkin::ga {

using Vec3 = Eigen::Vector3d;

enum Blade : int { kScalar = 0, kE1, kE2, kE3, kE12, kE13, kE23, kE123 };

namespace detail {

// Bitmask representation of each canonical blade (bit k <-> e_{k+1}).
inline constexpr std::array<unsigned, 8> kMask{0b000, 0b001, 0b010, 0b100,
                                               0b011, 0b101, 0b110, 0b111};
inline constexpr std::array<int, 8> kGrade{0, 1, 1, 1, 2, 2, 2, 3};

constexpr int index_of_mask(unsigned mask) {
  for (int i = 0; i < 8; ++i) {
    if (kMask[i] == mask) return i;
  }
  return -1;
}

// Sign picked up by moving the basis vectors of b past those of a into
// ascending order (Euclidean metric, so squares contribute +1).
constexpr int reorder_sign(unsigned a, unsigned b) {
  a >>= 1;
  int swaps = 0;
  while (a != 0) {
    swaps += std::popcount(a & b);
    a >>= 1;
  }
  return (swaps & 1) ? -1 : 1;
}

struct ProductEntry {
  int index;
  int sign;
};

inline constexpr auto kProduct = [] {
  std::array<std::array<ProductEntry, 8>, 8> table{};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      table[i][j] = {index_of_mask(kMask[i] ^ kMask[j]),
                     reorder_sign(kMask[i], kMask[j])};
    }
  }
  return table;
}();

}  // namespace detail

class Multivector {
 public:
  constexpr Multivector() = default;
  explicit constexpr Multivector(const std::array<double, 8>& coeffs) : c_(coeffs) {}

  static constexpr Multivector scalar(double s) {
    Multivector m;
    m.c_[kScalar] = s;
    return m;
  }
  static Multivector vector(const Vec3& v) {
    Multivector m;
    m.c_[kE1] = v.x();
    m.c_[kE2] = v.y();
    m.c_[kE3] = v.z();
    return m;
  }
  static constexpr Multivector blade(Blade b, double value = 1.0) {
    Multivector m;
    m.c_[b] = value;
    return m;
  }

  constexpr double operator[](std::size_t i) const { return c_[i]; }
  constexpr double& operator[](std::size_t i) { return c_[i]; }
  constexpr const std::array<double, 8>& coefficients() const { return c_; }

  constexpr double scalar_part() const { return c_[kScalar]; }
  Vec3 vector_part() const { return {c_[kE1], c_[kE2], c_[kE3]}; }

  constexpr Multivector grade(int k) const {
    Multivector m;
    for (int i = 0; i < 8; ++i) {
      if (detail::kGrade[i] == k) m.c_[i] = c_[i];
    }
    return m;
  }

  /// Reverse: grade k picks up (-1)^{k(k-1)/2}.
  constexpr Multivector reverse() const {
    Multivector m = *this;
    for (int i = 0; i < 8; ++i) {
      int k = detail::kGrade[i];
      if ((k * (k - 1) / 2) % 2 == 1) m.c_[i] = -m.c_[i];
    }
    return m;
  }

  /// Largest absolute coefficient outside grade k.
  double off_grade(int k) const {
    double worst = 0.0;
    for (int i = 0; i < 8; ++i) {
      if (detail::kGrade[i] != k) worst = std::max(worst, std::abs(c_[i]));
    }
    return worst;
  }

  double norm() const {
    double s = 0.0;
    for (double v : c_) s += v * v;
    return std::sqrt(s);
  }

  constexpr Multivector& operator+=(const Multivector& o) {
    for (int i = 0; i < 8; ++i) c_[i] += o.c_[i];
    return *this;
  }
  constexpr Multivector& operator-=(const Multivector& o) {
    for (int i = 0; i < 8; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  constexpr Multivector& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }

  friend constexpr Multivector operator+(Multivector a, const Multivector& b) { return a += b; }
  friend constexpr Multivector operator-(Multivector a, const Multivector& b) { return a -= b; }
  friend constexpr Multivector operator-(Multivector a) { return a *= -1.0; }
  friend constexpr Multivector operator*(Multivector a, double s) { return a *= s; }
  friend constexpr Multivector operator*(double s, Multivector a) { return a *= s; }

  /// Geometric product.
  friend constexpr Multivector operator*(const Multivector& a, const Multivector& b) {
    Multivector r;
    for (int i = 0; i < 8; ++i) {
      if (a.c_[i] == 0.0) continue;
      for (int j = 0; j < 8; ++j) {
        const auto& e = detail::kProduct[i][j];
        r.c_[e.index] += e.sign * a.c_[i] * b.c_[j];
      }
    }
    return r;
  }

 private:
  std::array<double, 8> c_{};
};

inline constexpr Multivector kPseudoscalar = Multivector::blade(kE123);

inline Multivector geometric_product(const Multivector& a, const Multivector& b) { return a * b; }

namespace detail {

template <class GradeRule>
Multivector graded_product(const Multivector& a, const Multivector& b, GradeRule rule) {
  Multivector r;
  for (int i = 0; i < 8; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < 8; ++j) {
      const auto& e = kProduct[i][j];
      int target = rule(kGrade[i], kGrade[j]);
      if (target >= 0 && kGrade[e.index] == target) r[e.index] += e.sign * a[i] * b[j];
    }
  }
  return r;
}

}  // namespace detail

/// Inner product <ab>_{|r-s|} between grade-r and grade-s parts; zero when
/// either part is a scalar.
inline Multivector inner(const Multivector& a, const Multivector& b) {
  return detail::graded_product(a, b, [](int r, int s) {
    return (r == 0 || s == 0) ? -1 : std::abs(r - s);
  });
}

/// Outer product <ab>_{r+s}.
inline Multivector outer(const Multivector& a, const Multivector& b) {
  return detail::graded_product(a, b, [](int r, int s) { return r + s; });
}

/// Commutator product (ab - ba)/2.
inline Multivector commutator(const Multivector& a, const Multivector& b) {
  return 0.5 * (a * b - b * a);
}

/// a x b = -I3 (a ^ b).
inline Multivector cross_product(const Multivector& a, const Multivector& b) {
  constexpr double kTol = 1e-12;
  if (a.off_grade(1) > kTol * std::max(1.0, a.norm()) ||
      b.off_grade(1) > kTol * std::max(1.0, b.norm())) {
    throw InvalidArgument("cross_product: operands must be vectors");
  }
  return -(kPseudoscalar * outer(a, b));
}

inline Vec3 cross_product(const Vec3& a, const Vec3& b) {
  return cross_product(Multivector::vector(a), Multivector::vector(b)).vector_part();
}

/// Pure grade-2 element on {e12, e13, e23}.
struct Bivector {
  double e12 = 0.0;
  double e13 = 0.0;
  double e23 = 0.0;

  static Bivector from(const Multivector& m) { return {m[kE12], m[kE13], m[kE23]}; }
  Multivector multivector() const {
    Multivector m;
    m[kE12] = e12;
    m[kE13] = e13;
    m[kE23] = e23;
    return m;
  }

  /// |B| with B^2 = -|B|^2.
  double norm() const { return std::sqrt(e12 * e12 + e13 * e13 + e23 * e23); }

  Bivector& operator+=(const Bivector& o) {
    e12 += o.e12;
    e13 += o.e13;
    e23 += o.e23;
    return *this;
  }
  Bivector& operator-=(const Bivector& o) {
    e12 -= o.e12;
    e13 -= o.e13;
    e23 -= o.e23;
    return *this;
  }
  Bivector& operator*=(double s) {
    e12 *= s;
    e13 *= s;
    e23 *= s;
    return *this;
  }
  friend Bivector operator+(Bivector a, const Bivector& b) { return a += b; }
  friend Bivector operator-(Bivector a, const Bivector& b) { return a -= b; }
  friend Bivector operator-(Bivector a) { return a *= -1.0; }
  friend Bivector operator*(Bivector a, double s) { return a *= s; }
  friend Bivector operator*(double s, Bivector a) { return a *= s; }
};

/// Unit rotation axis n of a plane B, using Bhat = I3 n.
inline Vec3 dual_axis(const Bivector& b) {
  // I3 n = n1 e23 - n2 e13 + n3 e12
  return {b.e23, -b.e13, b.e12};
}

inline Bivector plane_of_axis(const Vec3& n) { return {n.z(), -n.y(), n.x()}; }

/// Vector-bivector inner product v . B = <vB>_1.
inline Vec3 inner(const Vec3& v, const Bivector& b) {
  return inner(Multivector::vector(v), b.multivector()).vector_part();
}

/// Even multivector acting as a rotation. Not forced to unit norm on
/// construction; operations state their normalization preconditions.
struct Rotor {
  double s = 1.0;
  double e12 = 0.0;
  double e13 = 0.0;
  double e23 = 0.0;

  static Rotor from(const Multivector& m) { return {m[kScalar], m[kE12], m[kE13], m[kE23]}; }
  Multivector multivector() const {
    Multivector m;
    m[kScalar] = s;
    m[kE12] = e12;
    m[kE13] = e13;
    m[kE23] = e23;
    return m;
  }
  Bivector bivector() const { return {e12, e13, e23}; }
  Rotor reverse() const { return {s, -e12, -e13, -e23}; }
  double norm() const { return std::sqrt(s * s + e12 * e12 + e13 * e13 + e23 * e23); }
  Rotor normalized() const {
    double n = norm();
    return {s / n, e12 / n, e13 / n, e23 / n};
  }
  Rotor operator-() const { return {-s, -e12, -e13, -e23}; }

  friend Rotor operator*(const Rotor& a, const Rotor& b) {
    return from(a.multivector() * b.multivector());
  }
};

/// <a reverse(b)>_0; positive when a and b lie in the same sign sheet.
inline double rotor_alignment(const Rotor& a, const Rotor& b) {
  return a.s * b.s + a.e12 * b.e12 + a.e13 * b.e13 + a.e23 * b.e23;
}

/// R = exp(-A/2) = cos(theta/2) - Ahat sin(theta/2), theta = |A|.
inline Rotor rotor_exp(const Bivector& a) {
  double theta = a.norm();
  double half = 0.5 * theta;
  // sin(theta/2)/theta, continuous through theta = 0
  double k = theta < 1e-8 ? 0.5 * (1.0 - half * half / 6.0) : std::sin(half) / theta;
  return {std::cos(half), -k * a.e12, -k * a.e13, -k * a.e23};
}

struct RotorLog {
  Bivector a;
  bool degenerate = false;  // theta == pi: the plane is not unique
};

namespace detail {

// A with R = exp(-A/2), keeping R's sign: theta/2 = atan2(|<R>_2|, <R>_0).
inline Bivector log_same_sheet(const Rotor& r) {
  Bivector b = r.bivector();
  double bn = b.norm();
  double half = std::atan2(bn, r.s);
  // -2 * half / |B|, continuous as |B| -> 0 on the s > 0 sheet
  double k = bn < 1e-12 ? (r.s > 0.0 ? -2.0 / r.s : 0.0) : -2.0 * half / bn;
  return k * b;
}

}  // namespace detail

/// Principal logarithm: A = theta Ahat with theta in [0, pi].
inline RotorLog rotor_log(const Rotor& r) {
  Rotor q = r.s < 0.0 ? -r : r;
  RotorLog out;
  out.a = detail::log_same_sheet(q);
  constexpr double kDegenerate = 1e-12;
  if (q.s < kDegenerate) {
    out.degenerate = true;
    if (q.bivector().norm() < kDegenerate) {
      // R = 0 is not a rotor; pick e12 to stay total.
      out.a = {M_PI, 0.0, 0.0};
    }
  }
  return out;
}

/// Logarithm on R's own sign sheet, theta in [0, 2 pi). Continuous along any
/// sign-continuized rotor field that stays away from R = -1.
inline Bivector rotor_log_unwrapped(const Rotor& r) { return detail::log_same_sheet(r); }

/// Sandwich product R x reverse(R).
inline Vec3 apply_rotor(const Rotor& r, const Vec3& x) {
  return (r.multivector() * Multivector::vector(x) * r.reverse().multivector()).vector_part();
}

/// 3x3 matrix of x -> R x reverse(R) for a unit rotor.
inline Eigen::Matrix3d rotation_matrix(const Rotor& r) {
  Eigen::Matrix3d m;
  for (int k = 0; k < 3; ++k) m.col(k) = apply_rotor(r, Vec3::Unit(k));
  return m;
}

/// Rotor of a proper rotation matrix, via the quaternion whose largest
/// component is extracted first (stable near theta = pi).
inline Rotor rotor_from_matrix(const Eigen::Matrix3d& m) {
  double tr = m.trace();
  double w, x, y, z;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    double t = std::sqrt(1.0 + tr) * 2.0;
    w = 0.25 * t;
    x = (m(2, 1) - m(1, 2)) / t;
    y = (m(0, 2) - m(2, 0)) / t;
    z = (m(1, 0) - m(0, 1)) / t;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    double t = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    w = (m(2, 1) - m(1, 2)) / t;
    x = 0.25 * t;
    y = (m(0, 1) + m(1, 0)) / t;
    z = (m(0, 2) + m(2, 0)) / t;
  } else if (m(1, 1) >= m(2, 2)) {
    double t = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    w = (m(0, 2) - m(2, 0)) / t;
    x = (m(0, 1) + m(1, 0)) / t;
    y = 0.25 * t;
    z = (m(1, 2) + m(2, 1)) / t;
  } else {
    double t = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    w = (m(1, 0) - m(0, 1)) / t;
    x = (m(0, 2) + m(2, 0)) / t;
    y = (m(1, 2) + m(2, 1)) / t;
    z = 0.25 * t;
  }
  // q = (w, v) rotates right-handedly about v; R = w - I3 v.
  Bivector plane = plane_of_axis({x, y, z});
  return Rotor{w, -plane.e12, -plane.e13, -plane.e23}.normalized();
}

/// Right-trivialized derivative of the exponential map for R = exp(-A/2):
/// returns -2 (dR) reverse(R) given dA, i.e. sum_k ad_X^k(dA)/(k+1)! with
/// X = -A/2 and ad_X(Y) = XY - YX. Reduces to dA when A and dA commute.
inline Bivector bivector_dexp(const Bivector& a, const Bivector& da) {
  Multivector x = (-0.5) * a.multivector();
  Multivector term = da.multivector();
  Multivector sum = term;
  double scale = std::max(da.norm(), 1e-300);
  for (int k = 1; k < 80; ++k) {
    term = (x * term - term * x) * (1.0 / static_cast<double>(k + 1));
    sum += term;
    if (term.norm() < 1e-18 * scale) break;
  }
  return Bivector::from(sum);
}

}  // namespace shellkin::ga
