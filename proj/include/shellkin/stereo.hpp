#pragma once

// Synthetic stereo measurement: pinhole cameras with lens distortion,
// epipolar geometry, triangulation, mexican-hat dot detection, homography
// pairing, frame-to-frame association and a dot renderer.
//
// Pixel coordinates: u to the right, v down, origin at the centre of the
// top-left pixel. Camera frame: x right, y down, z along the optical axis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "json.hpp"
#include "shellkin/error.hpp"
#include "shellkin/ga3.hpp"
#include "shellkin/surface.hpp"

namespace shellkin {

// ---------------------------------------------------------------------------
// Camera model

struct Camera {
  double focal_length = 60.0;  // [mm]
  double pixel_pitch = 0.02;   // [mm/px]
  Vec2 principal_point{255.5, 127.5};
  double skew = 0.0;
  double k1 = 0.0, k2 = 0.0;  // radial
  double p1 = 0.0, p2 = 0.0;  // tangential
  ga::Rotor orientation;      // camera frame -> world
  Vec3 position = Vec3::Zero();
  int width = 512;
  int height = 256;

  void validate() const {
    if (!(focal_length > 0.0 && pixel_pitch > 0.0)) {
      throw InvalidArgument("camera: focal length and pixel pitch must be positive");
    }
    if (std::abs(orientation.norm() - 1.0) > 1e-9) throw InvalidArgument("camera: orientation rotor is not normalized");
    if (width <= 0 || height <= 0) throw InvalidArgument("camera: image size must be positive");
  }

  double focal_px() const { return focal_length / pixel_pitch; }

  Eigen::Matrix3d intrinsics() const {
    double f = focal_px();
    Eigen::Matrix3d k;
    k << f, skew * f, principal_point.x(), 0.0, f, principal_point.y(), 0.0, 0.0, 1.0;
    return k;
  }

  Eigen::Matrix3d world_from_camera() const { return ga::rotation_matrix(orientation); }

  Vec3 to_camera(const Vec3& p) const { return world_from_camera().transpose() * (p - position); }

  bool has_distortion() const { return k1 != 0.0 || k2 != 0.0 || p1 != 0.0 || p2 != 0.0; }

  /// Brown-Conrady distortion of normalized image coordinates.
  Vec2 distort(const Vec2& n) const {
    double x = n.x(), y = n.y(), r2 = x * x + y * y;
    double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
    return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
  }

  /// Fixed-point inversion of distort().
  Vec2 undistort(const Vec2& d, int iterations = 10) const {
    Vec2 n = d;
    for (int i = 0; i < iterations; ++i) n -= distort(n) - d;
    return n;
  }

  Vec2 normalized_to_pixel(const Vec2& n) const {
    double f = focal_px();
    return {f * (n.x() + skew * n.y()) + principal_point.x(), f * n.y() + principal_point.y()};
  }

  Vec2 pixel_to_normalized(const Vec2& px) const {
    double f = focal_px();
    double y = (px.y() - principal_point.y()) / f;
    return {(px.x() - principal_point.x()) / f - skew * y, y};
  }

  Vec2 project(const Vec3& p) const {
    Vec3 q = to_camera(p);
    if (!(q.z() > 1e-9)) throw InvalidArgument("project: point is at or behind the camera plane");
    return normalized_to_pixel(distort({q.x() / q.z(), q.y() / q.z()}));
  }

  /// Pixel with the lens distortion removed (ideal pinhole image).
  Vec2 ideal_pixel(const Vec2& px) const { return normalized_to_pixel(undistort(pixel_to_normalized(px))); }

  /// Unit world direction of the ray through a pixel.
  Vec3 ray(const Vec2& px) const {
    Vec2 n = undistort(pixel_to_normalized(px));
    return (world_from_camera() * Vec3(n.x(), n.y(), 1.0)).normalized();
  }

  bool in_image(const Vec2& px, double margin = 0.0) const {
    return px.x() >= margin && px.y() >= margin && px.x() <= width - 1 - margin && px.y() <= height - 1 - margin;
  }

  /// Pixels per mm on a fronto-parallel plane at the given depth.
  double magnification(double depth) const { return focal_length / (pixel_pitch * depth); }
};

/// Camera at `position` looking at `target`, image u axis as close as
/// possible to `right`.
inline Camera look_at(Camera cam, const Vec3& position, const Vec3& target, const Vec3& right = Vec3::UnitX()) {
  Vec3 z = (target - position).normalized();
  Vec3 x = right - right.dot(z) * z;
  if (x.norm() < 1e-9) throw DegenerateGeometry("look_at: right vector parallel to the viewing direction");
  x.normalize();
  Vec3 y = z.cross(x);
  Eigen::Matrix3d m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  cam.orientation = ga::rotor_from_matrix(m);
  cam.position = position;
  return cam;
}

/// Two cameras toed in symmetrically about the plane x = target.x, both at
/// `distance` from the target, baseline along world x. The image u axes run
/// along x, so epipolar lines are nearly horizontal.
struct RigParams {
  Vec3 target{12.5, 0.0, 0.0};
  double distance = 200.0;        // [mm]
  double half_vergence_deg = 10.0;
  Camera intrinsics;              // lens and sensor shared by both cameras
};

inline std::array<Camera, 2> stereo_rig(const RigParams& p) {
  double a = p.half_vergence_deg * std::numbers::pi / 180.0;
  std::array<Camera, 2> cams;
  for (int k = 0; k < 2; ++k) {
    double s = k == 0 ? -1.0 : 1.0;
    Vec3 c = p.target + p.distance * Vec3(s * std::sin(a), 0.0, std::cos(a));
    cams[k] = look_at(p.intrinsics, c, p.target);
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Epipolar geometry

/// F with x2^T F x1 = 0 for ideal (undistorted) homogeneous pixels.
inline Eigen::Matrix3d fundamental_matrix(const Camera& c1, const Camera& c2) {
  Vec3 baseline = c1.position - c2.position;
  if (baseline.norm() < 1e-9) throw DegenerateGeometry("epipolar geometry: cameras are co-located");
  Eigen::Matrix3d r1 = c1.world_from_camera(), r2 = c2.world_from_camera();
  Eigen::Matrix3d r = r2.transpose() * r1;
  Vec3 t = r2.transpose() * baseline;
  Eigen::Matrix3d tx;
  tx << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  Eigen::Matrix3d f = c2.intrinsics().inverse().transpose() * tx * r * c1.intrinsics().inverse();
  return f / f.norm();
}

/// Image in camera 1 of camera 2's centre, homogeneous.
inline Vec3 epipole(const Camera& c1, const Camera& c2) {
  if ((c1.position - c2.position).norm() < 1e-9) throw DegenerateGeometry("epipole: cameras are co-located");
  return c1.intrinsics() * c1.world_from_camera().transpose() * (c2.position - c1.position);
}

/// Locus in image 2 of the ray through a pixel of image 1. Without
/// distortion in camera 2 it is the straight line `line` (a u + b v + c = 0,
/// a^2 + b^2 = 1); otherwise the curve is sampled into `samples`.
struct EpipolarCurve {
  Vec3 line = Vec3::Zero();
  bool straight = true;
  std::vector<Vec2> samples;

  double distance(const Vec2& p) const {
    if (straight) return std::abs(line.x() * p.x() + line.y() * p.y() + line.z());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
      Vec2 a = samples[i], d = samples[i + 1] - a;
      double len2 = d.squaredNorm();
      double s = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, (a + s * d - p).norm());
    }
    return best;
  }
};

inline Vec3 normalized_line(const Vec3& l) { return l / std::hypot(l.x(), l.y()); }

inline EpipolarCurve epipolar_line(const Camera& c1, const Camera& c2, const Vec2& px1, double near = 1.0,
                                   double far = 1e5, int n_samples = 400) {
  Eigen::Matrix3d f = fundamental_matrix(c1, c2);
  Vec2 ideal = c1.ideal_pixel(px1);
  EpipolarCurve out;
  out.line = normalized_line(f * Vec3(ideal.x(), ideal.y(), 1.0));
  if (!c2.has_distortion()) return out;
  out.straight = false;
  Vec3 d = c1.ray(px1);
  for (int i = 0; i < n_samples; ++i) {
    double depth = near * std::pow(far / near, static_cast<double>(i) / (n_samples - 1));
    Vec3 p = c1.position + depth * d;
    if (c2.to_camera(p).z() > 1e-9) out.samples.push_back(c2.project(p));
  }
  return out;
}

/// Mean of the distances of each ideal pixel to the other's epipolar line.
inline double symmetric_epipolar_distance(const Eigen::Matrix3d& f, const Camera& c1, const Camera& c2,
                                          const Vec2& px1, const Vec2& px2) {
  Vec2 a = c1.ideal_pixel(px1), b = c2.ideal_pixel(px2);
  Vec3 x1(a.x(), a.y(), 1.0), x2(b.x(), b.y(), 1.0);
  Vec3 l2 = f * x1, l1 = f.transpose() * x2;
  return 0.5 * (std::abs(l2.dot(x2)) / std::hypot(l2.x(), l2.y()) + std::abs(l1.dot(x1)) / std::hypot(l1.x(), l1.y()));
}

// ---------------------------------------------------------------------------
// Triangulation

struct Triangulation {
  Vec3 point = Vec3::Zero();
  double gap = 0.0;  // length of the shortest segment between the rays [mm]
};

/// Midpoint of the common perpendicular of the two back-projected rays.
inline Triangulation triangulate(const Camera& c1, const Camera& c2, const Vec2& px1, const Vec2& px2,
                                 double min_angle = 1e-6) {
  Vec3 d1 = c1.ray(px1), d2 = c2.ray(px2);
  Vec3 w0 = c1.position - c2.position;
  double b = d1.dot(d2), d = d1.dot(w0), e = d2.dot(w0);
  double denom = 1.0 - b * b;
  if (denom < min_angle * min_angle) throw DegenerateGeometry("triangulate: rays are nearly parallel");
  double s = (b * e - d) / denom, t = (e - b * d) / denom;
  Vec3 q1 = c1.position + s * d1, q2 = c2.position + t * d2;
  return {0.5 * (q1 + q2), (q1 - q2).norm()};
}

/// Rounds pixel coordinates to a grid of the given step.
inline Vec2 quantize(const Vec2& px, double step, const Vec2& offset = Vec2::Zero()) {
  return ((px - offset) / step).array().round().matrix() * step + offset;
}

// ---------------------------------------------------------------------------
// Rasters

struct ImageRaster {
  int width = 512;
  int height = 256;
  std::vector<double> data;  // row-major, intensity in [0, 1]

  ImageRaster() : ImageRaster(512, 256) {}
  ImageRaster(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw InvalidArgument("ImageRaster: dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Binary 8-bit PGM (P5).
inline void write_pgm(std::ostream& out, const ImageRaster& img) {
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.data) {
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
}

inline ImageRaster read_pgm(std::istream& in) {
  auto token = [&in]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> t)) throw InvalidArgument("read_pgm: truncated header");
    return t;
  };
  if (token() != "P5") throw InvalidArgument("read_pgm: not a binary PGM (P5)");
  int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
  if (maxval <= 0 || maxval > 255) throw InvalidArgument("read_pgm: only 8-bit images are supported");
  in.get();
  ImageRaster img(w, h);
  for (double& v : img.data) {
    int c = in.get();
    if (c == EOF) throw InvalidArgument("read_pgm: truncated pixel data");
    v = static_cast<double>(c) / maxval;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Detection

struct DotDetection {
  Vec2 pixel = Vec2::Zero();
  double response = 0.0;
};

struct DetectOptions {
  double relative_threshold = 0.2;  // fraction of the strongest response
  double absolute_threshold = 1e-6;
};

namespace detail {

// Separable 1D convolution with zero padding; `horizontal` selects the axis.
inline std::vector<double> convolve_1d(const std::vector<double>& src, int w, int h, const std::vector<double>& k,
                                       bool horizontal) {
  int r = static_cast<int>(k.size() / 2);
  std::vector<double> out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        int xx = horizontal ? x + j : x, yy = horizontal ? y : y + j;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        acc += k[j + r] * src[static_cast<std::size_t>(yy) * w + xx];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Convolution with (1/(pi s^4)) (1 - r^2/(2 s^2)) exp(-r^2/(2 s^2)),
/// truncated at 4 s. The kernel is split into three separable terms.
inline ImageRaster mexican_hat_response(const ImageRaster& img, double sigma) {
  if (!(sigma >= 1.0)) throw InvalidArgument("mexican_hat: sigma must be at least 1 px");
  int r = static_cast<int>(std::ceil(4.0 * sigma));
  if (2 * r + 1 > std::min(img.width, img.height)) {
    throw InvalidArgument(fmt::format("mexican_hat: sigma {} px is too large for a {}x{} image", sigma, img.width,
                                      img.height));
  }
  std::vector<double> g(2 * r + 1), q(2 * r + 1);
  for (int i = -r; i <= r; ++i) {
    double t = i * i / (2.0 * sigma * sigma);
    g[i + r] = std::exp(-t);
    q[i + r] = t * std::exp(-t);
  }
  const int w = img.width, h = img.height;
  auto gx = detail::convolve_1d(img.data, w, h, g, true);
  auto qx = detail::convolve_1d(img.data, w, h, q, true);
  auto gg = detail::convolve_1d(gx, w, h, g, false);
  auto qg = detail::convolve_1d(qx, w, h, g, false);
  auto gq = detail::convolve_1d(gx, w, h, q, false);
  ImageRaster out(w, h);
  const double c = 1.0 / (std::numbers::pi * std::pow(sigma, 4));
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * (gg[i] - qg[i] - gq[i]);
  return out;
}

/// Local maxima of the mexican-hat response, refined to sub-pixel accuracy by
/// a least-squares quadratic over the 3x3 neighbourhood. Sorted by v then u.
inline std::vector<DotDetection> mexican_hat_detect(const ImageRaster& img, double sigma,
                                                    const DetectOptions& opts = {}) {
  ImageRaster resp = mexican_hat_response(img, sigma);
  double peak = 0.0;
  for (double v : resp.data) peak = std::max(peak, v);
  double threshold = std::max(opts.relative_threshold * peak, opts.absolute_threshold);
  std::vector<DotDetection> out;
  if (peak <= opts.absolute_threshold) return out;
  for (int y = 1; y + 1 < resp.height; ++y) {
    for (int x = 1; x + 1 < resp.width; ++x) {
      double c = resp.at(x, y);
      if (c < threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          double n = resp.at(x + dx, y + dy);
          // Ties go to the first pixel in raster order.
          bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > c || (earlier && n == c)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          double f = resp.at(x + dx, y + dy);
          sx += dx * f;
          sy += dy * f;
          sxx += (dx * dx - 2.0 / 3.0) * f;
          syy += (dy * dy - 2.0 / 3.0) * f;
          sxy += dx * dy * f;
        }
      }
      // Least-squares fit f = a + b x + c y + d x^2 + e x y + g y^2 on the
      // 3x3 stencil: b = sx/6, c = sy/6, d = sxx/2, e = sxy/4, g = syy/2.
      Vec2 grad(sx / 6.0, sy / 6.0);
      Mat2 hess;
      hess << sxx, sxy / 4.0, sxy / 4.0, syy;
      Vec2 offset = Vec2::Zero();
      if (hess.determinant() > 0.0 && hess.trace() < 0.0) {
        offset = -hess.inverse() * grad;
        if (offset.cwiseAbs().maxCoeff() > 1.0) offset = Vec2::Zero();
      }
      out.push_back({Vec2(x, y) + offset, c});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairing

struct PairingOptions {
  double radius_px = 7.0;               // half the nominal dot spacing in the image
  double epipolar_tolerance_px = 1.5;
  std::size_t min_seeds = 10;
  int rounds = 100;            // each round refits the homography and grows the matched set
  std::size_t neighbours = 8;  // accepted pairs interpolating the local parallax
  double growth_radius = 2.0;  // candidates lie within this many median dot spacings of a match (0: any)
  double ambiguity_ratio = 2.0;  // the runner-up must be this much farther from the prediction (1: off)
};

struct Pairing {
  std::vector<std::pair<int, int>> pairs;  // (index in view 1, index in view 2)
  std::vector<int> unmatched1;
  std::vector<int> unmatched2;
  std::vector<std::pair<int, int>> rejected;  // candidates failing the epipolar check
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();
};

namespace detail {

// Similarity taking points to zero centroid and mean distance sqrt(2).
inline Eigen::Matrix3d normalizing_transform(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * c.x(), 0.0, s, -s * c.y(), 0.0, 0.0, 1.0;
  return t;
}

inline void require_spread(const std::vector<Vec2>& pts, const char* which) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::MatrixXd m(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(i) = (pts[i] - c).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  auto s = svd.singularValues();
  if (!(s(1) > 1e-3 * s(0))) throw DegenerateGeometry(std::string("pair_points: seed points are collinear in ") + which);
}

}  // namespace detail

/// Homography from point correspondences by the normalized direct linear
/// transform.
inline Eigen::Matrix3d fit_homography(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
  if (from.size() != to.size() || from.size() < 4) throw InvalidArgument("fit_homography: need 4 or more pairs");
  detail::require_spread(from, "view 1");
  detail::require_spread(to, "view 2");
  Eigen::Matrix3d ta = detail::normalizing_transform(from), tb = detail::normalizing_transform(to);
  Eigen::MatrixXd a(2 * from.size(), 9);
  for (std::size_t i = 0; i < from.size(); ++i) {
    Vec3 p = ta * Vec3(from[i].x(), from[i].y(), 1.0);
    Vec3 q = tb * Vec3(to[i].x(), to[i].y(), 1.0);
    a.row(2 * i) << 0, 0, 0, -q.z() * p.x(), -q.z() * p.y(), -q.z() * p.z(), q.y() * p.x(), q.y() * p.y(), q.y() * p.z();
    a.row(2 * i + 1) << q.z() * p.x(), q.z() * p.y(), q.z() * p.z(), 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(),
        -q.x() * p.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d out = tb.inverse() * hn * ta;
  return out / out(2, 2);
}

inline Vec2 apply_homography(const Eigen::Matrix3d& h, const Vec2& p) {
  Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

namespace detail {

/// Median distance from each detection to its nearest neighbour.
inline double median_spacing(const std::vector<DotDetection>& det) {
  std::vector<double> nn;
  for (std::size_t i = 0; i < det.size(); ++i) {
    double best = INFINITY;
    for (std::size_t j = 0; j < det.size(); ++j) {
      if (i != j) best = std::min(best, (det[i].pixel - det[j].pixel).norm());
    }
    if (std::isfinite(best)) nn.push_back(best);
  }
  if (nn.empty()) return INFINITY;
  std::nth_element(nn.begin(), nn.begin() + static_cast<long>(nn.size() / 2), nn.end());
  return nn[nn.size() / 2];
}

/// Homography prediction corrected by the inverse-distance weighted
/// parallax of the nearest accepted pairs. Empty when no accepted pair lies
/// within `reach`.
inline std::optional<Vec2> predict_match(const Vec2& p, const std::vector<Vec2>& from, const std::vector<Vec2>& parallax,
                                         const Eigen::Matrix3d& h, std::size_t neighbours, double reach) {
  std::vector<std::pair<double, std::size_t>> near(from.size());
  for (std::size_t k = 0; k < from.size(); ++k) near[k] = {(from[k] - p).norm(), k};
  std::size_t m = std::min(neighbours, near.size());
  std::partial_sort(near.begin(), near.begin() + static_cast<long>(m), near.end());
  if (m == 0 || (reach > 0.0 && near[0].first > reach)) return std::nullopt;
  Vec2 corr = Vec2::Zero();
  double wsum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double w = 1.0 / std::max(near[k].first * near[k].first, 1e-12);
    corr += w * parallax[near[k].second];
    wsum += w;
  }
  corr /= wsum;
  if (m >= 6) {
    // Weighted affine fit of the parallax about p, so a gradient (steep near
    // a silhouette) is extrapolated rather than averaged away.
    Eigen::MatrixXd a(m, 3);
    Eigen::MatrixXd b(m, 2);
    for (std::size_t k = 0; k < m; ++k) {
      double w = 1.0 / std::max(near[k].first, 1e-6);
      Vec2 d = from[near[k].second] - p;
      a.row(static_cast<long>(k)) << w, w * d.x(), w * d.y();
      b.row(static_cast<long>(k)) = w * parallax[near[k].second].transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.singularValues()(2) > 1e-3 * svd.singularValues()(0)) corr = svd.solve(b).row(0).transpose();
  }
  return apply_homography(h, p) + corr;
}

}  // namespace detail

/// Pairs detections across two views. Seeds (user-identified
/// correspondences) fix a homography. View-1 detections near an accepted pair
/// are mapped through it, corrected by the parallax of the nearest accepted
/// pairs, and matched to the nearest view-2 detection within `radius_px`,
/// keeping mutual nearest matches only. Each candidate must then satisfy the
/// epipolar constraint. Rounds repeat with the homography refitted to every
/// accepted pair, so the matched set grows outward from the seeds.
inline Pairing pair_points(const std::vector<DotDetection>& det1, const std::vector<DotDetection>& det2,
                           const std::vector<std::pair<int, int>>& seeds, const Camera& c1, const Camera& c2,
                           const PairingOptions& opts = {}) {
  if (seeds.size() < opts.min_seeds) {
    throw InvalidArgument(fmt::format("pair_points: {} seed pairs given, {} required", seeds.size(), opts.min_seeds));
  }
  if (det1.empty() || det2.empty()) throw InvalidArgument("pair_points: no detections");
  const int n1 = static_cast<int>(det1.size()), n2 = static_cast<int>(det2.size());
  std::vector<char> used1(n1, 0), used2(n2, 0);
  std::vector<Vec2> from, to;
  for (auto [i, j] : seeds) {
    if (i < 0 || j < 0 || i >= n1 || j >= n2) throw InvalidArgument("pair_points: seed index out of range");
    if (used1[i] || used2[j]) throw InvalidArgument("pair_points: detection used by two seeds");
    used1[i] = used2[j] = 1;
    from.push_back(det1[i].pixel);
    to.push_back(det2[j].pixel);
  }
  Pairing out;
  out.pairs = seeds;
  Eigen::Matrix3d f = fundamental_matrix(c1, c2);
  std::vector<char> tried(static_cast<std::size_t>(n1) * n2, 0);
  const double reach = opts.growth_radius * detail::median_spacing(det1);
  for (int round = 0; round < opts.rounds; ++round) {
    out.homography = fit_homography(from, to);
    std::vector<Vec2> parallax(from.size());
    for (std::size_t k = 0; k < from.size(); ++k) parallax[k] = to[k] - apply_homography(out.homography, from[k]);
    std::vector<int> best2(n1, -1);
    std::vector<double> dist1(n1, INFINITY);
    for (int i = 0; i < n1; ++i) {
      if (used1[i]) continue;
      std::optional<Vec2> q = detail::predict_match(det1[i].pixel, from, parallax, out.homography, opts.neighbours, reach);
      if (!q) continue;
      double second = INFINITY;
      for (int j = 0; j < n2; ++j) {
        double d = (det2[j].pixel - *q).norm();
        if (d < dist1[i]) {
          second = dist1[i];
          dist1[i] = d;
          best2[i] = j;
        } else {
          second = std::min(second, d);
        }
      }
      // Ambiguous or out-of-range predictions wait for closer neighbours.
      if (dist1[i] >= opts.radius_px || used2[best2[i]] || second < opts.ambiguity_ratio * dist1[i]) {
        best2[i] = -1;
        dist1[i] = INFINITY;
      }
    }
    std::vector<int> best1(n2, -1);
    for (int i = 0; i < n1; ++i) {
      int j = best2[i];
      if (j >= 0 && (best1[j] < 0 || dist1[i] < dist1[best1[j]])) best1[j] = i;
    }
    bool added = false;
    for (int i = 0; i < n1; ++i) {
      int j = best2[i];
      if (j < 0 || best1[j] != i) continue;
      char& seen = tried[static_cast<std::size_t>(i) * n2 + j];
      if (seen) continue;
      seen = 1;
      if (symmetric_epipolar_distance(f, c1, c2, det1[i].pixel, det2[j].pixel) > opts.epipolar_tolerance_px) {
        out.rejected.emplace_back(i, j);
        continue;
      }
      out.pairs.emplace_back(i, j);
      used1[i] = used2[j] = 1;
      from.push_back(det1[i].pixel);
      to.push_back(det2[j].pixel);
      added = true;
    }
    if (!added) break;
  }
  for (int i = 0; i < n1; ++i) {
    if (!used1[i]) out.unmatched1.push_back(i);
  }
  for (int j = 0; j < n2; ++j) {
    if (!used2[j]) out.unmatched2.push_back(j);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

// ---------------------------------------------------------------------------
// Temporal association

struct ImageTrack {
  int id = 0;
  int first_frame = 0;
  std::vector<Vec2> points;  // one per frame from first_frame on

  int last_frame() const { return first_frame + static_cast<int>(points.size()) - 1; }
};

/// Links detections frame to frame. A link is made only when the track has
/// exactly one candidate within `max_dist` and that candidate is claimed by
/// no other track; otherwise the track ends and the detection starts a new
/// one.
inline std::vector<ImageTrack> associate_over_time(const std::vector<std::vector<Vec2>>& frames, double max_dist) {
  if (!(max_dist > 0.0)) throw InvalidArgument("associate_over_time: max_dist must be positive");
  std::vector<ImageTrack> tracks;
  std::vector<int> active;  // indices into tracks
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    const auto& pts = frames[f];
    std::vector<std::vector<int>> cand_of_track(active.size());
    std::vector<std::vector<int>> cand_of_point(pts.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Vec2& last = tracks[active[a]].points.back();
      for (std::size_t p = 0; p < pts.size(); ++p) {
        if ((pts[p] - last).norm() <= max_dist) {
          cand_of_track[a].push_back(static_cast<int>(p));
          cand_of_point[p].push_back(static_cast<int>(a));
        }
      }
    }
    std::vector<int> next;
    std::vector<char> taken(pts.size(), 0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (cand_of_track[a].size() != 1) continue;
      int p = cand_of_track[a][0];
      if (cand_of_point[p].size() != 1) continue;
      tracks[active[a]].points.push_back(pts[p]);
      taken[p] = 1;
      next.push_back(active[a]);
    }
    for (std::size_t p = 0; p < pts.size(); ++p) {
      if (taken[p]) continue;
      ImageTrack t{static_cast<int>(tracks.size()), f, {pts[p]}};
      tracks.push_back(std::move(t));
      next.push_back(static_cast<int>(tracks.size()) - 1);
    }
    std::sort(next.begin(), next.end());
    active = std::move(next);
  }
  return tracks;
}

// ---------------------------------------------------------------------------
// Synthetic rendering

struct Dot {
  int id = 0;
  double x1 = 0.0;  // convected labels [mm]
  double x2 = 0.0;
  Vec2 chart = Vec2::Zero();  // coordinates on the rendered chart
};

struct DotPattern {
  std::vector<Dot> dots;
  double diameter = 0.7;        // [mm]
  double normal_sign = -1.0;    // +1 if the chart normal points toward the viewer side, -1 if away
};

/// Dots with labels (c pitch, r pitch), c in [0, cols), r in [row_lo, row_hi],
/// placed on a chart through `to_chart`. Ids run column-major.
inline DotPattern dot_grid(int cols, int row_lo, int row_hi, double pitch,
                           const std::function<Vec2(double, double)>& to_chart, double diameter = 0.7,
                           double normal_sign = -1.0) {
  DotPattern p;
  p.diameter = diameter;
  p.normal_sign = normal_sign;
  int id = 0;
  for (int c = 0; c < cols; ++c) {
    for (int r = row_lo; r <= row_hi; ++r) {
      double x1 = c * pitch, x2 = r * pitch;
      p.dots.push_back({id++, x1, x2, to_chart(x1, x2)});
    }
  }
  return p;
}

struct RenderOptions {
  double min_facing = 0.5;  // smallest cosine between outward normal and view direction
  double intensity = 1.0;
  double margin_px = 3.0;   // dots closer than this to the border are dropped
};

struct ProjectedDot {
  int id = 0;
  Vec2 pixel = Vec2::Zero();
  double radius_px = 0.0;  // geometric radius of the imaged dot
  double sigma_px = 0.0;   // standard deviation of the rendered blob, radius / 2
  Vec3 position = Vec3::Zero();
};

struct View {
  ImageRaster image;
  std::vector<ProjectedDot> dots;
};

/// Renders each dot as a Gaussian blob at the projection of its centre. The
/// blob's standard deviation is half the imaged radius, the second moment of
/// a uniform disc. Dots whose outward normal
/// faces away from a camera are not drawn in that view.
inline std::array<View, 2> render_synthetic(const std::array<Camera, 2>& cams, const Chart& surface,
                                            const DotPattern& pattern, const RenderOptions& opts = {}) {
  std::array<View, 2> views;
  for (int k = 0; k < 2; ++k) {
    const Camera& cam = cams[k];
    views[k].image = ImageRaster(cam.width, cam.height);
    for (const Dot& dot : pattern.dots) {
      SurfaceFrame fr = frame_at(surface, dot.chart.x(), dot.chart.y());
      Vec3 to_cam = cam.position - fr.position;
      double depth = to_cam.norm();
      if (pattern.normal_sign * fr.normal.dot(to_cam) < opts.min_facing * depth) continue;
      if (cam.to_camera(fr.position).z() <= 0.0) continue;
      Vec2 px = cam.project(fr.position);
      if (!cam.in_image(px, opts.margin_px)) continue;
      double radius = 0.5 * pattern.diameter * cam.magnification(cam.to_camera(fr.position).z());
      views[k].dots.push_back({dot.id, px, radius, 0.5 * radius, fr.position});
    }
    ImageRaster& img = views[k].image;
    for (const ProjectedDot& d : views[k].dots) {
      double s = d.sigma_px;
      int r = static_cast<int>(std::ceil(4.0 * s));
      int cx = static_cast<int>(std::lround(d.pixel.x())), cy = static_cast<int>(std::lround(d.pixel.y()));
      for (int y = std::max(0, cy - r); y <= std::min(img.height - 1, cy + r); ++y) {
        for (int x = std::max(0, cx - r); x <= std::min(img.width - 1, cx + r); ++x) {
          double r2 = (Vec2(x, y) - d.pixel).squaredNorm();
          img.at(x, y) += opts.intensity * std::exp(-r2 / (2.0 * s * s));
        }
      }
    }
    for (double& v : img.data) v = std::min(v, 1.0);
  }
  if (views[0].dots.empty() && views[1].dots.empty()) throw InvalidArgument("render_synthetic: no visible dots");
  return views;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const Camera& c) {
  using J = nlohmann::ordered_json;
  return {{"focal_length", c.focal_length},
          {"pixel_pitch", c.pixel_pitch},
          {"principal_point", J::array({c.principal_point.x(), c.principal_point.y()})},
          {"skew", c.skew},
          {"radial", J::array({c.k1, c.k2})},
          {"tangential", J::array({c.p1, c.p2})},
          {"orientation", J::array({c.orientation.s, c.orientation.e12, c.orientation.e13, c.orientation.e23})},
          {"position", J::array({c.position.x(), c.position.y(), c.position.z()})},
          {"size", J::array({c.width, c.height})}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera c;
  try {
    c.focal_length = j.value("focal_length", c.focal_length);
    c.pixel_pitch = j.value("pixel_pitch", c.pixel_pitch);
    c.skew = j.value("skew", c.skew);
    if (j.contains("principal_point")) c.principal_point = Vec2(j["principal_point"][0].get<double>(), j["principal_point"][1].get<double>());
    if (j.contains("radial")) {
      c.k1 = j["radial"][0].get<double>();
      c.k2 = j["radial"][1].get<double>();
    }
    if (j.contains("tangential")) {
      c.p1 = j["tangential"][0].get<double>();
      c.p2 = j["tangential"][1].get<double>();
    }
    if (j.contains("orientation")) {
      const auto& o = j["orientation"];
      c.orientation =
          ga::Rotor{o[0].get<double>(), o[1].get<double>(), o[2].get<double>(), o[3].get<double>()}.normalized();
    }
    if (j.contains("position")) c.position = Vec3(j["position"][0].get<double>(), j["position"][1].get<double>(), j["position"][2].get<double>());
    if (j.contains("size")) {
      c.width = j["size"][0].get<int>();
      c.height = j["size"][1].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("camera JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_json(const std::vector<DotDetection>& dets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : dets) arr.push_back({{"u", d.pixel.x()}, {"v", d.pixel.y()}, {"response", d.response}});
  return arr;
}

}  // namespace shellkin
