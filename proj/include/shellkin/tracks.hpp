#pragma once

// Point-track post-processing: temporal smoothing of each track by a sum of
// sinusoids, polynomial surface fitting over the convected coordinates, and
// assembly of a reference/spatial deformation at a chosen instant.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "json.hpp"
#include "shellkin/error.hpp"
#include "shellkin/kinematics.hpp"
#include "shellkin/surface.hpp"

namespace shellkin {

// ---------------------------------------------------------------------------
// Sinusoidal smoothing

struct SinusoidOptions {
  int n_terms = 8;
  bool phase = false;     // add a cosine partner to each term
  int max_sweeps = 30;
  double sweep_tolerance = 1e-4;  // stop when a sweep lowers the squared residual by less than this fraction
  int zero_pad = 8;       // spectrum oversampling for peak initialization
  double peak_floor = 1e-10;  // ignore peaks below this fraction of the largest
};

struct SinusoidTerm {
  double amplitude = 0.0;      // sine coefficient [mm]
  double omega = 0.0;          // [rad/s]
  double cos_amplitude = 0.0;  // phase mode only
};

/// y(t) = offset + sum_i A_i sin(w_i (t - t0)) [+ B_i cos(w_i (t - t0))].
struct SinusoidFit {
  double t0 = 0.0;
  double offset = 0.0;
  std::vector<SinusoidTerm> terms;
  double residual_rms = 0.0;

  double value(double t) const {
    double tau = t - t0, v = offset;
    for (const auto& k : terms) v += k.amplitude * std::sin(k.omega * tau) + k.cos_amplitude * std::cos(k.omega * tau);
    return v;
  }

  double derivative(double t) const {
    double tau = t - t0, v = 0.0;
    for (const auto& k : terms) {
      v += k.omega * (k.amplitude * std::cos(k.omega * tau) - k.cos_amplitude * std::sin(k.omega * tau));
    }
    return v;
  }
};

namespace detail {

// Frequencies (rad/s) of the strongest local maxima of the Hann-windowed,
// zero-padded power spectrum, strongest first, ties broken by lower
// frequency. The window keeps sidelobes of a strong term from outranking a
// weak one.
inline std::vector<double> spectral_peaks(std::span<const double> y, double dt, int count, int pad,
                                          double floor) {
  std::size_t n = y.size();
  std::size_t m = 1;
  while (m < n * static_cast<std::size_t>(pad)) m <<= 1;
  std::vector<double> buf(m, 0.0);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    buf[i] = w * (y[i] - mean);
  }
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, buf);
  std::vector<double> power(m / 2 + 1);
  double pmax = 0.0;
  for (std::size_t k = 0; k < power.size(); ++k) {
    power[k] = std::norm(spec[k]);
    pmax = std::max(pmax, power[k]);
  }
  std::vector<std::pair<double, std::size_t>> peaks;
  if (pmax <= 0.0) return {};
  for (std::size_t k = 1; k + 1 < power.size(); ++k) {
    if (power[k] > power[k - 1] && power[k] >= power[k + 1] && power[k] > floor * pmax) peaks.emplace_back(power[k], k);
  }
  std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<double> out;
  for (std::size_t i = 0; i < peaks.size() && static_cast<int>(i) < count; ++i) {
    out.push_back(2.0 * std::numbers::pi * static_cast<double>(peaks[i].second) / (static_cast<double>(m) * dt));
  }
  return out;
}

// Linear least squares for offset and amplitudes at fixed frequencies.
inline void solve_amplitudes(std::span<const double> tau, std::span<const double> y, SinusoidFit& fit, bool phase) {
  const int per = phase ? 2 : 1;
  const int cols = 1 + per * static_cast<int>(fit.terms.size());
  Eigen::MatrixXd a(tau.size(), cols);
  Eigen::VectorXd b(tau.size());
  for (std::size_t r = 0; r < tau.size(); ++r) {
    a(r, 0) = 1.0;
    for (std::size_t k = 0; k < fit.terms.size(); ++k) {
      a(r, 1 + per * k) = std::sin(fit.terms[k].omega * tau[r]);
      if (phase) a(r, 2 + per * k) = std::cos(fit.terms[k].omega * tau[r]);
    }
    b(r) = y[r];
  }
  Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  fit.offset = x(0);
  for (std::size_t k = 0; k < fit.terms.size(); ++k) {
    fit.terms[k].amplitude = x(1 + per * k);
    fit.terms[k].cos_amplitude = phase ? x(2 + per * k) : 0.0;
  }
}

inline double sum_squares(std::span<const double> tau, std::span<const double> y, const SinusoidFit& fit) {
  double s = 0.0;
  for (std::size_t r = 0; r < tau.size(); ++r) {
    double e = y[r] - fit.value(fit.t0 + tau[r]);
    s += e * e;
  }
  return s;
}

}  // namespace detail

/// Fits offset + sum of n_terms sinusoids. Frequencies start at the largest
/// spectral peaks and are refined one at a time (1D Brent search, amplitude
/// of the refined term re-solved in closed form against the partial
/// residual), alternating with a full linear solve for all amplitudes.
inline SinusoidFit fit_sinusoids(std::span<const double> t, std::span<const double> y,
                                 const SinusoidOptions& opts = {}) {
  if (t.size() != y.size()) throw InvalidArgument("fit_sinusoids: time and value lengths differ");
  if (opts.n_terms < 0) throw InvalidArgument("fit_sinusoids: negative term count");
  if (t.size() < static_cast<std::size_t>(16 * std::max(opts.n_terms, 1))) {
    throw InvalidArgument(fmt::format("fit_sinusoids: {} samples is fewer than 16 per term ({} terms)", t.size(),
                                      opts.n_terms));
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw InvalidArgument("fit_sinusoids: timestamps must be strictly increasing");
  }
  SinusoidFit fit;
  fit.t0 = t.front();
  std::vector<double> tau(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) tau[i] = t[i] - fit.t0;
  const double span = tau.back();
  const double dt = span / static_cast<double>(t.size() - 1);

  for (double w : detail::spectral_peaks(y, dt, opts.n_terms, opts.zero_pad, opts.peak_floor)) {
    fit.terms.push_back({0.0, w, 0.0});
  }
  if (fit.terms.empty()) {
    // Constant signal: the mean reproduces it.
    double mean = 0.0;
    for (double v : y) mean += v;
    fit.offset = mean / static_cast<double>(y.size());
    fit.residual_rms = std::sqrt(detail::sum_squares(tau, y, fit) / static_cast<double>(y.size()));
    return fit;
  }
  detail::solve_amplitudes(tau, y, fit, opts.phase);
  double sse = detail::sum_squares(tau, y, fit);

  const double bin = 2.0 * std::numbers::pi / span;  // unpadded resolution
  const double nyquist = std::numbers::pi / dt;
  std::vector<double> partial(y.size());
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (std::size_t k = 0; k < fit.terms.size(); ++k) {
      SinusoidTerm& term = fit.terms[k];
      for (std::size_t r = 0; r < y.size(); ++r) {
        partial[r] = y[r] - fit.value(t[r]) + term.amplitude * std::sin(term.omega * tau[r]) +
                     term.cos_amplitude * std::cos(term.omega * tau[r]);
      }
      // Bracket: one bin either side, never crossing a neighbouring term.
      double lo = std::max(term.omega - bin, 1e-3 * bin), hi = std::min(term.omega + bin, nyquist);
      for (std::size_t j = 0; j < fit.terms.size(); ++j) {
        if (j == k) continue;
        double mid = 0.5 * (fit.terms[j].omega + term.omega);
        if (fit.terms[j].omega < term.omega) lo = std::max(lo, mid);
        else hi = std::min(hi, mid);
      }
      if (!(hi > lo)) continue;
      auto one_term = [&](double w, double& a_sin, double& a_cos) {
        // Least squares of partial against sin (and cos) at frequency w.
        double ss = 0, sc = 0, cc = 0, ps = 0, pc = 0;
        for (std::size_t r = 0; r < y.size(); ++r) {
          double s = std::sin(w * tau[r]), c = std::cos(w * tau[r]);
          ss += s * s;
          sc += s * c;
          cc += c * c;
          ps += partial[r] * s;
          pc += partial[r] * c;
        }
        if (opts.phase) {
          double det = ss * cc - sc * sc;
          a_sin = det > 0 ? (ps * cc - pc * sc) / det : 0.0;
          a_cos = det > 0 ? (pc * ss - ps * sc) / det : 0.0;
        } else {
          a_sin = ss > 0 ? ps / ss : 0.0;
          a_cos = 0.0;
        }
        double e = 0.0;
        for (std::size_t r = 0; r < y.size(); ++r) {
          double d = partial[r] - a_sin * std::sin(w * tau[r]) - a_cos * std::cos(w * tau[r]);
          e += d * d;
        }
        return e;
      };
      auto objective = [&](double w) {
        double s, c;
        return one_term(w, s, c);
      };
      auto best = boost::math::tools::brent_find_minima(objective, lo, hi, 40);
      double current = objective(term.omega);
      if (best.second < current) {
        term.omega = best.first;
        one_term(term.omega, term.amplitude, term.cos_amplitude);
      }
    }
    detail::solve_amplitudes(tau, y, fit, opts.phase);
    double next = detail::sum_squares(tau, y, fit);
    bool converged = sse - next <= opts.sweep_tolerance * sse;
    sse = std::min(sse, next);
    if (converged) break;
  }
  std::sort(fit.terms.begin(), fit.terms.end(), [](const auto& a, const auto& b) { return a.omega < b.omega; });
  fit.residual_rms = std::sqrt(sse / static_cast<double>(y.size()));
  return fit;
}

// ---------------------------------------------------------------------------
// Tracks

/// One material point: convected labels, samples over time, and its position
/// on the unstrained surface.
struct PointTrack {
  int id = 0;
  double x1 = 0.0;
  double x2 = 0.0;
  std::vector<double> t;
  std::vector<Vec3> p;
  Vec3 reference = Vec3::Zero();

  void validate() const {
    if (t.size() != p.size()) throw InvalidArgument(fmt::format("track {}: time and position counts differ", id));
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (!(t[i] > t[i - 1])) throw InvalidArgument(fmt::format("track {}: timestamps not strictly increasing", id));
    }
  }
};

struct TrackFit {
  int id = 0;
  double x1 = 0.0;
  double x2 = 0.0;
  Vec3 reference = Vec3::Zero();
  std::array<SinusoidFit, 3> component;

  Vec3 position(double t) const { return {component[0].value(t), component[1].value(t), component[2].value(t)}; }
  Vec3 velocity(double t) const {
    return {component[0].derivative(t), component[1].derivative(t), component[2].derivative(t)};
  }
  double residual_rms() const {
    double s = 0.0;
    for (const auto& c : component) s += c.residual_rms * c.residual_rms;
    return std::sqrt(s / 3.0);
  }
};

inline TrackFit fit_track(const PointTrack& track, const SinusoidOptions& opts = {}) {
  track.validate();
  TrackFit out{track.id, track.x1, track.x2, track.reference, {}};
  std::vector<double> y(track.p.size());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = track.p[i][c];
    out.component[c] = fit_sinusoids(track.t, y, opts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Polynomial surfaces

struct SurfacePoint {
  double x1 = 0.0;
  double x2 = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Monomial sets for the surface fit. `per_coordinate` holds x1^p x2^q with
/// p, q <= d; `total` holds p + q <= d, which is closed under any affine
/// relabelling of (x1, x2), not only per-axis ones.
enum class PolyBasis { per_coordinate, total };

/// x(x1, x2) as three polynomials, stored in centred and scaled coordinates
/// u = (x1 - c1)/s1, v = (x2 - c2)/s2.
class PolySurface {
 public:
  static PolySurface fit(std::span<const SurfacePoint> points, int degree, PolyBasis basis = PolyBasis::per_coordinate,
                         std::optional<Domain> domain = {}, double max_condition = 1e8) {
    if (degree < 1) throw InvalidArgument("fit_surface: degree must be at least 1");
    PolySurface s;
    s.degree_ = degree;
    s.basis_ = basis;
    for (int k = 0; k <= (basis == PolyBasis::total ? degree : 2 * degree); ++k) {
      for (int p = std::min(k, degree); p >= std::max(0, k - degree); --p) s.exponents_.emplace_back(p, k - p);
    }
    const std::size_t m = s.exponents_.size();
    if (points.size() < m) {
      throw RankDeficient(fmt::format("fit_surface: {} points for {} coefficients", points.size(), m));
    }
    double lo1 = points[0].x1, hi1 = lo1, lo2 = points[0].x2, hi2 = lo2;
    for (const auto& q : points) {
      lo1 = std::min(lo1, q.x1);
      hi1 = std::max(hi1, q.x1);
      lo2 = std::min(lo2, q.x2);
      hi2 = std::max(hi2, q.x2);
    }
    if (!(hi1 > lo1 && hi2 > lo2)) throw RankDeficient("fit_surface: coordinates do not span two dimensions");
    s.center_ = {0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)};
    s.scale_ = {0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2)};
    s.domain_ = domain.value_or(Domain{{lo1, lo2}, {hi1, hi2}, {false, false}});

    Eigen::MatrixXd a(points.size(), m);
    Eigen::MatrixXd b(points.size(), 3);
    for (std::size_t r = 0; r < points.size(); ++r) {
      double u = (points[r].x1 - s.center_[0]) / s.scale_[0];
      double v = (points[r].x2 - s.center_[1]) / s.scale_[1];
      for (std::size_t c = 0; c < m; ++c) a(r, c) = std::pow(u, s.exponents_[c].first) * std::pow(v, s.exponents_[c].second);
      b.row(r) = points[r].position.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    s.condition_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    if (!(s.condition_ < max_condition)) {
      throw RankDeficient(fmt::format("fit_surface: design matrix condition number {:.3g} exceeds {:.3g}",
                                      s.condition_, max_condition));
    }
    s.coef_ = svd.solve(b);
    Eigen::MatrixXd res = a * s.coef_ - b;
    s.residual_rms_ = std::sqrt(res.rowwise().squaredNorm().mean());
    return s;
  }

  int degree() const { return degree_; }
  PolyBasis basis() const { return basis_; }
  double residual_rms() const { return residual_rms_; }
  double condition_number() const { return condition_; }
  const Domain& domain() const { return domain_; }
  const std::vector<std::pair<int, int>>& exponents() const { return exponents_; }

  Jet jet(double x1, double x2) const {
    double u = (x1 - center_[0]) / scale_[0];
    double v = (x2 - center_[1]) / scale_[1];
    Jet j;
    for (std::size_t c = 0; c < exponents_.size(); ++c) {
      auto [p, q] = exponents_[c];
      Vec3 k = coef_.row(c).transpose();
      double up = ipow(u, p), vq = ipow(v, q);
      double du = p > 0 ? p * ipow(u, p - 1) : 0.0;
      double dv = q > 0 ? q * ipow(v, q - 1) : 0.0;
      double ddu = p > 1 ? p * (p - 1) * ipow(u, p - 2) : 0.0;
      double ddv = q > 1 ? q * (q - 1) * ipow(v, q - 2) : 0.0;
      j.x += up * vq * k;
      j.d1 += du * vq * k;
      j.d2 += up * dv * k;
      j.d11 += ddu * vq * k;
      j.d12 += du * dv * k;
      j.d22 += up * ddv * k;
    }
    const double s1 = scale_[0], s2 = scale_[1];
    j.d1 /= s1;
    j.d2 /= s2;
    j.d11 /= s1 * s1;
    j.d12 /= s1 * s2;
    j.d22 /= s2 * s2;
    return j;
  }

  Vec3 position(double x1, double x2) const { return jet(x1, x2).x; }

  Chart chart(std::string name = "polynomial") const {
    auto self = std::make_shared<const PolySurface>(*this);
    return Chart(
        std::move(name), domain_, [self](double a, double b) { return self->position(a, b); },
        [self](double a, double b) { return self->jet(a, b); });
  }

  /// Coefficients of x1^a x2^b in the original coordinates, one row per
  /// entry of exponents().
  Eigen::MatrixXd raw_coefficients() const {
    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(exponents_.size(), 3);
    std::map<std::pair<int, int>, std::size_t> index;
    for (std::size_t c = 0; c < exponents_.size(); ++c) index[exponents_[c]] = c;
    for (std::size_t c = 0; c < exponents_.size(); ++c) {
      auto [p, q] = exponents_[c];
      double norm = 1.0 / (ipow(scale_[0], p) * ipow(scale_[1], q));
      for (int a = 0; a <= p; ++a) {
        for (int b = 0; b <= q; ++b) {
          double w = norm * binomial(p, a) * ipow(-center_[0], p - a) * binomial(q, b) * ipow(-center_[1], q - b);
          raw.row(index.at({a, b})) += w * coef_.row(c);
        }
      }
    }
    return raw;
  }

 private:
  static double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  }
  static double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }

  int degree_ = 0;
  PolyBasis basis_ = PolyBasis::per_coordinate;
  std::vector<std::pair<int, int>> exponents_;
  std::array<double, 2> center_{};
  std::array<double, 2> scale_{1.0, 1.0};
  Domain domain_;
  Eigen::MatrixXd coef_;
  double residual_rms_ = 0.0;
  double condition_ = 1.0;
};

inline PolySurface fit_surface(std::span<const SurfacePoint> points, int degree = 4,
                               PolyBasis basis = PolyBasis::per_coordinate) {
  return PolySurface::fit(points, degree, basis);
}

/// Reference surface from the unstrained positions and spatial surface from
/// the smoothed positions at time t, on the shared label coordinates.
inline Deformation tracks_to_deformation(std::span<const TrackFit> tracks, double t, int degree = 4,
                                         PolyBasis basis = PolyBasis::per_coordinate) {
  std::vector<SurfacePoint> ref, spa;
  ref.reserve(tracks.size());
  spa.reserve(tracks.size());
  for (const TrackFit& tr : tracks) {
    ref.push_back({tr.x1, tr.x2, tr.reference});
    spa.push_back({tr.x1, tr.x2, tr.position(t)});
  }
  PolySurface r = fit_surface(ref, degree, basis);
  PolySurface s = PolySurface::fit(spa, degree, basis, r.domain());
  return {r.chart("reference-fit"), s.chart("spatial-fit")};
}

/// Samples tracks of material points. `motion(t, x1, x2)` is the spatial
/// position of the point with labels (x1, x2); positions are rounded to
/// multiples of `quantum` when it is positive.
inline std::vector<PointTrack> sample_tracks(const std::function<Vec3(double, double, double)>& motion,
                                             const std::function<Vec3(double, double)>& reference,
                                             std::span<const Vec2> labels, std::span<const double> times,
                                             double quantum = 0.0) {
  std::vector<PointTrack> out;
  int id = 0;
  for (const Vec2& l : labels) {
    PointTrack tr;
    tr.id = id++;
    tr.x1 = l.x();
    tr.x2 = l.y();
    tr.reference = reference(l.x(), l.y());
    tr.t.assign(times.begin(), times.end());
    for (double t : times) {
      Vec3 p = motion(t, l.x(), l.y());
      if (quantum > 0.0) p = (p / quantum).array().round().matrix() * quantum;
      tr.p.push_back(p);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV and JSON

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(where + ": not a number: '" + cell + "'");
  }
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

/// Reads `id,x1,x2,t,px,py,pz` samples and `id,x1,x2,px,py,pz` reference
/// positions. Rows of a track may appear in any order; they are sorted by t.
inline std::vector<PointTrack> read_tracks_csv(std::istream& samples, std::istream& reference,
                                               const std::string& samples_name = "tracks.csv",
                                               const std::string& reference_name = "reference.csv") {
  auto header = [](std::istream& in, const std::string& name, const std::string& expected) {
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != expected) {
      throw InvalidArgument(name + ":1: expected header '" + expected + "'");
    }
  };
  std::map<int, PointTrack> tracks;
  std::map<int, bool> has_reference;
  header(samples, samples_name, "id,x1,x2,t,px,py,pz");
  std::string line;
  for (int lineno = 2; std::getline(samples, line); ++lineno) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::string where = samples_name + ":" + std::to_string(lineno);
    auto cells = detail::split_csv(line);
    if (cells.size() != 7) throw InvalidArgument(where + ": expected 7 fields, found " + std::to_string(cells.size()));
    int id = static_cast<int>(detail::parse_number(cells[0], where));
    double x1 = detail::parse_number(cells[1], where), x2 = detail::parse_number(cells[2], where);
    auto [it, fresh] = tracks.try_emplace(id);
    PointTrack& tr = it->second;
    if (fresh) {
      tr.id = id;
      tr.x1 = x1;
      tr.x2 = x2;
    } else if (tr.x1 != x1 || tr.x2 != x2) {
      throw InvalidArgument(where + ": labels of track " + std::to_string(id) + " change between rows");
    }
    tr.t.push_back(detail::parse_number(cells[3], where));
    tr.p.emplace_back(detail::parse_number(cells[4], where), detail::parse_number(cells[5], where),
                      detail::parse_number(cells[6], where));
  }
  header(reference, reference_name, "id,x1,x2,px,py,pz");
  for (int lineno = 2; std::getline(reference, line); ++lineno) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::string where = reference_name + ":" + std::to_string(lineno);
    auto cells = detail::split_csv(line);
    if (cells.size() != 6) throw InvalidArgument(where + ": expected 6 fields, found " + std::to_string(cells.size()));
    int id = static_cast<int>(detail::parse_number(cells[0], where));
    auto it = tracks.find(id);
    if (it == tracks.end()) throw InvalidArgument(where + ": reference for unknown track " + std::to_string(id));
    it->second.reference = Vec3(detail::parse_number(cells[3], where), detail::parse_number(cells[4], where),
                                detail::parse_number(cells[5], where));
    has_reference[id] = true;
  }
  std::vector<PointTrack> out;
  for (auto& [id, tr] : tracks) {
    if (!has_reference[id]) throw InvalidArgument(reference_name + ": no reference position for track " + std::to_string(id));
    std::vector<std::size_t> order(tr.t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return tr.t[a] < tr.t[b]; });
    PointTrack sorted{tr.id, tr.x1, tr.x2, {}, {}, tr.reference};
    for (auto i : order) {
      sorted.t.push_back(tr.t[i]);
      sorted.p.push_back(tr.p[i]);
    }
    sorted.validate();
    out.push_back(std::move(sorted));
  }
  return out;
}

inline void write_tracks_csv(std::ostream& samples, std::ostream& reference, std::span<const PointTrack> tracks) {
  samples << "id,x1,x2,t,px,py,pz\n";
  reference << "id,x1,x2,px,py,pz\n";
  for (const PointTrack& tr : tracks) {
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      samples << fmt::format("{},{:.6f},{:.6f},{:.8f},{:.6f},{:.6f},{:.6f}\n", tr.id, tr.x1, tr.x2, tr.t[i], tr.p[i].x(),
                             tr.p[i].y(), tr.p[i].z());
    }
    reference << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", tr.id, tr.x1, tr.x2, tr.reference.x(),
                             tr.reference.y(), tr.reference.z());
  }
}

inline nlohmann::ordered_json to_json(const SinusoidFit& f) {
  nlohmann::ordered_json j;
  j["t0"] = f.t0;
  j["offset"] = f.offset;
  j["residual_rms"] = f.residual_rms;
  auto& terms = j["terms"] = nlohmann::ordered_json::array();
  for (const auto& k : f.terms) {
    nlohmann::ordered_json t{{"amplitude", k.amplitude}, {"omega", k.omega}};
    if (k.cos_amplitude != 0.0) t["cos_amplitude"] = k.cos_amplitude;
    terms.push_back(t);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const TrackFit& f) {
  nlohmann::ordered_json j{{"id", f.id}, {"x1", f.x1}, {"x2", f.x2}};
  j["components"] = {to_json(f.component[0]), to_json(f.component[1]), to_json(f.component[2])};
  return j;
}

}  // namespace shellkin
