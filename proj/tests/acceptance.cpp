// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "random.hpp"
#include "shellkin/scenario.hpp"

using namespace shellkin;
namespace sc = shellkin::scenario;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass;
  std::string detail;
};

double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

sc::Scenario builtin(const std::string& name) {
  return sc::parse_scenario(sc::default_config(*sc::find_builtin(name)).dump());
}

// 1. Rotor and classical routes agree on the analytic scenarios at 50 x 50.
Outcome route_equivalence() {
  struct Case {
    const char* name;
    double length;  // 1/length is the curvature floor of the tolerance
  };
  bool pass = true;
  std::string detail;
  for (Case c : {Case{"sphere-inflate", 3.0}, Case{"plate-bend", 5.0}, Case{"tube-squash", 3.0}}) {
    sc::Scenario s = builtin(c.name);
    auto start = std::chrono::steady_clock::now();
    Deformation def = sc::detail::analytic_deformation(s);
    Grid2 grid(def.domain(), 50, 50);
    std::vector<KinematicState> states = evaluate_grid(def, grid);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double gap = 0.0, hmax = 0.0;
    int ambiguous = 0;
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 50; ++j) {
        if (!grid.interior(i, j)) continue;
        const KinematicState& st = states[grid.index(i, j)];
        if (st.branch_ambiguous) ++ambiguous;
        gap = std::max(gap, max_abs(st.h_rotor.h - st.h_classical));
        hmax = std::max(hmax, max_abs(st.h_classical));
      }
    }
    double tol = 1e-4 * std::max(hmax, 1.0 / c.length);
    bool ok = gap < tol && seconds < 10.0 && ambiguous == 0;
    pass = pass && ok;
    detail += fmt::format("{} gap {:.2e} < {:.2e}, {:.2f} s; ", c.name, gap, tol, seconds);
  }
  return {pass, detail};
}

// 2. Sphere inflation: no rotation term, H = ((R1 - R0)/R0^2) G.
Outcome sphere_litmus() {
  const double r0 = 3.0, r1 = 4.5, expect = (r1 - r0) / (r0 * r0);
  Deformation def = models::sphere_inflate(r0, r1);
  Grid2 grid(def.domain(), 50, 50);
  double rot = 0.0, err = 0.0;
  for (const KinematicState& st : evaluate_grid(def, grid)) {
    rot = std::max(rot, max_abs(st.h_rotor.rotation_term));
    err = std::max(err, max_abs(st.h_rotor.h - expect * Mat2::Identity()));
    err = std::max(err, max_abs(st.h_classical - expect * Mat2::Identity()));
  }
  return {rot < 1e-6 && err < 1e-6, fmt::format("max rotation term {:.2e} /mm, max |H - {:.4f} G| {:.2e} /mm", rot,
                                                expect, err)};
}

// 3. Rolled plate: (U - G)B vanishes, principal values of H are (1/rho, 0).
Outcome plate_litmus() {
  const double rho = 5.0;
  Deformation def = models::plate_roll(10.0, 10.0, rho);
  Grid2 grid(def.domain(), 50, 50);
  double strain_term = 0.0, err = 0.0;
  for (const KinematicState& st : evaluate_grid(def, grid)) {
    strain_term = std::max(strain_term, max_abs(st.h_rotor.strain_term));
    for (const Mat2& h : {st.h_rotor.h, st.h_classical}) {
      PrincipalDecomposition p = principal_decomposition(h);
      err = std::max({err, std::abs(p.values[0] - 1.0 / rho) * rho, std::abs(p.values[1]) * rho});
    }
  }
  return {strain_term == 0.0 && err < 1e-4,
          fmt::format("max |(U-G)B| {:.1e}, principal values relative error {:.2e}", strain_term, err)};
}

// 4. Closed-form scaling for the tube.
Outcome scaling() {
  ScalingReport r = scaling_estimates({3.0, 19.0, 25.0, {1.0, 0.5, 0.3}});
  bool s = std::abs(r.magnitude.stretching / 0.02 - 1.0) <= 0.25;
  bool b = std::abs(r.magnitude.bending / 1.5e-4 - 1.0) <= 0.25;
  bool q = r.ratio() >= 50.0 && r.ratio() <= 200.0;
  return {s && b && q, fmt::format("stretching {:.3g} N/mm, bending {:.3g} N/mm, ratio {:.0f} "
                                   "(unrounded traces: {:.3g}, {:.3g}, {:.0f})",
                                   r.magnitude.stretching, r.magnitude.bending, r.ratio(), r.raw.stretching,
                                   r.raw.bending, r.raw_ratio())};
}

// 5. Area-averaged traces on the squashed tube against the estimates.
Outcome direct_calculation() {
  sc::Scenario s = builtin("tube-squash");
  Deformation def = sc::detail::analytic_deformation(s);
  sc::FieldTable t = sc::evaluate_fields(def, 50, sc::detail::material(s));
  sc::OJ totals = sc::integrate(t);
  ScalingReport r = scaling_estimates({3.0, 19.0, 25.0, {}});
  double fe = totals["averages"]["trE2"].get<double>() / r.strain.tr_sq;
  double fh = totals["averages"]["trH2"].get<double>() / r.curvature.tr_sq;
  auto within = [](double f) { return f >= 1.0 / 3.0 && f <= 3.0; };
  return {within(fe) && within(fh),
          fmt::format("<trE2> {:.3f} = {:.2f} x estimate, <trH2> {:.3f} = {:.2f} x estimate",
                      totals["averages"]["trE2"].get<double>(), fe, totals["averages"]["trH2"].get<double>(), fh)};
}

// 6. Short tube, l0 = 2a = 6 mm.
Outcome short_tube() {
  const double a = 3.0, l0 = 6.0, l = l0 * 25.0 / 19.0;
  ScalingReport r = scaling_estimates({a, l0, l, {}});
  auto band = [a](double v) { return std::abs(v) >= 0.25 / a && std::abs(v) <= 4.0 / a; };
  bool estimates = band(r.d1theta1) && band(r.d1theta2) && band(r.d2theta2);
  bool ordering = r.magnitude.bending < r.magnitude.stretching && r.raw.bending < r.raw.stretching;
  Deformation def = models::tube_squash({a, l0, l, 0.7});
  Grid2 grid(def.domain(), 50, 50);
  double hmax = 0.0;
  for (const KinematicState& st : evaluate_grid(def, grid)) hmax = std::max(hmax, max_abs(st.h_classical));
  bool model = band(hmax);
  return {estimates && ordering && model,
          fmt::format("estimated H components ({:.3f}, {:.3f}, {:.3f}) /mm, model max |H| {:.3f} /mm, "
                      "band [{:.3f}, {:.3f}]; bending/stretching {:.2e}",
                      r.d1theta1, r.d1theta2, r.d2theta2, hmax, 0.25 / a, 4.0 / a, r.bend_to_stretch())};
}

// 7. Stereo pipeline on the synthetic tube, both states, ten seed draws.
Outcome stereo() {
  double worst_exact = 0.0, worst_quant = 0.0;
  std::size_t paired = 0, correct = 0, pairable = 0;
  for (double q : {0.0, 0.1}) {
    sc::Scenario s = builtin("stereo-synthetic");
    s.set("quantization", q);
    auto cams = sc::detail::cameras(s);
    DotPattern pattern = sc::detail::stereo_pattern(s);
    Deformation model = models::tube_squash(sc::detail::tube(s));
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      std::mt19937_64 rng(seed);
      for (const Chart* chart : {&model.reference(), &model.spatial()}) {
        sc::detail::StereoState st = sc::detail::reconstruct(cams, *chart, pattern, s, rng);
        (q == 0.0 ? worst_exact : worst_quant) = std::max(q == 0.0 ? worst_exact : worst_quant, st.rms);
        paired += st.pairs;
        correct += st.correct;
        pairable += st.truth_pairs;
      }
    }
  }
  bool pass = worst_exact < 0.05 && worst_quant <= 0.15 && correct == paired && correct == pairable;
  return {pass, fmt::format("RMS exact {:.3f} mm (< 0.05), quantized 0.1 mm {:.3f} mm (<= 0.15); "
                            "pairing {}/{} correct of {} pairable over both",
                            worst_exact, worst_quant, correct, paired, pairable)};
}

// 8. Derivative of the sinusoid fit vs central differences of quantized data.
Outcome smoothing() {
  const double amp[] = {1.2, 0.8, 2.0, 0.6, 0.9, 0.4, 0.5, 0.3};
  const double hz[] = {130, 270, 500, 640, 820, 1010, 1330, 1720};
  std::vector<double> t, y;
  for (int k = 0; k < 1250; ++k) {
    t.push_back(k / 12500.0);
    double v = 0.0;
    for (int n = 0; n < 8; ++n) v += amp[n] * std::sin(2 * kPi * hz[n] * t.back());
    y.push_back(std::round(v / 0.1) * 0.1);
  }
  SinusoidFit fit = fit_sinusoids(t, y);
  double fd = 0.0, smooth = 0.0;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    double truth = 0.0;
    for (int n = 0; n < 8; ++n) truth += 2 * kPi * hz[n] * amp[n] * std::cos(2 * kPi * hz[n] * t[i]);
    double raw = (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]);
    fd += (raw - truth) * (raw - truth);
    smooth += (fit.derivative(t[i]) - truth) * (fit.derivative(t[i]) - truth);
  }
  double n = static_cast<double>(t.size() - 2), ratio = std::sqrt(fd / smooth);
  return {ratio >= 10.0, fmt::format("RMS rate error: finite differences {:.1f} mm/s, fit {:.2f} mm/s, ratio {:.0f}",
                                     std::sqrt(fd / n), std::sqrt(smooth / n), ratio)};
}

// 9. Property suites on random inputs.
Outcome properties() {
  testgen::Gen gen(9);
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* what) {
    if (!ok && std::find(failed.begin(), failed.end(), what) == failed.end()) failed.emplace_back(what);
  };
  for (int trial = 0; trial < 200; ++trial) {
    ga::Multivector a = gen.multivector(), b = gen.multivector(), c = gen.multivector();
    check(((a * (b * c)) - ((a * b) * c)).norm() < 1e-10, "associativity");
    check(((a * b).reverse() - b.reverse() * a.reverse()).norm() < 1e-10, "reverse of product");
    Vec3 u = gen.vec3(), v = gen.vec3();
    auto mu = ga::Multivector::vector(u), mv = ga::Multivector::vector(v);
    check((mu * mv - (ga::inner(mu, mv) + ga::outer(mu, mv))).norm() < 1e-12, "uv = u.v + u^v");

    Rotor r = gen.rotor();
    check(std::abs((r * r.reverse()).s - 1.0) < 1e-12, "rotor normalisation");
    ga::RotorLog l = ga::rotor_log(r);
    check((ga::rotation_matrix(ga::rotor_exp(l.a)) - ga::rotation_matrix(r)).cwiseAbs().maxCoeff() < 1e-10,
          "exp(log R)");
    ga::Bivector bv = gen.bivector(1.0);
    check((ga::rotor_log(ga::rotor_exp(bv)).a - bv).norm() < 1e-10, "log(exp B)");

    std::array<Vec3, 2> basis{ga::apply_rotor(r, Vec3::UnitX()), ga::apply_rotor(r, Vec3::UnitY())};
    Vec3 normal = ga::apply_rotor(r, Vec3::UnitZ());
    Mat2 stretch;
    double off = gen.uniform(-0.3, 0.3);
    stretch << gen.uniform(0.5, 2.0), off, off, gen.uniform(0.5, 2.0);
    Rotor q = gen.rotor();
    std::array<Vec3, 2> image;
    for (int k = 0; k < 2; ++k) image[k] = ga::apply_rotor(q, stretch(0, k) * basis[0] + stretch(1, k) * basis[1]);
    PolarDecomposition pd = polar_decompose(TangentMap::from_images(basis, normal, image));
    for (int k = 0; k < 2; ++k) {
      Vec3 uk = pd.stretch(0, k) * basis[0] + pd.stretch(1, k) * basis[1];
      check((ga::apply_rotor(pd.rotor, uk) - image[k]).norm() < 1e-9, "polar reconstruction");
    }

    Mat2 e, h;
    double eo = gen.uniform(-1, 1), ho = gen.uniform(-1, 1);
    e << gen.uniform(-1, 1), eo, eo, gen.uniform(-1, 1);
    h << gen.uniform(-1, 1), ho, ho, gen.uniform(-1, 1);
    PrincipalDecomposition pe = principal_decomposition(e);
    TraceInvariants te = trace_invariants(e), tv = trace_invariants_from_eigenvalues(pe.values[0], pe.values[1]);
    check(std::abs(te.tr_sq - tv.tr_sq) < 1e-12 && std::abs(te.sq_tr - tv.sq_tr) < 1e-12, "trace identities");
    EnergyDensity d = koiter_density(e, h, {gen.uniform(0.1, 5), gen.uniform(0.0, 0.5), gen.uniform(0.05, 1)});
    check(d.stretching >= 0.0 && d.bending >= 0.0, "energy non-negative");
  }
  for (int trial = 0; trial < 30; ++trial) {
    Chart ref = trial % 2 ? make_cylinder(3.0, 10.0) : make_sphere(3.0);
    Chart spa = testgen::perturbed(ref, gen, 0.3, gen.uniform(0.8, 1.4), ga::rotation_matrix(gen.rotor()));
    Deformation def(ref, spa);
    Vec2 x = testgen::interior_point(ref.domain(), gen);
    KinematicState st = kinematic_state(def, x.x(), x.y());
    check(std::abs(st.h_rotor.h(0, 1) - st.h_rotor.h(1, 0)) < 1e-6, "H symmetry");
    for (int i = 0; i < 2; ++i) {
      check((st.f.adjoint(st.spatial.reciprocal[i]) - st.reference.reciprocal[i]).norm() < 1e-9, "adjoint frames");
    }
    Jet ja = spa.jet(x.x(), x.y()), jf = spa.with_mode(DerivativeMode::finite_difference).jet(x.x(), x.y());
    double scale = std::max(1.0, ja.x.norm());
    for (auto [p, q2] : {std::pair{ja.d1, jf.d1}, {ja.d2, jf.d2}, {ja.d11, jf.d11}, {ja.d12, jf.d12}, {ja.d22, jf.d22}}) {
      check((p - q2).cwiseAbs().maxCoeff() / scale < 1e-5, "analytic vs finite difference");
    }
  }
  std::string detail = "algebra, rotor exp/log, polar, traces, energy, H symmetry, adjoint frames, derivatives";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria{{1, "route equivalence", route_equivalence},
                                  {2, "sphere inflation", sphere_litmus},
                                  {3, "rolled plate", plate_litmus},
                                  {4, "scaling estimates", scaling},
                                  {5, "direct calculation vs scaling", direct_calculation},
                                  {6, "short tube", short_tube},
                                  {7, "stereo pipeline", stereo},
                                  {8, "smoothing necessity", smoothing},
                                  {9, "property suites", properties}};
  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str());
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
