#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cqed/bifurcation.hpp"
#include "cqed/error.hpp"
#include "oracles.hpp"

using namespace cqed;

namespace {

const DimensionlessParams kBistable = presets::absorptive_bistability();
const DimensionlessParams kSupercritical = presets::supercritical_hopf();
const DimensionlessParams kSubcritical = presets::subcritical_hopf();

struct Draw {
  DimensionlessParams d;
  BranchPoint bp;
};

Draw random_draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0, 300), k(0.01, 2), g(0.05, 2),
      th(-600, 600), de(-5, 5), xm(0, 15);
  DimensionlessParams d{c(rng), k(rng), g(rng), th(rng), de(rng), 0};
  auto bp = branch_point_at_amplitude(d, xm(rng));
  d.y = bp.y;
  return {d, bp};
}

// Elementary symmetric functions of |lambda|: a rounding scale for the
// coefficients reconstructed from a numerical spectrum.
std::array<double, 5> coeff_scale(const std::array<cplx, 5>& ev) {
  std::array<cplx, 5> mags;
  for (int i = 0; i < 5; ++i) mags[i] = -std::abs(ev[i]);
  const auto p = oracle::poly_from_roots(mags);
  return {p[0].real(), p[1].real(), p[2].real(), p[3].real(), p[4].real()};
}

std::array<cplx, 5> numerical_spectrum(const Jacobian5& j) {
  Eigen::ComplexEigenSolver<Jacobian5> es(j, false);
  std::array<cplx, 5> ev;
  for (int i = 0; i < 5; ++i) ev[i] = es.eigenvalues()(i);
  return ev;
}

bool closed_under_conjugation(std::array<cplx, 5> ev, double tol) {
  std::vector<bool> used(5, false);
  for (int i = 0; i < 5; ++i) {
    bool found = false;
    for (int j = 0; j < 5 && !found; ++j) {
      if (!used[j] && std::abs(ev[j] - std::conj(ev[i])) <= tol * (1 + std::abs(ev[i]))) {
        used[j] = found = true;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

TEST(Jacobian, Trace) {
  const auto bp = branch_point_at_amplitude(kBistable, 3.0);
  const cplx tr = jacobian(kBistable.with_drive(bp.y), bp).trace();
  EXPECT_NEAR(tr.real(), -4.2, 1e-14);
  EXPECT_NEAR(tr.imag(), 0.0, 1e-14);
}

TEST(Jacobian, VacuumSpectrum) {
  auto nearest = [](const std::array<cplx, 5>& ev, cplx w) {
    double best = 1e300;
    for (const auto& e : ev) best = std::min(best, std::abs(e - w));
    return best;
  };
  // Empty cavity: the field and atom blocks decouple completely.
  DimensionlessParams d{0, 0.3, 1.5, 4, -2, 0};
  auto ev = numerical_spectrum(jacobian(d, MBState{0.0, 0.0, 1.0}));
  for (cplx w : {cplx(-0.3, -1.2), cplx(-0.3, 1.2), cplx(-1, 2), cplx(-1, -2), cplx(-1.5, 0)})
    EXPECT_LT(nearest(ev, w), 1e-12) << w;

  // With coupling only the inversion decouples; the field-polarization block
  // [[-k(1+i Theta), -2Ck], [1, -(1+i Delta)]] gives the rest.
  d.cooperativity = 17;
  ev = numerical_spectrum(jacobian(d, MBState{0.0, 0.0, 1.0}));
  EXPECT_LT(nearest(ev, -1.5), 1e-12);
  for (double sgn : {1.0, -1.0}) {
    const cplx a = -d.k * cplx(1, d.theta), c = -cplx(1, d.delta);
    const cplx disc = std::sqrt((a - c) * (a - c) - 4.0 * 2.0 * d.cooperativity * d.k);
    const cplx w = 0.5 * (a + c + sgn * disc);
    EXPECT_LT(nearest(ev, w), 1e-10) << w;
    EXPECT_LT(nearest(ev, std::conj(w)), 1e-10) << w;
  }
}

TEST(Jacobian, ConjugationSymmetry) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 20; ++n) {
    const auto dr = random_draw(rng);
    const Jacobian5 j = jacobian(dr.d, dr.bp);
    const int swap[5] = {1, 0, 3, 2, 4};
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c)
        EXPECT_NEAR(std::abs(j(swap[r], swap[c]) - std::conj(j(r, c))), 0.0, 1e-14);
  }
}

TEST(Jacobian, SpectrumMatchesRealLinearization) {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 50; ++n) {
    const auto dr = random_draw(rng);
    const auto ev = numerical_spectrum(jacobian(dr.d, dr.bp));
    const auto z0 = oracle::to_real_coords(dr.bp.x_ss, dr.bp.p_ss, dr.bp.d_ss);
    Eigen::EigenSolver<oracle::RMat5> es(oracle::real_jacobian(dr.d, z0), false);
    for (int i = 0; i < 5; ++i) {
      const cplx w = es.eigenvalues()(i);
      double best = 1e300;
      for (const auto& e : ev) best = std::min(best, std::abs(e - w));
      EXPECT_LT(best, 1e-8 * std::max(1.0, std::abs(w))) << "draw " << n;
    }
  }
}

TEST(CharCoeffs, VacuumA5AndA1) {
  const auto c = char_coeffs(kBistable, 0.0);
  EXPECT_NEAR(c.a5, 2.0 * 0.01 * 21.0 * 21.0, 1e-12);
  EXPECT_NEAR(c.a5, 8.82, 1e-12);
  EXPECT_EQ(char_coeffs({1, 0.05, 2, 3, 4, 0}, cplx(1, 2)).a1, 4.1);
}

TEST(CharCoeffsProperty, DeterminantIdentity) {
  std::mt19937_64 rng(8);
  for (int n = 0; n < 50; ++n) {
    const auto dr = random_draw(rng);
    const double a5 = char_coeffs(dr.d, dr.bp.x_ss).a5;
    const cplx det = jacobian(dr.d, dr.bp).determinant();
    EXPECT_NEAR(a5, -det.real(), 1e-8 * std::max(1.0, std::abs(det))) << "draw " << n;
    EXPECT_NEAR(det.imag(), 0.0, 1e-8 * std::max(1.0, std::abs(det)));
  }
}

TEST(CharCoeffsProperty, PolynomialConsistency) {
  std::mt19937_64 rng(16);
  for (int n = 0; n < 200; ++n) {
    const auto dr = random_draw(rng);
    const auto c = char_coeffs(dr.d, dr.bp.x_ss).as_array();
    const auto ev = numerical_spectrum(jacobian(dr.d, dr.bp));
    const auto poly = oracle::poly_from_roots(ev);
    const auto scale = coeff_scale(ev);
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(c[i], poly[i].real(), 1e-8 * std::max(1.0, scale[i]))
          << "draw " << n << " a" << i + 1;
    }
    EXPECT_TRUE(closed_under_conjugation(ev, 1e-8));
  }
}

TEST(Stability, Verdicts) {
  const auto mid = steady_states(kBistable.with_drive(10.0))[1];
  EXPECT_FALSE(mid.stable);
  EXPECT_LT(mid.indicators.a5, 0.0);
  const auto up = steady_states(kBistable.with_drive(12.0))[0];
  EXPECT_TRUE(up.stable);
  std::mt19937_64 rng(6);
  for (int n = 0; n < 20; ++n) {
    auto d = random_draw(rng).d;
    d.y = 0.0;
    EXPECT_TRUE(stability(d, MBState{0.0, 0.0, 1.0}).stable);
  }
}

TEST(SaddleNodes, AbsorptiveFolds) {
  const auto sn = find_saddle_nodes(kBistable, {});
  ASSERT_EQ(sn.size(), 2u);
  std::vector<double> ys = {sn[0].y_c, sn[1].y_c};
  std::sort(ys.begin(), ys.end());
  EXPECT_NEAR(ys[0], 8.7, 0.1);
  EXPECT_NEAR(ys[1], 11.1, 0.1);
  for (const auto& s : sn) {
    const double a5 = char_coeffs(kBistable, s.x_ss).a5;
    EXPECT_LT(std::abs(a5), 1e-8 * char_coeffs(kBistable, 0.0).a5);
  }
}

TEST(SaddleNodes, NoneWithoutOrBelowThreshold) {
  EXPECT_TRUE(find_saddle_nodes({0, 0.1, 2, 0, 0, 0}, {}).empty());
  const DimensionlessParams weak{1, 0.1, 2, 0, 0, 0};
  // Oracle: y^2 is monotone in |x|^2 on a dense grid.
  double prev = 0.0;
  for (int i = 1; i <= 20000; ++i) {
    const double y = oracle::drive_from_fixed_point(weak, 10.0 * i / 20000);
    ASSERT_GT(y, prev);
    prev = y;
  }
  EXPECT_TRUE(find_saddle_nodes(weak, {}).empty());
}

TEST(Hopf, SupercriticalPair) {
  const auto scan = find_hopf(kSupercritical, {});
  ASSERT_EQ(scan.points.size(), 2u);
  const auto& cp1 = scan.points[0];
  const auto& cp2 = scan.points[1];
  EXPECT_GT(cp1.y_c, 1000.0);
  EXPECT_LT(cp1.y_c, 2800.0);
  EXPECT_GT(cp2.y_c, 2800.0);
  EXPECT_LT(cp2.y_c, 5000.0);
  for (const auto& h : scan.points) {
    EXPECT_LT(h.eta3, 0.0);
    EXPECT_EQ(h.criticality, Criticality::Supercritical);
    EXPECT_GT(h.omega, 100.0 * kSupercritical.k);
    for (const auto& l : h.lambda_rest) EXPECT_LT(l.real(), 0.0);
  }
}

TEST(Hopf, SuperThenSubcritical) {
  const auto scan = find_hopf(kSubcritical, {});
  ASSERT_EQ(scan.points.size(), 2u);
  EXPECT_LT(scan.points[0].eta3, 0.0);
  EXPECT_GT(scan.points[1].eta3, 0.0);
  EXPECT_EQ(scan.points[1].criticality, Criticality::Subcritical);
}

TEST(Hopf, EmptyCavityHasNone) {
  EXPECT_TRUE(find_hopf({0, 0.01, 2, -600, 1.25, 0}, {}).points.empty());
}

TEST(Hopf, FrequencyMatchesEigensolve) {
  for (const auto& base : {kSupercritical, kSubcritical}) {
    for (const auto& h : find_hopf(base, {}).points) {
      const auto ev = numerical_spectrum(jacobian(base.with_drive(h.y_c),
                                                  branch_point_at_amplitude(base, h.x_mag)));
      double im = 0.0, best = 1e300;
      for (const auto& e : ev) {
        if (e.imag() > 0 && std::abs(e.real()) < best) {
          best = std::abs(e.real());
          im = e.imag();
        }
      }
      EXPECT_NEAR(h.omega, im, 1e-6 * im);
      EXPECT_LT(std::abs(char_coeffs(base, h.x_ss).f),
                1e-6 * std::abs(char_coeffs(base, h.x_ss).a3 * char_coeffs(base, h.x_ss).a4));
    }
  }
}

TEST(Hopf, FirstFSignChangeIsFirstCrossing) {
  const auto scan = find_hopf(kSupercritical, {});
  ASSERT_FALSE(scan.points.empty());
  const double step = (10.0 - 1e-6) / 1999.0;
  double first_unstable = -1.0;
  for (int i = 0; i < 2000 && first_unstable < 0; ++i) {
    const double x = 1e-6 + i * step;
    const auto bp = branch_point_at_amplitude(kSupercritical, x);
    if (!stability(kSupercritical.with_drive(bp.y), bp).stable) first_unstable = x;
  }
  EXPECT_NEAR(first_unstable, scan.points[0].x_mag, step);
}

TEST(HopfFrequency, SyntheticQuintic) {
  // (l^2 + 4)(l + 1)(l + 2)(l + 3)
  const std::array<cplx, 5> roots = {cplx(0, 2), cplx(0, -2), -1.0, -2.0, -3.0};
  const auto p = oracle::poly_from_roots(roots);
  CharCoeffs c{p[0].real(), p[1].real(), p[2].real(), p[3].real(), p[4].real(), 0};
  c.f = hopf_indicator(c.a1, c.a2, c.a3, c.a4, c.a5);
  EXPECT_NEAR(c.f, 0.0, 1e-9);
  const auto hf = hopf_frequency(c);
  EXPECT_NEAR(hf.omega, 2.0, 1e-14);
  auto rest = residual_eigenvalues(c, hf.omega);
  std::sort(rest.begin(), rest.end(), [](cplx a, cplx b) { return a.real() > b.real(); });
  EXPECT_NEAR(std::abs(rest[0] - cplx(-1)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(rest[1] - cplx(-2)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(rest[2] - cplx(-3)), 0.0, 1e-12);
}

TEST(HopfFrequency, Degenerate) {
  EXPECT_THROW(hopf_frequency({1, 1, 1, 1, 1, 0}), NumericError);   // a1 a2 = a3
  EXPECT_THROW(hopf_frequency({1, 2, 1, 0.5, 1, 0}), NumericError);  // omega^2 < 0
}

TEST(ResidualEigenvalues, ConjugatePairFromCubic) {
  // (l^2 + 9)(l + 0.5)(l^2 + 2 l + 26)
  const std::array<cplx, 5> roots = {cplx(0, 3), cplx(0, -3), -0.5, cplx(-1, 5), cplx(-1, -5)};
  const auto p = oracle::poly_from_roots(roots);
  const CharCoeffs c{p[0].real(), p[1].real(), p[2].real(), p[3].real(), p[4].real(), 0};
  const auto rest = residual_eigenvalues(c, hopf_frequency(c).omega);
  int real_count = 0;
  for (const auto& l : rest) {
    if (l.imag() == 0.0) ++real_count;
    const bool has_conj = std::any_of(rest.begin(), rest.end(),
                                      [&](cplx o) { return o == std::conj(l); });
    EXPECT_TRUE(has_conj);
    const double err = std::min({std::abs(l - roots[2]), std::abs(l - roots[3]),
                                 std::abs(l - roots[4])});
    EXPECT_LT(err, 1e-12);
  }
  EXPECT_EQ(real_count, 1);
}

TEST(Eigenvectors, ResidualAndInverse) {
  std::mt19937_64 rng(12);
  int checked = 0;
  while (checked < 50) {
    const auto dr = random_draw(rng);
    if (dr.d.cooperativity < 1e-3 || std::abs(dr.bp.x_ss) < 1e-3) continue;
    const auto st = stability(dr.d, dr.bp);
    if (!st.stable) continue;
    const Jacobian5 j = jacobian(dr.d, dr.bp);
    EigenBasis basis;
    try {
      basis = eigenvectors(dr.d, dr.bp.x_ss, st.eigenvalues);
    } catch (const NumericError&) {
      continue;  // ill-conditioned draw, caller must perturb
    }
    for (int i = 0; i < 5; ++i) {
      const auto a = basis.alpha.col(i);
      const double res = (j * a - st.eigenvalues[i] * a).norm();
      EXPECT_LE(res, 1e-8 * a.norm() * std::max(1.0, j.norm())) << "draw " << checked;
    }
    EXPECT_LT((basis.beta * basis.alpha - Jacobian5::Identity()).norm(), 1e-10 * basis.condition);
    ++checked;
  }
}

TEST(Eigenvectors, HopfPairIsSwappedConjugate) {
  const auto h = find_hopf(kSubcritical, {}).points.at(0);
  const auto d = kSubcritical.with_drive(h.y_c);
  const std::array<cplx, 5> l = {cplx(0, h.omega), cplx(0, -h.omega), h.lambda_rest[0],
                                 h.lambda_rest[1], h.lambda_rest[2]};
  const auto basis = eigenvectors(d, h.x_ss, l);
  const int swap[5] = {1, 0, 3, 2, 4};
  for (int r = 0; r < 5; ++r)
    EXPECT_LT(std::abs(basis.alpha(r, 1) - std::conj(basis.alpha(swap[r], 0))), 1e-12);
}

TEST(Eta3, MatchesProjectionOracle) {
  for (const auto& base : {kSupercritical, kSubcritical}) {
    for (const auto& h : find_hopf(base, {}).points) {
      const auto d = base.with_drive(h.y_c);
      const auto bp = branch_point_at_amplitude(base, h.x_mag);
      const double want = oracle::re_c1(d, oracle::to_real_coords(bp.x_ss, bp.p_ss, bp.d_ss),
                                        h.omega);
      EXPECT_NEAR(h.eta3, want, 1e-6 * std::abs(want)) << "y_c = " << h.y_c;
    }
  }
}

TEST(Eta3Property, PhaseInvariance) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ph(-M_PI, M_PI);
  for (const auto& base : {kSupercritical, kSubcritical}) {
    for (const auto& h : find_hopf(base, {}).points) {
      const auto d = base.with_drive(h.y_c);
      const std::array<cplx, 5> l = {cplx(0, h.omega), cplx(0, -h.omega), h.lambda_rest[0],
                                     h.lambda_rest[1], h.lambda_rest[2]};
      const auto ref = eigenvectors(d, h.x_ss, l);
      const double eta_ref = eta3(d, ref, h.omega).eta3;
      for (int trial = 0; trial < 20; ++trial) {
        EigenBasis b = ref;
        const double t1 = ph(rng);
        const double th[5] = {t1, -t1, ph(rng), ph(rng), ph(rng)};
        for (int i = 0; i < 5; ++i) b.alpha.col(i) *= std::polar(1.0, th[i]);
        b.beta = b.alpha.inverse();
        const double e = eta3(d, b, h.omega).eta3;
        EXPECT_EQ(e > 0.0, eta_ref > 0.0);
        EXPECT_NEAR(e, eta_ref, 1e-9 * std::abs(eta_ref));
      }
    }
  }
}

TEST(Eta3, ResonanceIsDegenerate) {
  const auto h = find_hopf(kSubcritical, {}).points.at(0);
  const auto d = kSubcritical.with_drive(h.y_c);
  const std::array<cplx, 5> l = {cplx(0, h.omega), cplx(0, -h.omega), h.lambda_rest[0],
                                 h.lambda_rest[1], h.lambda_rest[2]};
  auto basis = eigenvectors(d, h.x_ss, l);
  basis.lambdas[2] = cplx(0.0, 2.0 * h.omega);
  EXPECT_THROW(eta3(d, basis, h.omega), NumericError);
}

TEST(BifurcationJson, Shape) {
  const auto sn = find_saddle_nodes(kBistable, {});
  const auto hp = find_hopf(kSubcritical, {}).points;
  const auto j = bifurcation_json(sn, hp);
  ASSERT_EQ(j.size(), 4u);
  EXPECT_EQ(j[0]["type"], "saddle_node");
  EXPECT_TRUE(j[0]["criticality"].is_null());
  EXPECT_EQ(j[3]["type"], "hopf");
  EXPECT_EQ(j[3]["criticality"], "subcritical");
  EXPECT_EQ(j[3]["x_ss"].size(), 2u);
}
