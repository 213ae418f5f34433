#include "cqed/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cqed/error.hpp"

namespace cqed {

namespace {

constexpr cplx kI{0.0, 1.0};

double imag_check(cplx v, const char* name) {
  if (std::abs(v.imag()) > 1e-10 * std::max(1.0, std::abs(v)))
    throw NumericError(std::string("characteristic coefficient ") + name +
                       " has a non-negligible imaginary part");
  return v.real();
}

// Bisection on [lo, hi] (g(lo), g(hi) of opposite sign) to relative width 1e-10.
double bisect(const std::function<double(double)>& g, double lo, double hi) {
  double glo = g(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= 1e-10 * std::max(std::abs(lo), std::abs(hi))) break;
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<double> amplitude_grid(const AmplitudeRange& r) {
  if (!(r.lo > 0.0) || !(r.hi > r.lo) || !std::isfinite(r.hi))
    throw InvalidParameter("x_mag_range", "must satisfy 0 < lo < hi < inf");
  if (r.samples < 2) throw InvalidParameter("samples", "must be >= 2");
  std::vector<double> xs(static_cast<std::size_t>(r.samples));
  for (int i = 0; i < r.samples; ++i)
    xs[static_cast<std::size_t>(i)] = r.lo + (r.hi - r.lo) * i / (r.samples - 1);
  return xs;
}

}  // namespace

Jacobian5 jacobian(const DimensionlessParams& d, const MBState& fp) {
  const double k = d.k, c = d.cooperativity, g = d.gamma;
  const cplx x = fp.x, p = fp.p;
  const double dd = fp.d_inv;
  Jacobian5 m = Jacobian5::Zero();
  m(0, 0) = k * (1.0 + kI * d.theta);
  m(0, 2) = 2.0 * c * k;
  m(1, 1) = k * (1.0 - kI * d.theta);
  m(1, 3) = 2.0 * c * k;
  m(2, 0) = -dd;
  m(2, 2) = 1.0 + kI * d.delta;
  m(2, 4) = -x;
  m(3, 1) = -dd;
  m(3, 3) = 1.0 - kI * d.delta;
  m(3, 4) = -std::conj(x);
  m(4, 0) = g * std::conj(p) / 2.0;
  m(4, 1) = g * p / 2.0;
  m(4, 2) = g * std::conj(x) / 2.0;
  m(4, 3) = g * x / 2.0;
  m(4, 4) = g;
  return -m;
}

double hopf_indicator(double a1, double a2, double a3, double a4, double a5) {
  return (a1 * a2 - a3) * (a3 * a4 - a2 * a5) - (a1 * a4 - a5) * (a1 * a4 - a5);
}

CharCoeffs char_coeffs(const DimensionlessParams& d, cplx x_ss) {
  const double k = d.k, c = d.cooperativity, g = d.gamma;
  const double th = d.theta, de = d.delta;
  const double x2 = std::norm(x_ss);
  const double s = 1.0 + de * de + x2;
  const double dss = (1.0 + de * de) / s;
  const cplx p = (1.0 - kI * de) * x_ss / s;
  const cplx sum = std::conj(p) * x_ss + p * std::conj(x_ss);
  const cplx diff = std::conj(p) * x_ss - p * std::conj(x_ss);
  const double cav = k * k * (1.0 + th * th);
  const double mid = 2.0 * g + 1.0 + de * de + g * x2;

  CharCoeffs cc;
  cc.a1 = 2.0 + g + 2.0 * k;
  cc.a2 = cav + mid + 2.0 * k * (g + 2.0) + 4.0 * k * c * dss;
  cc.a3 = imag_check(g * s + 2.0 * k * mid + cav * (g + 2.0) +
                         4.0 * k * c * dss * (g + k + 1.0) - g * k * c * sum,
                     "a3");
  cc.a4 = imag_check(
      2.0 * k * g * s + cav * mid +
          2.0 * k * c * dss * (2.0 * k * (1.0 - de * th) + 2.0 * g * (k + 1.0) + g * x2) +
          g * k * c * (kI * (de + k * th) * diff - (k + 1.0) * sum) +
          4.0 * k * k * c * c * dss * dss,
      "a4");
  // The bracket multiplies D_ss by [D_ss - (p* x + p x*)/2]; this is the form
  // that reproduces -det(J).
  cc.a5 = imag_check(g * k * k *
                         (4.0 * c * c * dss * (dss - sum / 2.0) +
                          (1.0 + th * th) * s + 4.0 * c * dss * (1.0 - de * th)),
                     "a5");
  cc.f = hopf_indicator(cc.a1, cc.a2, cc.a3, cc.a4, cc.a5);
  return cc;
}

Stability stability(const DimensionlessParams& d, const MBState& fp) {
  Stability st;
  st.indicators = char_coeffs(d, fp.x);
  Eigen::ComplexEigenSolver<Jacobian5> es(jacobian(d, fp), false);
  if (es.info() != Eigen::Success)
    throw NumericError("Jacobian eigensolve did not converge");
  for (int i = 0; i < 5; ++i) {
    const cplx ev = es.eigenvalues()(i);
    if (!std::isfinite(ev.real()) || !std::isfinite(ev.imag()))
      throw NumericError("Jacobian eigensolve returned non-finite values");
    st.eigenvalues[static_cast<std::size_t>(i)] = ev;
  }
  std::sort(st.eigenvalues.begin(), st.eigenvalues.end(),
            [](cplx a, cplx b) {
              return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
            });
  st.stable = st.eigenvalues[0].real() < 0.0;
  return st;
}

void classify(const DimensionlessParams& d, BranchPoint& bp) {
  const Stability st = stability(d, bp);
  bp.stable = st.stable;
  bp.indicators = st.indicators;
  bp.eigenvalues = st.eigenvalues;
}

std::vector<SaddleNode> find_saddle_nodes(const DimensionlessParams& d,
                                          const AmplitudeRange& range) {
  d.validate();
  const auto xs = amplitude_grid(range);
  auto a5 = [&](double xm) {
    return char_coeffs(d, branch_point_at_amplitude(d, xm).x_ss).a5;
  };
  std::vector<SaddleNode> out;
  double prev = a5(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double cur = a5(xs[i]);
    if ((prev < 0.0) != (cur < 0.0)) {
      const double xm = bisect(a5, xs[i - 1], xs[i]);
      const BranchPoint bp = branch_point_at_amplitude(d, xm);
      out.push_back({bp.y, xm, bp.x_ss});
    }
    prev = cur;
  }
  return out;
}

const char* to_string(Criticality c) {
  switch (c) {
    case Criticality::Supercritical:
      return "supercritical";
    case Criticality::Subcritical:
      return "subcritical";
    case Criticality::Marginal:
      return "marginal";
  }
  return "marginal";
}

HopfFrequency hopf_frequency(const CharCoeffs& c) {
  const double num = c.a1 * c.a4 - c.a5;
  const double den = c.a1 * c.a2 - c.a3;
  const double scale = std::abs(c.a1 * c.a2) + std::abs(c.a3);
  if (std::abs(den) < 1e-12 * std::max(scale, 1e-300))
    throw NumericError("degenerate Hopf: a1 a2 - a3 vanishes");
  const double w2 = num / den;
  if (!(w2 > 0.0)) throw NumericError("degenerate Hopf: omega^2 <= 0");
  const double w = std::sqrt(w2);
  return {w, c.a4 / w2, c.a5 / w2};
}

std::array<cplx, 3> residual_eigenvalues(const CharCoeffs& c, double omega) {
  if (!(omega > 0.0)) throw NumericError("residual eigenvalues need omega > 0");
  const double w2 = omega * omega;
  const double a1 = c.a1, b2 = c.a4 / w2, b3 = c.a5 / w2;
  const double p = -a1 * a1 / 3.0 + b2;
  const double q = -2.0 * a1 * a1 * a1 / 27.0 + a1 * b2 / 3.0 - b3;
  const cplx nu{-0.5, std::sqrt(3.0) / 2.0};
  const cplx disc = std::sqrt(cplx(q * q / 4.0 + p * p * p / 27.0));
  auto cubic = [&](cplx l) { return ((l + a1) * l + b2) * l + b3; };
  const double scale = std::max({1.0, std::abs(a1), std::abs(b2), std::abs(b3)});

  std::array<cplx, 3> best{};
  double best_res = std::numeric_limits<double>::infinity();
  for (double sgn : {1.0, -1.0}) {
    const cplx base = q / 2.0 + sgn * disc;
    if (std::abs(base) < 1e-300) continue;
    const cplx w = std::pow(base, 1.0 / 3.0);
    std::array<cplx, 3> roots;
    cplx wj = w;
    for (auto& r : roots) {
      r = wj - p / (3.0 * wj) - a1 / 3.0;
      wj *= nu;
    }
    double res = 0.0;
    for (const auto& r : roots) {
      const double mag = std::max(1.0, std::abs(r));
      res = std::max(res, std::abs(cubic(r)) / (scale * mag * mag * mag));
    }
    if (res < best_res) {
      best_res = res;
      best = roots;
    }
  }
  if (p == 0.0 && q == 0.0) best = {cplx(-a1 / 3.0), cplx(-a1 / 3.0), cplx(-a1 / 3.0)};

  // Clean up the conjugation structure of a real cubic.
  std::sort(best.begin(), best.end(),
            [](cplx a, cplx b) { return std::abs(a.imag()) < std::abs(b.imag()); });
  if (std::abs(best[0].imag()) <= 1e-10 * std::abs(best[0])) best[0].imag(0.0);
  if (std::abs(best[1].imag()) > 1e-10 * std::abs(best[1])) {
    const cplx avg = 0.5 * (best[1] + std::conj(best[2]));
    best[1] = avg.imag() >= 0 ? avg : std::conj(avg);
    best[2] = std::conj(best[1]);
  } else {
    best[1].imag(0.0);
    best[2].imag(0.0);
  }

  const cplx sum = best[0] + best[1] + best[2];
  const cplx pairs = best[0] * best[1] + best[0] * best[2] + best[1] * best[2];
  const cplx prod = best[0] * best[1] * best[2];
  if (std::abs(sum + a1) > 1e-8 * std::max(1.0, std::abs(a1)) ||
      std::abs(pairs - b2) > 1e-8 * std::max(1.0, std::abs(b2)) ||
      std::abs(prod + b3) > 1e-8 * std::max(1.0, std::abs(b3)))
    throw NumericError("Cardano roots fail the Vieta check on every branch");
  return best;
}

EigenBasis eigenvectors(const DimensionlessParams& d, cplx x_ss,
                        const std::array<cplx, 5>& lambdas) {
  const double k = d.k, c = d.cooperativity;
  if (!(c > 0.0)) throw NumericError("eigenvector formulas need C > 0");
  if (std::abs(x_ss) == 0.0) throw NumericError("eigenvector formulas need x_ss != 0");
  const double s = 1.0 + d.delta * d.delta + std::norm(x_ss);
  const double dss = (1.0 + d.delta * d.delta) / s;
  const cplx cav_p = k * (1.0 + kI * d.theta), cav_m = k * (1.0 - kI * d.theta);
  const cplx at_p = 1.0 + kI * d.delta, at_m = 1.0 - kI * d.delta;
  const double two_ck = 2.0 * c * k;

  EigenBasis basis;
  basis.lambdas = lambdas;
  std::array<cplx, 5> phase{};
  for (std::size_t i = 0; i < 5; ++i) {
    const cplx l = lambdas[i];
    const cplx plus = two_ck * dss + (at_p + l) * (cav_p + l);
    const cplx minus = two_ck * dss + (at_m + l) * (cav_m + l);
    if (std::abs(plus) == 0.0)
      throw NumericError("eigenvector phase factor is singular");
    cplx u = std::sqrt(x_ss * minus / (std::conj(x_ss) * plus));
    for (std::size_t j = 0; j < i; ++j) {
      const cplx lj = lambdas[j];
      if (std::abs(lj.imag()) > 0.0 &&
          std::abs(l - std::conj(lj)) <= 1e-12 * std::max(1.0, std::abs(l))) {
        u = 1.0 / std::conj(phase[j]);
        break;
      }
    }
    phase[i] = u;
    const auto col = static_cast<Eigen::Index>(i);
    basis.alpha(0, col) = u;
    basis.alpha(1, col) = 1.0 / u;
    basis.alpha(2, col) = -u * (cav_p + l) / two_ck;
    basis.alpha(3, col) = -(1.0 / u) * (cav_m + l) / two_ck;
    basis.alpha(4, col) = -u * plus / (two_ck * x_ss);
  }

  Eigen::JacobiSVD<Jacobian5> svd(basis.alpha);
  const auto& sv = svd.singularValues();
  basis.condition = sv(4) > 0.0 ? sv(0) / sv(4) : std::numeric_limits<double>::infinity();
  if (!(basis.condition <= 1e12))
    throw NumericError("ill-conditioned eigenvector basis (cond > 1e12)");
  basis.beta = basis.alpha.inverse();
  return basis;
}

Eta3Result eta3(const DimensionlessParams& d, const EigenBasis& basis,
                double omega) {
  const auto& A = basis.alpha;
  const auto& B = basis.beta;
  const double g = d.gamma;
  // 1-based accessors matching the component/mode labels.
  auto a = [&](int comp, int mode) { return A(comp - 1, mode - 1); };
  auto b = [&](int mode, int comp) { return B(mode - 1, comp - 1); };
  auto lam = [&](int j) { return basis.lambdas[static_cast<std::size_t>(j - 1)]; };

  auto b20 = [&](int j) {
    return b(j, 3) * a(1, 1) * a(5, 1) + b(j, 4) * a(2, 1) * a(5, 1) -
           g * b(j, 5) * (a(2, 1) * a(3, 1) + a(1, 1) * a(4, 1)) / 2.0;
  };
  auto b11 = [&](int j) {
    return b(j, 3) * (a(1, 1) * a(5, 2) + a(1, 2) * a(5, 1)) +
           b(j, 4) * (a(2, 1) * a(5, 2) + a(2, 2) * a(5, 1)) -
           g * b(j, 5) *
               (a(2, 1) * a(3, 2) + a(2, 2) * a(3, 1) + a(1, 1) * a(4, 2) +
                a(1, 2) * a(4, 1)) /
               2.0;
  };

  cplx a20[6], a11[6];
  for (int j = 3; j <= 5; ++j) {
    const cplx res = 2.0 * kI * omega - lam(j);
    if (std::abs(lam(j)) < 1e-10 || std::abs(res) < 1e-10)
      throw NumericError("degenerate center manifold: resonant denominator");
    a20[j] = b20(j) / res;
    a11[j] = -b11(j) / lam(j);
  }

  cplx t3{}, t4{}, t5{};
  for (int j = 3; j <= 5; ++j) {
    t3 += a20[j] * (a(1, 2) * a(5, j) + a(1, j) * a(5, 2)) +
          a11[j] * (a(1, 1) * a(5, j) + a(1, j) * a(5, 1));
    t4 += a20[j] * (a(2, 2) * a(5, j) + a(2, j) * a(5, 2)) +
          a11[j] * (a(2, 1) * a(5, j) + a(2, j) * a(5, 1));
    t5 += a20[j] * (a(2, 2) * a(3, j) + a(2, j) * a(3, 2) + a(1, 2) * a(4, j) +
                    a(1, j) * a(4, 2)) +
          a11[j] * (a(2, 1) * a(3, j) + a(1, 1) * a(4, j) + a(2, j) * a(3, 1) +
                    a(1, j) * a(4, 1));
  }

  Eta3Result r;
  r.b20 = b20(1);
  r.b11 = b11(1);
  r.b21 = b(1, 3) * t3 + b(1, 4) * t4 - g / 2.0 * b(1, 5) * t5;
  r.eta3 = r.b21.real() - (r.b20 * r.b11).imag() / omega;
  const double tol = 1e-8 * std::max(1.0, std::abs(r.b21));
  r.criticality = r.eta3 < -tol   ? Criticality::Supercritical
                  : r.eta3 > tol ? Criticality::Subcritical
                                 : Criticality::Marginal;
  return r;
}

Eta3Result eta3(const DimensionlessParams& d, cplx x_ss, double omega,
                const std::array<cplx, 3>& rest) {
  const std::array<cplx, 5> lambdas = {cplx(0.0, omega), cplx(0.0, -omega),
                                       rest[0], rest[1], rest[2]};
  return eta3(d, eigenvectors(d, x_ss, lambdas), omega);
}

HopfScan find_hopf(const DimensionlessParams& d, const AmplitudeRange& range) {
  d.validate();
  HopfScan scan;
  if (d.cooperativity == 0.0) return scan;
  const auto xs = amplitude_grid(range);
  auto coeffs_at = [&](double xm) {
    return char_coeffs(d, branch_point_at_amplitude(d, xm).x_ss);
  };
  auto f_at = [&](double xm) { return coeffs_at(xm).f; };
  auto guarded = [](const CharCoeffs& c) {
    return c.a1 > 0 && c.a2 > 0 && c.a3 > 0 && c.a4 > 0 && c.a5 > 0;
  };

  CharCoeffs prev = coeffs_at(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const CharCoeffs cur = coeffs_at(xs[i]);
    const bool change = (prev.f < 0.0) != (cur.f < 0.0);
    if (change && guarded(prev) && guarded(cur)) {
      const double xm = bisect(f_at, xs[i - 1], xs[i]);
      const BranchPoint bp = branch_point_at_amplitude(d, xm);
      const DimensionlessParams dc = d.with_drive(bp.y);
      std::ostringstream why;
      why << "f-root at |x_ss| = " << xm << " (y = " << bp.y << "): ";
      try {
        const Stability st = stability(dc, bp);
        // The imaginary pair is the one closest to the imaginary axis.
        const cplx* pair = nullptr;
        for (const auto& ev : st.eigenvalues) {
          if (ev.imag() > 0.0 &&
              (!pair || std::abs(ev.real()) < std::abs(pair->real())))
            pair = &ev;
        }
        if (!pair || std::abs(pair->real()) >= 1e-6 * std::abs(*pair)) {
          why << "no purely imaginary eigenpair";
          scan.diagnostics.push_back(why.str());
        } else {
          const CharCoeffs cc = char_coeffs(dc, bp.x_ss);
          HopfPoint hp;
          hp.y_c = bp.y;
          hp.x_mag = xm;
          hp.x_ss = bp.x_ss;
          hp.omega = hopf_frequency(cc).omega;
          hp.lambda_rest = residual_eigenvalues(cc, hp.omega);
          const Eta3Result e = eta3(dc, bp.x_ss, hp.omega, hp.lambda_rest);
          hp.eta3 = e.eta3;
          hp.criticality = e.criticality;
          scan.points.push_back(hp);
        }
      } catch (const NumericError& e) {
        why << e.what();
        scan.diagnostics.push_back(why.str());
      }
    }
    prev = cur;
  }
  return scan;
}

nlohmann::json bifurcation_json(std::span<const SaddleNode> saddles,
                                std::span<const HopfPoint> hopfs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : saddles) {
    out.push_back({{"type", "saddle_node"},
                   {"y_c", s.y_c},
                   {"x_ss", {s.x_ss.real(), s.x_ss.imag()}},
                   {"criticality", nullptr}});
  }
  for (const auto& h : hopfs) {
    out.push_back({{"type", "hopf"},
                   {"y_c", h.y_c},
                   {"x_ss", {h.x_ss.real(), h.x_ss.imag()}},
                   {"omega", h.omega},
                   {"eta3", h.eta3},
                   {"criticality", to_string(h.criticality)}});
  }
  return out;
}

}  // namespace cqed
