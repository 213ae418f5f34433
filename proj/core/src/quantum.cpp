#include "cqed/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/numeric/odeint.hpp>
#include <fftw3.h>
#include <unsupported/Eigen/NonLinearOptimization>

#include "cqed/io.hpp"

namespace cqed::quantum {

namespace {

constexpr cplx kI{0.0, 1.0};
using Triplet = Eigen::Triplet<cplx>;

// kron(atom, field) for a 2x2 atomic factor and a field matrix.
SpMat kron_atom_field(const Eigen::Matrix2cd& atom, const SpMat& field) {
  const auto f = static_cast<int>(field.rows());
  std::vector<Triplet> t;
  for (int ai = 0; ai < 2; ++ai) {
    for (int aj = 0; aj < 2; ++aj) {
      if (atom(ai, aj) == cplx(0.0)) continue;
      for (int k = 0; k < field.outerSize(); ++k) {
        for (SpMat::InnerIterator it(field, k); it; ++it) {
          t.emplace_back(ai * f + static_cast<int>(it.row()),
                         aj * f + static_cast<int>(it.col()), atom(ai, aj) * it.value());
        }
      }
    }
  }
  SpMat m(2 * f, 2 * f);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// Accumulates coeff * vec(A rho B) = coeff * (B^T (x) A) vec(rho).
void add_sandwich(std::vector<Triplet>& t, const SpMat& a, const SpMat& b, cplx coeff) {
  const auto d = a.rows();
  for (int ka = 0; ka < a.outerSize(); ++ka) {
    for (SpMat::InnerIterator ia(a, ka); ia; ++ia) {
      for (int kb = 0; kb < b.outerSize(); ++kb) {
        for (SpMat::InnerIterator ib(b, kb); ib; ++ib) {
          // A(r, r') with r = ia.row(), r' = ia.col(); B(c', c) with c' = ib.row(), c = ib.col().
          t.emplace_back(static_cast<int>(ib.col() * d + ia.row()),
                         static_cast<int>(ib.row() * d + ia.col()),
                         coeff * ia.value() * ib.value());
        }
      }
    }
  }
}

void add_left(std::vector<Triplet>& t, const SpMat& a, cplx coeff) {
  const auto d = a.rows();
  for (int ka = 0; ka < a.outerSize(); ++ka)
    for (SpMat::InnerIterator ia(a, ka); ia; ++ia)
      for (Eigen::Index c = 0; c < d; ++c)
        t.emplace_back(static_cast<int>(c * d + ia.row()), static_cast<int>(c * d + ia.col()),
                       coeff * ia.value());
}

void add_right(std::vector<Triplet>& t, const SpMat& b, cplx coeff) {
  const auto d = b.rows();
  for (int kb = 0; kb < b.outerSize(); ++kb)
    for (SpMat::InnerIterator ib(b, kb); ib; ++ib)
      for (Eigen::Index r = 0; r < d; ++r)
        t.emplace_back(static_cast<int>(ib.col() * d + r), static_cast<int>(ib.row() * d + r),
                       coeff * ib.value());
}

void add_dissipator(std::vector<Triplet>& t, const SpMat& jump, double rate) {
  if (rate == 0.0) return;
  const SpMat jd = jump.adjoint();
  const SpMat n = jd * jump;
  add_sandwich(t, jump, jd, 2.0 * rate);
  add_left(t, n, -rate);
  add_right(t, n, -rate);
}

void require_single_atom(const PhysicalParams& p) {
  if (p.n_atoms != 1)
    throw UnsupportedConfiguration("quantum model supports n_atoms = 1 only");
}

// Tr[op * M] for sparse op and dense M.
cplx trace_product(const SpMat& op, const DenseMat& m) {
  cplx s = 0.0;
  for (int k = 0; k < op.outerSize(); ++k)
    for (SpMat::InnerIterator it(op, k); it; ++it) s += it.value() * m(it.col(), it.row());
  return s;
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

Operators build_space(int n_max) {
  if (n_max < 1) throw InvalidParameter("n_max", "must be >= 1");
  Operators o;
  o.space.n_max = n_max;
  const int f = o.space.field_dim();
  SpMat af(f, f);
  std::vector<Triplet> t;
  for (int n = 1; n <= n_max; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  af.setFromTriplets(t.begin(), t.end());
  SpMat idf(f, f);
  idf.setIdentity();

  Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd lower = Eigen::Matrix2cd::Zero();
  lower(0, 1) = 1.0;  // |g><e|
  o.a = kron_atom_field(id2, af);
  o.adag = o.a.adjoint();
  o.sm = kron_atom_field(lower, idf);
  o.sp = o.sm.adjoint();
  o.sz = SpMat(o.sp * o.sm) - SpMat(o.sm * o.sp);
  o.id = kron_atom_field(id2, idf);
  return o;
}

SpMat hamiltonian(const PhysicalParams& p, const Operators& o) {
  require_single_atom(p);
  SpMat h = p.delta_c * SpMat(o.adag * o.a) + p.delta_a * SpMat(o.sp * o.sm) +
            kI * p.g0 * (SpMat(o.adag * o.sm) - SpMat(o.a * o.sp)) +
            kI * p.drive * (o.adag - o.a);
  h.prune(cplx(0.0));
  return h;
}

namespace {

SpMat assemble(const SpMat& h, const PhysicalParams& p, const Operators& o) {
  std::vector<Triplet> t;
  add_left(t, h, -kI);
  add_right(t, h, kI);
  add_dissipator(t, o.a, p.kappa);
  add_dissipator(t, o.sm, p.gamma_par / 2.0);
  if (p.gamma_nr != 0.0) {
    add_sandwich(t, o.sz, o.sz, p.gamma_nr / 2.0);
    const auto d2 = static_cast<int>(o.a.rows() * o.a.rows());
    for (int i = 0; i < d2; ++i) t.emplace_back(i, i, -p.gamma_nr / 2.0);
  }
  const auto d = o.a.rows();
  SpMat l(d * d, d * d);
  l.setFromTriplets(t.begin(), t.end());
  l.prune(cplx(0.0));
  return l;
}

}  // namespace

SpMat liouvillian(const PhysicalParams& p, const Operators& o) {
  p.validate();
  return assemble(hamiltonian(p, o), p, o);
}

Vec vec(const DenseMat& rho) {
  return Eigen::Map<const Vec>(rho.data(), rho.size());
}

DenseMat unvec(const Vec& v, int dim) {
  return Eigen::Map<const DenseMat>(v.data(), dim, dim);
}

DenseMat field_reduced(const DenseMat& rho, const HilbertConfig& s) {
  const int f = s.field_dim();
  return rho.topLeftCorner(f, f) + rho.bottomRightCorner(f, f);
}

double top_population(const DenseMat& rho, const HilbertConfig& s) {
  const DenseMat rf = field_reduced(rho, s);
  const int n = s.n_max;
  return rf(n, n).real() + rf(n - 1, n - 1).real();
}

cplx expect(const SpMat& op, const DenseMat& rho) { return trace_product(op, rho); }

double empty_cavity_photons(const PhysicalParams& p) {
  if (!(p.kappa > 0.0)) throw InvalidParameter("kappa", "must be > 0");
  const double theta = p.delta_c / p.kappa;
  return p.drive * p.drive / (p.kappa * p.kappa * (1.0 + theta * theta));
}

int initial_cutoff(const PhysicalParams& p) {
  return std::max(1, static_cast<int>(std::ceil(4.0 * empty_cavity_photons(p) + 20.0)));
}

namespace {

// Solves L vec(rho) = 0 with the rho(0,0) equation replaced by Tr rho = 1.
DenseMat solve_null(const SpMat& l, Eigen::Index d) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(l.nonZeros() + d));
  for (int k = 0; k < l.outerSize(); ++k)
    for (SpMat::InnerIterator it(l, k); it; ++it)
      if (it.row() != 0) t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (Eigen::Index i = 0; i < d; ++i) t.emplace_back(0, static_cast<int>(i * d + i), 1.0);
  SpMat a(d * d, d * d);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success)
    throw NumericError("degenerate steady state: sparse factorization failed (" +
                       lu.lastErrorMessage() + ")");
  Vec b = Vec::Zero(d * d);
  b(0) = 1.0;
  const Vec x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw NumericError("degenerate steady state: solve failed");
  return unvec(x, static_cast<int>(d));
}

}  // namespace

SteadyState steady_state_at(const PhysicalParams& p, int n_max) {
  SteadyState ss;
  ss.ops = build_space(n_max);
  const SpMat l = liouvillian(p, ss.ops);
  DenseMat rho = solve_null(l, ss.ops.a.rows());
  ss.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  ss.rho = rho;
  ss.trace_error = std::abs(rho.trace() - 1.0);
  ss.residual = (l * vec(rho)).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<DenseMat> es(rho, Eigen::EigenvaluesOnly);
  ss.min_eigenvalue = es.eigenvalues().minCoeff();
  ss.top_population = top_population(rho, ss.ops.space);
  ss.mean_photons = expect(SpMat(ss.ops.adag * ss.ops.a), rho).real();
  ss.cutoffs_tried = {n_max};
  return ss;
}

SteadyState steady_state(const PhysicalParams& p, const TruncationPolicy& policy) {
  require_single_atom(p);
  if (!(policy.tolerance > 0.0)) throw InvalidParameter("tolerance", "must be > 0");
  int n = policy.n_max_start > 0 ? policy.n_max_start : initial_cutoff(p);
  const int ceiling = std::max(1, policy.n_max_ceiling);
  n = std::min(n, ceiling);
  std::vector<int> tried;
  for (;;) {
    SteadyState ss = steady_state_at(p, n);
    tried.push_back(n);
    ss.cutoffs_tried = tried;
    if (ss.top_population < policy.tolerance) {
      if (ss.min_eigenvalue < -1e-8)
        throw NumericError("steady state is not positive semidefinite (min eigenvalue " +
                           io::fmt_double(ss.min_eigenvalue) + ")");
      return ss;
    }
    if (n >= ceiling)
      throw TruncationFailure(ss.top_population, n,
                              "top-two Fock population " + io::fmt_double(ss.top_population) +
                                  " exceeds tolerance at the n_max ceiling " + std::to_string(n));
    n = std::min(2 * n, ceiling);
  }
}

double MomentResidual::max_abs() const {
  return std::max({std::abs(field), std::abs(polarization), std::abs(inversion)});
}

MomentResidual moment_residual(const DenseMat& rho, const PhysicalParams& p,
                               const Operators& o) {
  const SpMat l = liouvillian(p, o);
  const auto d = static_cast<int>(o.a.rows());
  const DenseMat drho = unvec(l * vec(rho), d);
  const double gp = p.gamma_perp();
  const double theta = p.delta_c / p.kappa;
  const double delta = p.delta_a / gp;

  const cplx ea = expect(o.a, rho), esm = expect(o.sm, rho), esz = expect(o.sz, rho);
  const cplx a_sz = expect(SpMat(o.a * o.sz), rho);
  const cplx ad_sm = expect(SpMat(o.adag * o.sm), rho);
  const cplx sp_a = expect(SpMat(o.sp * o.a), rho);

  MomentResidual r;
  r.field = expect(o.a, drho) - (-p.kappa * (1.0 + kI * theta) * ea + p.g0 * esm + p.drive);
  r.polarization = expect(o.sm, drho) - (-gp * (1.0 + kI * delta) * esm + p.g0 * a_sz);
  r.inversion = expect(o.sz, drho) - (-p.gamma_par * (esz + 1.0) - 2.0 * p.g0 * (ad_sm + sp_a));
  return r;
}

GridSpec GridSpec::automatic(double mean_photons) {
  const double h = 1.5 * (std::sqrt(std::max(0.0, mean_photons)) + 3.0);
  return {-h, h, -h, h, 201, 201};
}

double QFunctionGrid::normalization() const {
  const double s = std::accumulate(values.begin(), values.end(), 0.0);
  return s * spec.d_re() * spec.d_im() / M_PI;
}

QFunctionGrid q_function(const DenseMat& rho, const HilbertConfig& space, const GridSpec& spec) {
  if (spec.n_re < 2 || spec.n_im < 2 || !(spec.re_max > spec.re_min) ||
      !(spec.im_max > spec.im_min))
    throw InvalidParameter("grid", "needs at least 2x2 points and a positive extent");
  const DenseMat rf = field_reduced(rho, space);
  const int f = space.field_dim();
  std::vector<double> half_log_fact(static_cast<std::size_t>(f));
  for (int n = 0; n < f; ++n) half_log_fact[static_cast<std::size_t>(n)] = 0.5 * log_factorial(n);

  QFunctionGrid q;
  q.spec = spec;
  q.n_max = space.n_max;
  q.values.assign(static_cast<std::size_t>(spec.n_re) * spec.n_im, 0.0);
  Vec c(f);
  for (int j = 0; j < spec.n_im; ++j) {
    for (int i = 0; i < spec.n_re; ++i) {
      const cplx alpha(spec.re(i), spec.im(j));
      const double r2 = std::norm(alpha);
      if (r2 == 0.0) {
        c.setZero();
        c(0) = 1.0;
      } else {
        const double lr = 0.5 * std::log(r2), ph = std::arg(alpha);
        for (int n = 0; n < f; ++n) {
          const double mag = std::exp(-0.5 * r2 + n * lr - half_log_fact[static_cast<std::size_t>(n)]);
          c(n) = std::polar(mag, n * ph);
        }
      }
      q.values[static_cast<std::size_t>(j) * spec.n_re + i] =
          std::max(0.0, c.dot(rf * c).real());
    }
  }
  double r2max = 0.0;
  for (double re : {spec.re_min, spec.re_max})
    for (double im : {spec.im_min, spec.im_max}) r2max = std::max(r2max, re * re + im * im);
  q.coherent_tail_at_edge = r2max > 0.0 ? boost::math::gamma_p(space.n_max + 1.0, r2max) : 0.0;
  return q;
}

QFunctionGrid q_function(const SteadyState& ss) {
  return q_function(ss.rho, ss.ops.space, GridSpec::automatic(ss.mean_photons));
}

ModeReport find_modes(const QFunctionGrid& q, double sigma_cells, double rel_threshold) {
  const int nx = q.spec.n_re, ny = q.spec.n_im;
  std::vector<double> s = q.values;
  if (sigma_cells > 0.0) {
    const int rad = static_cast<int>(std::ceil(3.0 * sigma_cells));
    std::vector<double> kern(static_cast<std::size_t>(2 * rad + 1));
    for (int k = -rad; k <= rad; ++k)
      kern[static_cast<std::size_t>(k + rad)] = std::exp(-0.5 * k * k / (sigma_cells * sigma_cells));
    // Separable pass with edge renormalization.
    auto pass = [&](const std::vector<double>& in, bool along_re) {
      std::vector<double> out(in.size(), 0.0);
      for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
          double acc = 0.0, w = 0.0;
          for (int k = -rad; k <= rad; ++k) {
            const int ii = along_re ? i + k : i, jj = along_re ? j : j + k;
            if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
            const double kw = kern[static_cast<std::size_t>(k + rad)];
            acc += kw * in[static_cast<std::size_t>(jj) * nx + ii];
            w += kw;
          }
          out[static_cast<std::size_t>(j) * nx + i] = acc / w;
        }
      }
      return out;
    };
    s = pass(pass(s, true), false);
  }
  const double gmax = *std::max_element(s.begin(), s.end());
  ModeReport r;
  for (int j = 1; j + 1 < ny; ++j) {
    for (int i = 1; i + 1 < nx; ++i) {
      const double v = s[static_cast<std::size_t>(j) * nx + i];
      if (v < rel_threshold * gmax || v <= 0.0) continue;
      bool strict = true;
      for (int dj = -1; dj <= 1 && strict; ++dj)
        for (int di = -1; di <= 1 && strict; ++di)
          if ((di || dj) && s[static_cast<std::size_t>(j + dj) * nx + i + di] >= v) strict = false;
      if (strict) {
        r.locations.emplace_back(q.spec.re(i), q.spec.im(j));
        r.heights.push_back(v);
      }
    }
  }
  r.count = static_cast<int>(r.heights.size());
  return r;
}

namespace {

double bilinear(const QFunctionGrid& q, cplx z) {
  const double fx = (z.real() - q.spec.re_min) / q.spec.d_re();
  const double fy = (z.imag() - q.spec.im_min) / q.spec.d_im();
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, q.spec.n_re - 2);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, q.spec.n_im - 2);
  const double tx = std::clamp(fx - i, 0.0, 1.0), ty = std::clamp(fy - j, 0.0, 1.0);
  return (1 - tx) * (1 - ty) * q.at(i, j) + tx * (1 - ty) * q.at(i + 1, j) +
         (1 - tx) * ty * q.at(i, j + 1) + tx * ty * q.at(i + 1, j + 1);
}

}  // namespace

RingReport detect_ring(const QFunctionGrid& q, int angles, double min_contrast) {
  if (angles < 8) throw InvalidParameter("angles", "must be >= 8");
  RingReport r;
  double w = 0.0;
  cplx c = 0.0;
  for (int j = 0; j < q.spec.n_im; ++j)
    for (int i = 0; i < q.spec.n_re; ++i) {
      w += q.at(i, j);
      c += q.at(i, j) * cplx(q.spec.re(i), q.spec.im(j));
    }
  if (!(w > 0.0)) return r;
  r.center = c / w;
  r.center_value = bilinear(q, r.center);
  const double cell = std::min(q.spec.d_re(), q.spec.d_im());
  const double dr = 0.5 * cell;
  r.min_ridge_radius = std::numeric_limits<double>::infinity();
  r.min_ridge_value = std::numeric_limits<double>::infinity();
  bool ok = true;
  double radius_sum = 0.0;
  for (int k = 0; k < angles; ++k) {
    const cplx dir = std::polar(1.0, 2.0 * M_PI * k / angles);
    double best = -1.0, best_r = 0.0;
    for (double rr = 0.0;; rr += dr) {
      const cplx z = r.center + rr * dir;
      if (z.real() < q.spec.re_min || z.real() > q.spec.re_max || z.imag() < q.spec.im_min ||
          z.imag() > q.spec.im_max)
        break;
      const double v = bilinear(q, z);
      if (v > best) {
        best = v;
        best_r = rr;
      }
    }
    radius_sum += best_r;
    r.min_ridge_radius = std::min(r.min_ridge_radius, best_r);
    r.min_ridge_value = std::min(r.min_ridge_value, best);
    if (best_r < 2.0 * cell || best < min_contrast * r.center_value) ok = false;
  }
  r.mean_radius = radius_sum / angles;
  r.is_ring = ok;
  return r;
}

void write_q_csv(std::ostream& os, const QFunctionGrid& q) {
  io::CsvWriter w(os, {"re_alpha", "im_alpha", "Q"});
  for (int j = 0; j < q.spec.n_im; ++j)
    for (int i = 0; i < q.spec.n_re; ++i) {
      w << q.spec.re(i) << q.spec.im(j) << q.at(i, j);
      w.end_row();
    }
}

void write_q_binary(std::ostream& os, const QFunctionGrid& q) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  os.write(reinterpret_cast<const char*>(q.values.data()),
           static_cast<std::streamsize>(q.values.size() * sizeof(double)));
}

nlohmann::json q_sidecar(const QFunctionGrid& q, const PhysicalParams& p) {
  return {{"grid",
           {{"re_min", q.spec.re_min},
            {"re_max", q.spec.re_max},
            {"im_min", q.spec.im_min},
            {"im_max", q.spec.im_max},
            {"n_re", q.spec.n_re},
            {"n_im", q.spec.n_im},
            {"layout", "row-major float64 little-endian, index = j * n_re + i"}}},
          {"params", to_json(p)},
          {"n_max", q.n_max},
          {"normalization", q.normalization()},
          {"coherent_tail_at_edge", q.coherent_tail_at_edge}};
}

Correlation autocorrelation_y(const PhysicalParams& p, const SteadyState& ss,
                              std::span<const double> tau, const CorrelationOptions& opt) {
  namespace odeint = boost::numeric::odeint;
  require_single_atom(p);
  p.validate();
  for (std::size_t i = 0; i < tau.size(); ++i)
    if (!(tau[i] >= 0.0) || (i > 0 && tau[i] < tau[i - 1]))
      throw InvalidParameter("tau", "must be >= 0 and ascending");
  if (!(opt.tolerances.rtol > 0.0) || !(opt.tolerances.atol > 0.0))
    throw InvalidParameter("tolerance", "rtol and atol must be > 0");

  // Displaced operator b = a - alpha0: the cavity drive cancels against the
  // decay and detuning, leaving a coherent drive g0 alpha0 on the atom.
  const cplx alpha0 = p.drive / cplx(p.kappa, p.delta_c);
  const double mean_y_lab = expect(0.5 * kI * SpMat(ss.ops.adag - ss.ops.a), ss.rho).real();
  const double nb = std::max(
      0.0, ss.mean_photons - 2.0 * std::real(std::conj(alpha0) * expect(ss.ops.a, ss.rho)) +
               std::norm(alpha0));
  const int n_cap = ss.ops.space.n_max;
  int n_frame = std::min(n_cap, std::max(1, static_cast<int>(std::ceil(4.0 * nb + 20.0))));

  // The b-photon distribution is narrower than the lab one, so the frame gets
  // its own doubling escalation, capped at the caller's cutoff.
  Operators o;
  SpMat l;
  DenseMat rho;
  Correlation c;
  for (;;) {
    o = build_space(n_frame);
    const SpMat h0 = p.delta_c * SpMat(o.adag * o.a) + p.delta_a * SpMat(o.sp * o.sm);
    SpMat h = h0 + kI * p.g0 * (SpMat(o.adag * o.sm) - SpMat(o.a * o.sp)) +
              kI * p.g0 * (std::conj(alpha0) * o.sm - alpha0 * o.sp);
    h.prune(cplx(0.0));
    l = assemble(h, p, o);
    rho = solve_null(l, o.a.rows());
    rho = 0.5 * (rho + rho.adjoint()).eval();
    c.frame_top_population = top_population(rho, o.space);
    if (c.frame_top_population < opt.truncation_tolerance || n_frame >= n_cap) break;
    n_frame = std::min(2 * n_frame, n_cap);
  }
  const HilbertConfig& sp = o.space;
  const auto d = o.a.rows();
  const SpMat y = 0.5 * kI * SpMat(o.adag - o.a);
  const double mean_y = expect(y, rho).real();
  c.n_max = n_frame;
  c.mean_mismatch = std::abs(mean_y + alpha0.imag() - mean_y_lab);
  c.tau.assign(tau.begin(), tau.end());
  c.g.resize(tau.size());

  // Interaction picture of the diagonal h0: x_k = exp(-i w_k t) v_k with
  // w_k = E_r - E_c for k = c d + r. The remaining generator splits into a few
  // blocks, each carrying a single phase exp(i (w_k - w_k') t).
  std::vector<double> energy(static_cast<std::size_t>(d));
  for (int atom = 0; atom < 2; ++atom)
    for (int n = 0; n <= sp.n_max; ++n)
      energy[static_cast<std::size_t>(sp.index(atom, n))] = p.delta_c * n + p.delta_a * atom;
  auto w = [&](Eigen::Index k) {
    return energy[static_cast<std::size_t>(k % d)] - energy[static_cast<std::size_t>(k / d)];
  };
  std::vector<double> freqs;
  std::vector<std::vector<Eigen::Triplet<cplx>>> parts;
  for (int k = 0; k < l.outerSize(); ++k) {
    for (SpMat::InnerIterator it(l, k); it; ++it) {
      cplx v = it.value();
      if (it.row() == it.col()) v += kI * w(it.row());
      if (std::abs(v) == 0.0) continue;
      const double f = w(it.row()) - w(it.col());
      std::size_t g = 0;
      while (g < freqs.size() && std::abs(freqs[g] - f) > 1e-9 * (1.0 + std::abs(f))) ++g;
      if (g == freqs.size()) {
        freqs.push_back(f);
        parts.emplace_back();
      }
      parts[g].emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), v);
    }
  }
  using RowMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
  std::vector<RowMat> blocks;
  for (auto& t : parts) {
    RowMat m(d * d, d * d);
    m.setFromTriplets(t.begin(), t.end());
    blocks.push_back(std::move(m));
  }

  struct Probe {
    Eigen::Index k;
    cplx weight;
    double w;
  };
  std::vector<Probe> probes;
  for (int k = 0; k < y.outerSize(); ++k)
    for (SpMat::InnerIterator it(y, k); it; ++it) {
      // Tr[Y X] picks X(col, row) of each Y(row, col).
      const Eigen::Index idx = it.row() * d + it.col();
      probes.push_back({idx, it.value(), w(idx)});
    }
  auto record = [&](std::size_t i, const cplx* v, double t) {
    cplx tr = 0.0;
    for (const auto& pr : probes) tr += pr.weight * std::polar(1.0, -pr.w * t) * v[pr.k];
    c.g[i] = tr.real() - mean_y * mean_y;
    c.max_imag = std::max(c.max_imag, std::abs(tr.imag()));
  };

  const DenseMat x0 = 0.5 * (DenseMat(y * rho) + DenseMat(rho * y));
  using State = std::vector<cplx>;
  State state(x0.data(), x0.data() + x0.size());
  std::size_t next = 0;
  while (next < tau.size() && tau[next] <= 0.0) record(next, state.data(), 0.0), ++next;
  if (next == tau.size()) return c;

  Vec scratch(d * d);
  auto rhs = [&](const State& v, State& dv, double t) {
    Eigen::Map<const Vec> in(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::Map<Vec> out(dv.data(), static_cast<Eigen::Index>(dv.size()));
    out.setZero();
    for (std::size_t g = 0; g < blocks.size(); ++g) {
      if (freqs[g] == 0.0) {
        out.noalias() += blocks[g] * in;
      } else {
        scratch.noalias() = blocks[g] * in;
        out += std::polar(1.0, freqs[g] * t) * scratch;
      }
    }
  };
  auto stepper = odeint::make_dense_output(opt.tolerances.atol, opt.tolerances.rtol,
                                           odeint::runge_kutta_dopri5<State>());
  stepper.initialize(state, 0.0, 1e-3);
  State buf(state.size());
  try {
    while (next < tau.size()) {
      stepper.do_step(rhs);
      const double t = stepper.current_time();
      if (stepper.current_time_step() < 1e-13 * std::max(1.0, t))
        throw IntegrationFailure(t, "regression step size underflow");
      while (next < tau.size() && tau[next] <= t) {
        stepper.calc_state(tau[next], buf);
        record(next, buf.data(), tau[next]);
        ++next;
      }
      if (!std::isfinite(std::abs(stepper.current_state()[0])))
        throw IntegrationFailure(t, "non-finite regression state");
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrationFailure(stepper.current_time(), e.what());
  }
  return c;
}

void write_correlation_csv(std::ostream& os, const Correlation& c) {
  io::CsvWriter w(os, {"tau", "G_Y"});
  for (std::size_t i = 0; i < c.tau.size(); ++i) {
    w << c.tau[i] << c.g[i];
    w.end_row();
  }
}

namespace {

struct DampedCosine {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::span<const double> g, tau;
  int inputs() const { return 5; }
  int values() const { return static_cast<int>(g.size()); }

  // x = (A, rate = 1/T, Omega, phi, c)
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = tau[i];
      f(static_cast<Eigen::Index>(i)) =
          x(0) * std::exp(-x(1) * t) * std::cos(x(2) * t + x(3)) + x(4) - g[i];
    }
    return 0;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = tau[i];
      const double e = std::exp(-x(1) * t);
      const double cs = std::cos(x(2) * t + x(3)), sn = std::sin(x(2) * t + x(3));
      const auto r = static_cast<Eigen::Index>(i);
      j(r, 0) = e * cs;
      j(r, 1) = -t * x(0) * e * cs;
      j(r, 2) = -t * x(0) * e * sn;
      j(r, 3) = -x(0) * e * sn;
      j(r, 4) = 1.0;
    }
    return 0;
  }
};

// Log-linear regression through the local maxima of |g - c|; falls back to
// all samples when fewer than three maxima exist.
double envelope_time(std::span<const double> g, std::span<const double> tau, double c) {
  std::vector<double> ts, ls;
  const std::size_t n = g.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double a = std::abs(g[i - 1] - c), b = std::abs(g[i] - c), d = std::abs(g[i + 1] - c);
    if (b > a && b >= d && b > 0.0) {
      ts.push_back(tau[i]);
      ls.push_back(std::log(b));
    }
  }
  if (ts.size() < 3) {
    ts.clear();
    ls.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::abs(g[i] - c);
      if (v > 0.0) {
        ts.push_back(tau[i]);
        ls.push_back(std::log(v));
      }
    }
  }
  if (ts.size() < 2) return std::numeric_limits<double>::infinity();
  const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / ts.size();
  const double ml = std::accumulate(ls.begin(), ls.end(), 0.0) / ls.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxy += (ts[i] - mt) * (ls[i] - ml);
    sxx += (ts[i] - mt) * (ts[i] - mt);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return slope < 0.0 ? -1.0 / slope : std::numeric_limits<double>::infinity();
}

}  // namespace

CoherenceFit coherence_time(std::span<const double> g, std::span<const double> tau) {
  const std::size_t n = g.size();
  if (n < 50 || tau.size() != n)
    throw InvalidParameter("samples", "need >= 50 samples with matching tau");
  const double dt = (tau[n - 1] - tau[0]) / static_cast<double>(n - 1);
  if (!(dt > 0.0)) throw InvalidParameter("tau", "must increase");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) throw InvalidParameter("samples", "must be finite");
    if (std::abs(tau[i] - tau[0] - i * dt) > 1e-6 * dt)
      throw InvalidParameter("tau", "must be uniformly spaced");
  }

  const std::size_t tail = std::max<std::size_t>(1, n / 5);
  const double c0 = std::accumulate(g.end() - static_cast<std::ptrdiff_t>(tail), g.end(), 0.0) /
                    static_cast<double>(tail);
  double var = 0.0;
  for (double v : g) var += (v - c0) * (v - c0);

  // Zero-padded periodogram for the frequency guess.
  const std::size_t npad = 8 * n;
  std::vector<double> in(npad, 0.0);
  for (std::size_t i = 0; i < n; ++i) in[i] = g[i] - c0;
  std::vector<fftw_complex> out(npad / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(npad), in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<double> pw(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) pw[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  std::vector<double> sorted = pw;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double floor = sorted[sorted.size() / 2];
  std::size_t kbest = 0;
  for (std::size_t k = 1; k + 1 < pw.size(); ++k)
    if (pw[k] > pw[k - 1] && pw[k] >= pw[k + 1] && (kbest == 0 || pw[k] > pw[kbest])) kbest = k;

  const double t_env = envelope_time(g, tau, c0);
  if (var == 0.0 || kbest == 0 || !(pw[kbest] > 10.0 * floor))
    throw FitDegenerate(t_env, "no oscillatory peak above the noise floor");

  double off = 0.0;
  const double den = pw[kbest - 1] - 2.0 * pw[kbest] + pw[kbest + 1];
  if (den < 0.0) off = 0.5 * (pw[kbest - 1] - pw[kbest + 1]) / den;
  const double omega0 = 2.0 * M_PI * (static_cast<double>(kbest) + off) / (static_cast<double>(npad) * dt);
  const double rate0 = std::isfinite(t_env) ? 1.0 / t_env : 0.0;

  // Linear solve for amplitude, phase and offset at the guessed rate and frequency.
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = tau[i] - tau[0];
    const double e = std::exp(-rate0 * t);
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = e * std::cos(omega0 * t);
    m(r, 1) = e * std::sin(omega0 * t);
    m(r, 2) = 1.0;
    rhs(r) = g[i];
  }
  const Eigen::Vector3d lin = m.colPivHouseholderQr().solve(rhs);

  std::vector<double> shifted(n);
  for (std::size_t i = 0; i < n; ++i) shifted[i] = tau[i] - tau[0];
  DampedCosine fn{g, shifted};
  Eigen::VectorXd x(5);
  x << std::hypot(lin(0), lin(1)), rate0, omega0, std::atan2(-lin(1), lin(0)), lin(2);
  Eigen::LevenbergMarquardt<DampedCosine> lm(fn);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-14;
  lm.minimize(x);

  Eigen::VectorXd f(static_cast<Eigen::Index>(n));
  fn(x, f);
  if (!f.allFinite()) throw FitDegenerate(t_env, "damped-sinusoid fit diverged");
  CoherenceFit fit;
  fit.amplitude = x(0);
  fit.t_coh = x(1) > 0.0 ? 1.0 / x(1) : std::numeric_limits<double>::infinity();
  fit.omega = std::abs(x(2));
  // Shift the phase back to the caller's time origin.
  fit.phase = std::remainder(x(3) - x(2) * tau[0], 2.0 * M_PI);
  if (fit.amplitude < 0.0) {
    fit.amplitude = -fit.amplitude;
    fit.phase = std::remainder(fit.phase + M_PI, 2.0 * M_PI);
  }
  if (x(2) < 0.0) fit.phase = -fit.phase;
  fit.offset = x(4);
  fit.residual_norm = f.norm();
  return fit;
}

}  // namespace cqed::quantum
