#include "cqed/semiclassical.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

#include "cqed/bifurcation.hpp"
#include "cqed/error.hpp"
#include "cqed/io.hpp"

namespace cqed {

namespace odeint = boost::numeric::odeint;

namespace {

constexpr cplx kI{0.0, 1.0};

using Packed = std::array<double, 5>;

Packed pack(const MBState& s) {
  return {s.x.real(), s.x.imag(), s.p.real(), s.p.imag(), s.d_inv};
}

MBState unpack(const Packed& v) {
  return {{v[0], v[1]}, {v[2], v[3]}, v[4]};
}

// Calls observe(index, t, state) for every sample time; times must ascend.
void dense_integrate(const DimensionlessParams& d, const MBState& s0,
                     std::size_t n_samples,
                     const std::function<double(std::size_t)>& time_of,
                     const IntegrationOptions& opt,
                     const std::function<void(std::size_t, double, const MBState&)>& observe) {
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0))
    throw InvalidParameter("tolerance", "rtol and atol must be > 0");
  if (n_samples == 0) return;

  auto rhs = [&d](const Packed& v, Packed& dv, double) {
    dv = pack(mb_rhs(unpack(v), d));
  };

  const double t_end = time_of(n_samples - 1);
  std::size_t next = 0;
  while (next < n_samples && time_of(next) <= 0.0) {
    observe(next, time_of(next), s0);
    ++next;
  }
  if (next == n_samples) return;

  auto stepper = odeint::make_dense_output(opt.atol, opt.rtol,
                                           odeint::runge_kutta_dopri5<Packed>());
  // Initial step from the fastest linear rate.
  const double rate = std::max({d.k * std::hypot(1.0, d.theta),
                                std::hypot(1.0, d.delta), d.gamma, 1.0});
  stepper.initialize(pack(s0), 0.0, 0.01 / rate);

  Packed buf;
  try {
    while (next < n_samples) {
      stepper.do_step(rhs);
      const double t = stepper.current_time();
      const double h = stepper.current_time_step();
      const auto& cur = stepper.current_state();
      for (double v : cur) {
        if (!std::isfinite(v))
          throw IntegrationFailure(t, "non-finite Maxwell-Bloch state");
      }
      if (h < 1e-13 * std::max(1.0, std::abs(t)))
        throw IntegrationFailure(t, "step size underflow");
      while (next < n_samples && time_of(next) <= t) {
        stepper.calc_state(time_of(next), buf);
        observe(next, time_of(next), unpack(buf));
        ++next;
      }
      if (t >= t_end && next < n_samples) {
        observe(next, time_of(next), unpack(cur));
        ++next;
      }
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrationFailure(stepper.current_time(), e.what());
  }
}

}  // namespace

MBState mb_rhs(const MBState& s, const DimensionlessParams& d) {
  MBState r;
  r.x = -d.k * ((1.0 + kI * d.theta) * s.x + 2.0 * d.cooperativity * s.p - d.y);
  r.p = -(1.0 + kI * d.delta) * s.p + s.x * s.d_inv;
  r.d_inv = -d.gamma * (s.d_inv - 1.0 + std::real(std::conj(s.x) * s.p));
  return r;
}

double max_norm(const MBState& s) {
  return std::max({std::abs(s.x.real()), std::abs(s.x.imag()),
                   std::abs(s.p.real()), std::abs(s.p.imag()),
                   std::abs(s.d_inv)});
}

double drive_for_amplitude(const DimensionlessParams& d, double x_mag) {
  if (!(x_mag >= 0.0)) throw InvalidParameter("x_mag", "must be >= 0");
  const double s = 1.0 + d.delta * d.delta + x_mag * x_mag;
  const double re = 1.0 + 2.0 * d.cooperativity / s;
  const double im = d.theta - 2.0 * d.cooperativity * d.delta / s;
  return x_mag * std::hypot(re, im);
}

BranchPoint branch_point_at_amplitude(const DimensionlessParams& d, double x_mag) {
  BranchPoint bp;
  bp.y = drive_for_amplitude(d, x_mag);
  const double s = 1.0 + d.delta * d.delta + x_mag * x_mag;
  const cplx denom = (1.0 + kI * d.theta) +
                     2.0 * d.cooperativity * (1.0 - kI * d.delta) / s;
  bp.x_ss = bp.y / denom;
  // |x_ss| equals x_mag up to rounding; pin it.
  if (x_mag > 0.0) bp.x_ss *= x_mag / std::abs(bp.x_ss);
  bp.p_ss = (1.0 - kI * d.delta) * bp.x_ss / s;
  bp.d_ss = (1.0 + d.delta * d.delta) / s;
  return bp;
}

std::vector<BranchPoint> steady_states(const DimensionlessParams& d) {
  d.validate();
  if (d.y < 0.0) throw InvalidParameter("y", "drive must be >= 0");

  // y^2 S^2 = I [(S + 2C)^2 + (Theta S - 2 C Delta)^2], S = s0 + I, I = |x|^2.
  const double s0 = 1.0 + d.delta * d.delta;
  const double u = s0 + 2.0 * d.cooperativity;
  const double v = d.theta * s0 - 2.0 * d.cooperativity * d.delta;
  const double y2 = d.y * d.y;
  const double c3 = 1.0 + d.theta * d.theta;
  const double c2 = 2.0 * u + 2.0 * d.theta * v - y2;
  const double c1 = u * u + v * v - 2.0 * y2 * s0;
  const double c0 = -y2 * s0 * s0;

  std::vector<double> intensities;
  if (d.y == 0.0) {
    intensities.push_back(0.0);
  } else {
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    companion(0, 0) = -c2 / c3;
    companion(0, 1) = -c1 / c3;
    companion(0, 2) = -c0 / c3;
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(companion, false);
    if (es.info() != Eigen::Success)
      throw NumericError("companion eigensolve failed for the steady-state cubic");
    auto cubic = [&](double x) { return ((c3 * x + c2) * x + c1) * x + c0; };
    auto dcubic = [&](double x) { return (3.0 * c3 * x + 2.0 * c2) * x + c1; };
    for (int i = 0; i < 3; ++i) {
      const cplx r = es.eigenvalues()(i);
      const double tol = 1e-9 * (1.0 + std::abs(r));
      if (std::abs(r.imag()) > tol || r.real() < -tol) continue;
      double x = std::max(0.0, r.real());
      for (int it = 0; it < 4; ++it) {
        const double dp = dcubic(x);
        if (dp == 0.0) break;
        const double nx = x - cubic(x) / dp;
        if (!(nx >= 0.0) || std::abs(nx - x) > 1e-6 * (1.0 + x)) break;
        x = nx;
      }
      intensities.push_back(x);
    }
    std::sort(intensities.begin(), intensities.end());
    intensities.erase(
        std::unique(intensities.begin(), intensities.end(),
                    [](double a, double b) {
                      return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(b));
                    }),
        intensities.end());
  }

  std::vector<BranchPoint> out;
  out.reserve(intensities.size());
  for (double intensity : intensities) {
    const double s = s0 + intensity;
    BranchPoint bp;
    bp.y = d.y;
    bp.x_ss = d.y / ((1.0 + kI * d.theta) +
                     2.0 * d.cooperativity * (1.0 - kI * d.delta) / s);
    bp.p_ss = (1.0 - kI * d.delta) * bp.x_ss / s;
    bp.d_ss = s0 / s;
    classify(d, bp);
    out.push_back(bp);
  }
  return out;
}

std::vector<TrajectorySample> integrate(const DimensionlessParams& d,
                                        const MBState& s0,
                                        std::span<const double> sample_times,
                                        const IntegrationOptions& opt) {
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (!(sample_times[i] >= 0.0) ||
        (i > 0 && sample_times[i] < sample_times[i - 1]))
      throw InvalidParameter("sample_times", "must be >= 0 and ascending");
  }
  std::vector<TrajectorySample> out(sample_times.size());
  dense_integrate(
      d, s0, sample_times.size(), [&](std::size_t i) { return sample_times[i]; },
      opt, [&](std::size_t i, double t, const MBState& s) { out[i] = {t, s}; });
  return out;
}

std::vector<TrajectorySample> integrate(const DimensionlessParams& d,
                                        const MBState& s0, double t_final,
                                        double dt, const IntegrationOptions& opt) {
  if (!(t_final > 0.0)) throw InvalidParameter("t_final", "must be > 0");
  if (!(dt > 0.0)) throw InvalidParameter("dt", "must be > 0");
  const auto n = static_cast<std::size_t>(std::floor(t_final / dt + 1e-9)) + 1;
  std::vector<TrajectorySample> out(n);
  dense_integrate(
      d, s0, n, [&](std::size_t i) { return std::min(t_final, i * dt); }, opt,
      [&](std::size_t i, double t, const MBState& s) { out[i] = {t, s}; });
  return out;
}

LimitCycle find_limit_cycle(const DimensionlessParams& d, const MBState& s0,
                            const LimitCycleOptions& opt) {
  d.validate();
  const double settle = opt.settle_time > 0.0
                            ? opt.settle_time
                            : 50.0 / std::min({d.k, 1.0, d.gamma});
  const double window =
      opt.sample_time > 0.0 ? opt.sample_time : std::max(200.0, 40.0 / d.k);
  if (!(opt.sample_dt > 0.0)) throw InvalidParameter("sample_dt", "must be > 0");

  // Transient: only the end state is kept.
  MBState settled = s0;
  const double settle_times[] = {settle};
  dense_integrate(
      d, s0, 1, [&](std::size_t) { return settle_times[0]; }, opt.tolerances,
      [&](std::size_t, double, const MBState& s) { settled = s; });

  const auto n = static_cast<std::size_t>(std::floor(window / opt.sample_dt)) + 1;
  std::vector<double> mag(n);
  MBState last = settled;
  dense_integrate(
      d, settled, n, [&](std::size_t i) { return i * opt.sample_dt; },
      opt.tolerances, [&](std::size_t i, double, const MBState& s) {
        mag[i] = std::abs(s.x);
        last = s;
      });

  LimitCycle lc;
  lc.y = d.y;
  lc.final_state = last;
  const auto [mn, mx] = std::minmax_element(mag.begin(), mag.end());
  lc.amp_min = *mn;
  lc.amp_max = *mx;
  if (lc.amp_max - lc.amp_min < 1e-6 * std::max(lc.amp_max, 1e-300)) {
    lc.amp_min = lc.amp_max = mag.back();
    lc.converged = false;
    return lc;
  }

  // Interior maxima refined by a parabola through the three samples.
  std::vector<double> peak_t, peak_h;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (mag[i] > mag[i - 1] && mag[i] >= mag[i + 1]) {
      const double a = mag[i - 1], b = mag[i], c = mag[i + 1];
      const double den = a - 2.0 * b + c;
      double off = 0.0, h = b;
      if (den < 0.0) {
        off = 0.5 * (a - c) / den;
        h = b - 0.25 * (a - c) * off;
      }
      peak_t.push_back((static_cast<double>(i) + off) * opt.sample_dt);
      peak_h.push_back(h);
    }
  }
  if (peak_t.size() < 3) return lc;

  lc.period = (peak_t.back() - peak_t.front()) / static_cast<double>(peak_t.size() - 1);
  const auto [hmin, hmax] = std::minmax_element(peak_h.begin(), peak_h.end());
  lc.amp_max = std::max(lc.amp_max, *hmax);
  lc.converged = (*hmax - *hmin) <= 0.01 * *hmax && lc.period > 0.0;
  return lc;
}

void write_trajectory_csv(std::ostream& os,
                          std::span<const TrajectorySample> samples) {
  io::CsvWriter w(os, {"t", "re_x", "im_x", "re_p", "im_p", "D"});
  for (const auto& s : samples) {
    w << s.t << s.s.x.real() << s.s.x.imag() << s.s.p.real() << s.s.p.imag()
      << s.s.d_inv;
    w.end_row();
  }
}

void write_branch_csv(std::ostream& os, std::span<const BranchPoint> points) {
  io::CsvWriter w(os, {"y", "abs_x", "re_x", "im_x", "D", "stable", "a5", "f"});
  for (const auto& bp : points) {
    w << bp.y << std::abs(bp.x_ss) << bp.x_ss.real() << bp.x_ss.imag() << bp.d_ss
      << bp.stable << bp.indicators.a5 << bp.indicators.f;
    w.end_row();
  }
}

}  // namespace cqed
