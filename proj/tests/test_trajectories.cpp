#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cqed/error.hpp"
#include "cqed/trajectories.hpp"

using namespace cqed;
using namespace cqed::trajectories;

namespace {

PhysicalParams cavity(double drive, double kappa = 0.1) {
  PhysicalParams p;
  p.g0 = 0.0;
  p.kappa = kappa;
  p.gamma_par = 2.0;
  p.drive = drive;
  return p;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Stats {
  double mean, se;
};

Stats stats(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  return {m, std::sqrt(s2 / (v.size() - 1) / v.size())};
}

// Empty-cavity amplitude from vacuum with Delta_c = 0.
double alpha(double drive, double kappa, double t) { return drive / kappa * (1.0 - std::exp(-kappa * t)); }

}  // namespace

TEST(Noise, DeterministicPerSeed) {
  const auto p = to_physical(presets::absorptive_bistability().with_drive(11.3));
  SSEConfig c;
  c.duration = 2.0;
  c.seed = 42;
  c.record_atomic = true;
  const auto a = simulate(p, 30, c);
  const auto b = simulate(p, 30, c);
  EXPECT_EQ(a.i1, b.i1);
  EXPECT_EQ(a.i2, b.i2);
  EXPECT_EQ(a.t, b.t);
  c.seed = 43;
  EXPECT_NE(simulate(p, 30, c).i1, a.i1);
}

TEST(Simulate, SampleCountAndTimes) {
  SSEConfig c;
  c.dt = 0.01;
  c.duration = 3.05;
  c.record_stride = 7;
  const auto r = simulate(cavity(0.0), 4, c);
  ASSERT_EQ(r.t.size(), 43u);  // floor(3.05 / 0.07)
  EXPECT_NEAR(r.t.back(), 43 * 0.07, 1e-12);
  EXPECT_TRUE(r.i2.empty());
  for (double v : r.i1) EXPECT_TRUE(std::isfinite(v));
}

TEST(Simulate, VacuumShotNoise) {
  SSEConfig c;
  c.dt = 0.01;
  c.duration = 5.0;
  c.record_stride = 5;
  std::vector<double> means, vars;
  for (std::uint64_t s = 0; s < 100; ++s) {
    c.seed = s;
    const auto r = simulate(cavity(0.0), 4, c);
    means.push_back(mean_of(r.i1));
    double v = 0.0;
    for (double x : r.i1) v += x * x;
    vars.push_back(v / r.i1.size());
  }
  const auto m = stats(means);
  EXPECT_LT(std::abs(m.mean), 3.0 * m.se);
  // Boxcar-averaged white noise has variance 1 / (dt stride).
  const auto v = stats(vars);
  EXPECT_LT(std::abs(v.mean - 20.0), 3.0 * v.se);
}

TEST(Simulate, DrivenCavityMeanPhotocurrent) {
  // sqrt(2 kappa) 2 Re<a> with <a> = E / kappa: sqrt(0.2) * 11.3.
  SSEConfig c;
  c.duration = 200.0;
  c.record_stride = 40;
  std::vector<double> late;
  for (std::uint64_t s = 0; s < 10; ++s) {
    c.seed = s;
    const auto r = simulate(cavity(0.565), 96, c);
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < r.t.size(); ++i)
      if (r.t[i] > 100.0) sum += r.i1[i], ++n;
    late.push_back(sum / n);
  }
  const auto m = stats(late);
  EXPECT_LT(std::abs(m.mean - std::sqrt(0.2) * 11.3), 3.0 * m.se);
  EXPECT_LT(m.se, 0.05);
}

TEST(Simulate, HalvingDtKeepsEnsembleMean) {
  std::vector<double> coarse, fine;
  SSEConfig c;
  c.duration = 10.0;
  for (std::uint64_t s = 0; s < 60; ++s) {
    c.seed = 1000 + s;
    c.dt = 0.02;
    coarse.push_back(mean_of(simulate(cavity(0.565), 40, c).i1));
    c.dt = 0.01;
    fine.push_back(mean_of(simulate(cavity(0.565), 40, c).i1));
  }
  const auto a = stats(coarse), b = stats(fine);
  EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.se, b.se));
  // Oracle: time average of sqrt(2 kappa) 2 alpha(t) over [0, 10].
  const double kappa = 0.1, e = 0.565, t = 10.0;
  const double avg = std::sqrt(2 * kappa) * 2 * e / kappa * (1.0 - (1.0 - std::exp(-kappa * t)) / (kappa * t));
  EXPECT_LT(std::abs(b.mean - avg), 3.0 * b.se);
}

TEST(Simulate, UnnormalizedLogNormCompensator) {
  // Linear SSE: d log|psi|^2 = sqrt(2 kappa) x1 dW + kappa x1^2 dt with
  // x1 = 2 alpha(t) deterministic for an empty cavity.
  const double kappa = 0.1, e = 0.3, t_end = 10.0;
  SSEConfig c;
  c.dt = 0.005;
  c.duration = t_end;
  c.renormalize = false;
  std::vector<double> l;
  for (std::uint64_t s = 0; s < 200; ++s) {
    c.seed = s;
    l.push_back(2.0 * simulate(cavity(e, kappa), 40, c).log_norm);
  }
  double comp = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = 2.0 * alpha(e, kappa, (i + 0.5) * t_end / n);
    comp += kappa * x * x * t_end / n;
  }
  const auto m = stats(l);
  EXPECT_LT(std::abs(m.mean - comp), 3.0 * m.se);

  c.seed = 9;
  const auto raw = simulate(cavity(e, kappa), 40, c);
  c.renormalize = true;
  const auto norm = simulate(cavity(e, kappa), 40, c);
  EXPECT_NEAR(raw.log_norm, norm.log_norm, 1e-9 * std::abs(norm.log_norm));
  for (std::size_t i = 0; i < raw.i1.size(); i += 97) EXPECT_NEAR(raw.i1[i], norm.i1[i], 1e-8);
}

TEST(Simulate, AtomicPhaseLeavesCavityStatistics) {
  const auto p = to_physical(presets::absorptive_bistability().with_drive(11.3));
  SSEConfig c;
  c.duration = 3.0;
  c.record_stride = 10;
  auto collect = [&](double phi2) {
    c.phi2 = phi2;
    std::vector<double> m, v;
    for (std::uint64_t s = 0; s < 200; ++s) {
      c.seed = 500 + s;
      const auto r = simulate(p, 30, c);
      const double mu = mean_of(r.i1);
      m.push_back(mu);
      double var = 0.0;
      for (double x : r.i1) var += (x - mu) * (x - mu);
      v.push_back(var / (r.i1.size() - 1));
    }
    return std::pair{stats(m), stats(v)};
  };
  const auto [m0, v0] = collect(0.0);
  const auto [m1, v1] = collect(M_PI / 2);
  EXPECT_LT(std::abs(m0.mean - m1.mean), 3.0 * std::hypot(m0.se, m1.se));
  EXPECT_LT(std::abs(v0.mean - v1.mean), 3.0 * std::hypot(v0.se, v1.se));
}

TEST(Simulate, TruncationFailureReportsTime) {
  SSEConfig c;
  c.duration = 50.0;
  try {
    simulate(cavity(0.565), 8, c);
    FAIL() << "expected truncation failure";
  } catch (const TruncationFailure& e) {
    EXPECT_EQ(e.n_max(), 8);
    EXPECT_NE(std::string(e.what()).find("at t = "), std::string::npos);
  }
}

TEST(Simulate, RejectsUnsupportedAndInvalid) {
  auto p = cavity(0.1);
  p.gamma_nr = 0.5;
  SSEConfig c;
  EXPECT_THROW(simulate(p, 4, c), UnsupportedConfiguration);
  p.gamma_nr = 0.0;
  p.n_atoms = 2;
  EXPECT_THROW(simulate(p, 4, c), UnsupportedConfiguration);
  p.n_atoms = 1;
  auto bad = c;
  bad.dt = -0.01;
  EXPECT_THROW(simulate(p, 4, bad), InvalidParameter);
  bad = c;
  bad.dt = 0.1;
  bad.duration = 5.0;
  EXPECT_THROW(simulate(p, 4, bad), InvalidParameter);
  bad = c;
  bad.phi1 = 3.5;
  EXPECT_THROW(simulate(p, 4, bad), InvalidParameter);
  bad = c;
  bad.record_stride = 0;
  EXPECT_THROW(simulate(p, 4, bad), InvalidParameter);
  EXPECT_THROW(simulate(p, 4, c, quantum::Vec::Zero(3)), InvalidParameter);
}

TEST(Simulate, DefaultStepFromFastestRate) {
  const auto p = to_physical(presets::absorptive_bistability().with_drive(11.3));
  // g0 sqrt(nbar + 1) = 1.41 sqrt(32.9...) dominates.
  const double rate = p.g0 * std::sqrt(quantum::empty_cavity_photons(p) + 1.0);
  EXPECT_NEAR(default_dt(p), 1.0 / (40.0 * rate), 1e-15);
  EXPECT_NEAR(default_dt(p, 100.0), 1.0 / 4000.0, 1e-15);
}

TEST(Ensemble, ZeroDurationReturnsInitialExpectation) {
  const auto ops = quantum::build_space(6);
  const quantum::SpMat x = ops.a + ops.adag;
  quantum::Vec psi = quantum::Vec::Zero(ops.space.dim());
  psi(ops.space.index(0, 0)) = 1.0;
  psi(ops.space.index(0, 1)) = 1.0;
  SSEConfig c;
  c.duration = 0.0;
  const auto e = ensemble_check(cavity(0.2), 6, c, 50, x, psi);
  ASSERT_EQ(e.t.size(), 1u);
  EXPECT_DOUBLE_EQ(e.ensemble_mean[0], 1.0);
  EXPECT_DOUBLE_EQ(e.master[0], 1.0);
  EXPECT_EQ(e.max_deviation_sigma, 0.0);
  EXPECT_THROW(ensemble_check(cavity(0.2), 6, c, 49, x, psi), InvalidParameter);
}

TEST(Ensemble, DrivenCavityAgreesWithMaster) {
  const auto ops = quantum::build_space(40);
  const quantum::SpMat x = ops.a + ops.adag;
  SSEConfig c;
  c.duration = 10.0;
  c.record_stride = 40;
  const auto e = ensemble_check(cavity(0.565), 40, c, 50, x, ground_vacuum(ops.space));
  EXPECT_LT(e.max_deviation_sigma, 3.0);
  EXPECT_NEAR(e.master.back(), 2.0 * alpha(0.565, 0.1, 10.0), 1e-6);
}

TEST(Ensemble, JobSplitDoesNotChangeResult) {
  const auto p = to_physical(presets::absorptive_bistability().with_drive(11.3));
  const auto ops = quantum::build_space(20);
  const quantum::SpMat n = ops.adag * ops.a;
  SSEConfig c;
  c.duration = 0.5;
  c.record_stride = 20;
  const auto a = ensemble_check(p, 20, c, 50, n, ground_vacuum(ops.space), 1);
  const auto b = ensemble_check(p, 20, c, 50, n, ground_vacuum(ops.space), 3);
  EXPECT_EQ(a.ensemble_mean, b.ensemble_mean);
  EXPECT_LT(a.max_deviation_sigma, 3.0);
}

TEST(Spectrum, WhiteNoiseIsFlat) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> x(1 << 16);
  for (auto& v : x) v = n(rng);
  const double dt = 0.01;
  const auto s = power_spectrum(x, dt, 256, 0.5);
  EXPECT_EQ(s.segments, 511);
  EXPECT_NEAR(s.frequency.back(), 0.5 / dt, 1e-12);
  double integral = 0.0;
  for (std::size_t k = 0; k < s.power.size(); ++k) {
    EXPECT_GE(s.power[k], 0.0);
    integral += s.power[k] * (s.frequency[1] - s.frequency[0]);
  }
  EXPECT_NEAR(integral, 4.0, 0.1);
  // One-sided level 2 sigma^2 dt; per-bin scatter ~ 1/sqrt(segments).
  for (std::size_t k = 2; k + 2 < s.power.size(); ++k) EXPECT_NEAR(s.power[k], 0.08, 0.08 * 0.25);
}

TEST(Spectrum, SinusoidPeakIsBinAccurate) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  const double dt = 0.05, f0 = 0.9557;
  std::vector<double> x(20000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.8 * std::cos(2 * M_PI * f0 * i * dt) + n(rng);
  const auto s = power_spectrum(x, dt, 512);
  const auto pk = find_peak(s, 0.1, 5.0);
  EXPECT_LE(std::abs(pk.frequency - f0), 0.5 * (s.frequency[1] - s.frequency[0]));
  EXPECT_GT(pk.ratio(), 10.0);
}

TEST(Spectrum, RejectsShortRecord) {
  const std::vector<double> x(100, 0.0);
  EXPECT_THROW(power_spectrum(x, 0.1, 64), InvalidParameter);
  EXPECT_THROW(power_spectrum(x, 0.1, 4), InvalidParameter);
  EXPECT_THROW(power_spectrum(x, 0.1, 32, 1.0), InvalidParameter);
}

TEST(Output, RecordAndSpectrumFormats) {
  SSEConfig c;
  c.dt = 0.01;
  c.duration = 1.0;
  c.record_stride = 10;
  c.record_atomic = true;
  c.seed = 77;
  const auto r = simulate(cavity(0.0), 3, c);
  std::ostringstream os;
  write_record_csv(os, r);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,I_hom1,I_hom2");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 11);
  const auto j = record_sidecar(r);
  EXPECT_EQ(j["seed"], 77u);
  EXPECT_EQ(j["n_max"], 3);
  EXPECT_EQ(j["stride"], 10);
  EXPECT_EQ(j["config_hash"], record_sidecar(simulate(cavity(0.0), 3, c))["config_hash"]);
  c.seed = 78;
  EXPECT_NE(j["config_hash"], record_sidecar(simulate(cavity(0.0), 3, c))["config_hash"]);
  std::ostringstream sp;
  write_spectrum_csv(sp, power_spectrum(std::vector<double>(64, 1.0), 0.1, 16));
  EXPECT_EQ(sp.str().substr(0, sp.str().find('\n')), "freq,power");
}
