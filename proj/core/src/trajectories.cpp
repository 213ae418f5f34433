#include "cqed/trajectories.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include <boost/numeric/odeint.hpp>
#include <fftw3.h>
#include <sodium.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "cqed/error.hpp"
#include "cqed/io.hpp"

namespace cqed::trajectories {

namespace {

using quantum::DenseMat;
using quantum::SpMat;
using quantum::Vec;

constexpr cplx kI{0.0, 1.0};
constexpr double kMasterTolerance = 1e-8;

// Standard normals addressed by (seed, channel, step): ChaCha20 keyed by the
// seed with the channel as nonce, Box-Muller on consecutive uniform pairs.
class NoiseStream {
 public:
  static constexpr std::size_t kChunk = 512;

  NoiseStream(std::uint64_t seed, std::uint64_t channel) {
    if (sodium_init() < 0) throw NumericError("libsodium initialization failed");
    key_.fill(0);
    nonce_.fill(0);
    for (int i = 0; i < 8; ++i) {
      key_[static_cast<std::size_t>(i)] = static_cast<unsigned char>(seed >> (8 * i));
      nonce_[static_cast<std::size_t>(i)] = static_cast<unsigned char>(channel >> (8 * i));
    }
  }

  double normal(std::uint64_t step) {
    const std::uint64_t chunk = step / kChunk;
    if (chunk != loaded_) fill(chunk);
    return buf_[step % kChunk];
  }

 private:
  void fill(std::uint64_t chunk) {
    std::array<std::uint64_t, kChunk> raw{};
    constexpr std::uint64_t blocks_per_chunk = kChunk * sizeof(std::uint64_t) / 64;
    crypto_stream_chacha20_xor_ic(reinterpret_cast<unsigned char*>(raw.data()),
                                  reinterpret_cast<const unsigned char*>(zeros_.data()),
                                  sizeof(raw), nonce_.data(), chunk * blocks_per_chunk,
                                  key_.data());
    for (std::size_t i = 0; i < kChunk; i += 2) {
      const double u1 = 1.0 - static_cast<double>(raw[i] >> 11) * 0x1.0p-53;  // (0, 1]
      const double u2 = static_cast<double>(raw[i + 1] >> 11) * 0x1.0p-53;
      const double r = std::sqrt(-2.0 * std::log(u1));
      buf_[i] = r * std::cos(2.0 * M_PI * u2);
      buf_[i + 1] = r * std::sin(2.0 * M_PI * u2);
    }
    loaded_ = chunk;
  }

  std::array<unsigned char, crypto_stream_chacha20_KEYBYTES> key_{};
  std::array<unsigned char, crypto_stream_chacha20_NONCEBYTES> nonce_{};
  std::array<std::uint64_t, kChunk> zeros_{};
  std::array<double, kChunk> buf_{};
  std::uint64_t loaded_ = ~std::uint64_t{0};
};

double resolve_dt(const PhysicalParams& p, const SSEConfig& cfg) {
  return cfg.dt == 0.0 ? default_dt(p, cfg.omega_estimate) : cfg.dt;
}

void require_supported(const PhysicalParams& p) {
  p.validate();
  if (p.n_atoms != 1) throw UnsupportedConfiguration("trajectories support n_atoms = 1 only");
  if (p.gamma_nr != 0.0)
    throw UnsupportedConfiguration(
        "homodyne SSE reproduces the master equation only for gamma_nr = 0");
}

double top_two(const Vec& psi, const quantum::HilbertConfig& s, double norm2) {
  double pop = 0.0;
  for (int atom = 0; atom < 2; ++atom)
    for (int n = std::max(0, s.n_max - 1); n <= s.n_max; ++n) pop += std::norm(psi(s.index(atom, n)));
  return pop / norm2;
}

}  // namespace

void SSEConfig::validate(double resolved_dt) const {
  if (!(resolved_dt > 0.0) || !std::isfinite(resolved_dt)) throw InvalidParameter("dt", "must be > 0");
  if (!(duration >= 100.0 * resolved_dt) || !std::isfinite(duration))
    throw InvalidParameter("duration", "must be >= 100 dt");
  if (!(std::abs(phi1) <= M_PI)) throw InvalidParameter("phi1", "must lie in [-pi, pi]");
  if (!(std::abs(phi2) <= M_PI)) throw InvalidParameter("phi2", "must lie in [-pi, pi]");
  if (record_stride < 1) throw InvalidParameter("record_stride", "must be >= 1");
  if (!(truncation_tolerance > 0.0)) throw InvalidParameter("truncation_tolerance", "must be > 0");
}

double default_dt(const PhysicalParams& p, double omega_estimate) {
  const double nbar = quantum::empty_cavity_photons(p);
  const double rate = std::max({p.kappa, p.gamma_perp(), p.g0 * std::sqrt(nbar + 1.0),
                                std::abs(p.delta_c), std::abs(p.delta_a), std::abs(omega_estimate)});
  return 1.0 / (40.0 * rate);
}

Vec ground_vacuum(const quantum::HilbertConfig& space) {
  Vec psi = Vec::Zero(space.dim());
  psi(space.index(0, 0)) = 1.0;
  return psi;
}

PhotocurrentRecord simulate(const PhysicalParams& p, int n_max, const SSEConfig& cfg) {
  quantum::HilbertConfig s;
  s.n_max = n_max;
  return simulate(p, n_max, cfg, ground_vacuum(s));
}

PhotocurrentRecord simulate(const PhysicalParams& p, int n_max, const SSEConfig& cfg,
                            const Vec& psi0, const SpMat* observable) {
  require_supported(p);
  const double dt = resolve_dt(p, cfg);
  cfg.validate(dt);
  const auto ops = quantum::build_space(n_max);
  const auto& sp = ops.space;
  if (psi0.size() != sp.dim()) throw InvalidParameter("psi0", "dimension does not match n_max");
  if (!(psi0.norm() > 0.0)) throw InvalidParameter("psi0", "must be nonzero");

  const double gp = p.gamma_perp();
  const SpMat h = quantum::hamiltonian(p, ops);
  const DenseMat drift = DenseMat(-kI * h - p.kappa * SpMat(ops.adag * ops.a) -
                                  gp * SpMat(ops.sp * ops.sm));
  const DenseMat prop = (drift * dt).exp();
  const double r1 = std::sqrt(2.0 * p.kappa), r2 = std::sqrt(2.0 * gp);
  const cplx ph1 = std::polar(1.0, cfg.phi1), ph2 = std::polar(1.0, cfg.phi2);

  PhotocurrentRecord rec;
  rec.seed = cfg.seed;
  rec.dt = dt;
  rec.stride = cfg.record_stride;
  rec.n_max = n_max;
  rec.params = p;
  rec.config = cfg;
  rec.config.dt = dt;
  const auto samples =
      static_cast<std::size_t>(std::floor(cfg.duration / (dt * cfg.record_stride) + 1e-9));
  rec.t.reserve(samples);
  rec.i1.reserve(samples);

  NoiseStream w1(cfg.seed, 1), w2(cfg.seed, 2);
  const double sdt = std::sqrt(dt);
  Vec psi = psi0 / psi0.norm();
  Vec v1(sp.dim()), v2(sp.dim()), tmp(sp.dim());
  double q1 = 0.0, q2 = 0.0;
  double log_scale = 0.0;
  const std::uint64_t steps = samples * static_cast<std::uint64_t>(cfg.record_stride);
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double norm2 = cfg.renormalize ? 1.0 : psi.squaredNorm();
    v1.noalias() = ops.a * psi;
    v2.noalias() = ops.sm * psi;
    const double x1 = 2.0 * std::real(ph1 * psi.dot(v1)) / norm2;
    const double x2 = 2.0 * std::real(ph2 * psi.dot(v2)) / norm2;
    const double dq1 = r1 * x1 * dt + sdt * w1.normal(k);
    const double dq2 = r2 * x2 * dt + sdt * w2.normal(k);
    tmp = psi;
    tmp.noalias() += (r1 * ph1 * dq1) * v1;
    tmp.noalias() += (r2 * ph2 * dq2) * v2;
    psi.noalias() = prop * tmp;
    const double nrm = psi.norm();
    if (!std::isfinite(nrm) || nrm == 0.0)
      throw NumericError("non-finite conditional state at step " + std::to_string(k));
    if (cfg.renormalize) {
      log_scale += std::log(nrm);
      psi /= nrm;
    }
    q1 += dq1;
    q2 += dq2;
    if ((k + 1) % static_cast<std::uint64_t>(cfg.record_stride) == 0) {
      const double t = static_cast<double>(k + 1) * dt;
      const double window = dt * cfg.record_stride;
      rec.t.push_back(t);
      rec.i1.push_back(q1 / window);
      if (cfg.record_atomic) rec.i2.push_back(q2 / window);
      q1 = q2 = 0.0;
      const double n2 = cfg.renormalize ? 1.0 : psi.squaredNorm();
      const double top = top_two(psi, sp, n2);
      rec.max_top_population = std::max(rec.max_top_population, top);
      if (top > cfg.truncation_tolerance)
        throw TruncationFailure(top, n_max,
                                "conditional state top-two population " + io::fmt_double(top) +
                                    " exceeds tolerance at t = " + io::fmt_double(t));
      if (observable) rec.observable.push_back(std::real(psi.dot(*observable * psi)) / n2);
    }
  }
  rec.log_norm = cfg.renormalize ? log_scale : std::log(psi.norm());
  return rec;
}

PhotocurrentRecord simulate(const PhysicalParams& p, const quantum::TruncationPolicy& policy,
                            const SSEConfig& cfg) {
  int n = policy.n_max_start > 0 ? policy.n_max_start : quantum::initial_cutoff(p);
  if (n > policy.n_max_ceiling) throw InvalidParameter("n_max_start", "exceeds the ceiling");
  SSEConfig c = cfg;
  c.truncation_tolerance = policy.tolerance;
  for (;;) {
    try {
      return simulate(p, n, c);
    } catch (const TruncationFailure&) {
      if (n == policy.n_max_ceiling) throw;
      n = std::min(2 * n, policy.n_max_ceiling);
    }
  }
}

EnsembleCheck ensemble_check(const PhysicalParams& p, int n_max, const SSEConfig& cfg,
                             int n_traj, const SpMat& observable, const Vec& psi0, int jobs) {
  namespace odeint = boost::numeric::odeint;
  if (n_traj < 50) throw InvalidParameter("n_traj", "must be >= 50");
  if (jobs < 1) throw InvalidParameter("jobs", "must be >= 1");
  require_supported(p);
  const Vec psi = psi0 / psi0.norm();
  const double initial = std::real(psi.dot(observable * psi));

  EnsembleCheck out;
  out.n_traj = n_traj;
  out.t = {0.0};
  out.ensemble_mean = {initial};
  out.standard_error = {0.0};
  out.master = {initial};
  if (cfg.duration == 0.0) return out;

  std::vector<PhotocurrentRecord> runs(static_cast<std::size_t>(n_traj));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  auto worker = [&](int w) {
    try {
      for (int i = w; i < n_traj; i += jobs) {
        SSEConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(i);
        runs[static_cast<std::size_t>(i)] = simulate(p, n_max, c, psi, &observable);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::size_t m = runs.front().t.size();
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0, sum2 = 0.0;
    for (const auto& r : runs) {
      sum += r.observable[j];
      sum2 += r.observable[j] * r.observable[j];
    }
    const double mean = sum / n_traj;
    const double var = std::max(0.0, (sum2 - n_traj * mean * mean) / (n_traj - 1));
    out.t.push_back(runs.front().t[j]);
    out.ensemble_mean.push_back(mean);
    out.standard_error.push_back(std::sqrt(var / n_traj));
  }

  // Master-equation curve from the same initial state.
  const auto ops = quantum::build_space(n_max);
  const Eigen::SparseMatrix<cplx, Eigen::RowMajor> l = quantum::liouvillian(p, ops);
  const DenseMat rho0 = psi * psi.adjoint();
  using State = std::vector<cplx>;
  State state(rho0.data(), rho0.data() + rho0.size());
  auto rhs = [&l](const State& v, State& dv, double) {
    Eigen::Map<const Vec> in(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::Map<Vec> o(dv.data(), static_cast<Eigen::Index>(dv.size()));
    o.noalias() = l * in;
  };
  std::size_t idx = 0;
  auto observer = [&](const State& v, double) {
    if (idx == 0) {
      ++idx;
      return;
    }
    const DenseMat r = Eigen::Map<const DenseMat>(v.data(), ops.space.dim(), ops.space.dim());
    out.master.push_back(quantum::expect(observable, r).real());
    ++idx;
  };
  std::vector<double> all_times = out.t;
  odeint::integrate_times(odeint::make_dense_output(1e-2 * kMasterTolerance, 1e-2 * kMasterTolerance, odeint::runge_kutta_dopri5<State>()),
                          rhs, state, all_times.begin(), all_times.end(), 1e-3, observer);

  for (std::size_t j = 1; j < out.t.size(); ++j) {
    const double diff = std::abs(out.ensemble_mean[j] - out.master[j]);
    // Floor the error at the ODE tolerance: noiseless observables give se = 0.
    const double se = std::max(out.standard_error[j], kMasterTolerance * (1.0 + std::abs(out.master[j])));
    out.max_deviation_sigma = std::max(out.max_deviation_sigma, diff / se);
  }
  return out;
}

SpectrumEstimate power_spectrum(const std::vector<double>& x, double sample_dt,
                                int segment_length, double overlap) {
  if (segment_length < 8) throw InvalidParameter("segment_length", "must be >= 8");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidParameter("overlap", "must lie in [0, 1)");
  if (!(sample_dt > 0.0)) throw InvalidParameter("sample_dt", "must be > 0");
  const auto len = static_cast<std::size_t>(segment_length);
  if (x.size() < 2 * len)
    throw InvalidParameter("segment_length", "record must hold at least two segments");

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> win(len);
  double wsum2 = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    win[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(len)));
    wsum2 += win[n] * win[n];
  }
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(len * (1.0 - overlap))));
  const double fs = 1.0 / sample_dt;
  const std::size_t bins = len / 2 + 1;

  std::vector<double> in(len);
  std::vector<fftw_complex> spec(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(segment_length, in.data(), spec.data(), FFTW_ESTIMATE);
  SpectrumEstimate s;
  s.power.assign(bins, 0.0);
  for (std::size_t start = 0; start + len <= x.size(); start += hop) {
    for (std::size_t n = 0; n < len; ++n) in[n] = (x[start + n] - mean) * win[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) {
      double pk = (spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1]) / (fs * wsum2);
      if (k > 0 && !(len % 2 == 0 && k == len / 2)) pk *= 2.0;
      s.power[k] += pk;
    }
    ++s.segments;
  }
  fftw_destroy_plan(plan);
  for (auto& v : s.power) v /= s.segments;
  s.frequency.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) s.frequency[k] = static_cast<double>(k) * fs / static_cast<double>(len);
  s.segment_length = segment_length;
  s.overlap = overlap;
  return s;
}

SpectrumEstimate power_spectrum(const PhotocurrentRecord& rec, int segment_length, double overlap) {
  return power_spectrum(rec.i1, rec.dt * rec.stride, segment_length, overlap);
}

SpectralPeak find_peak(const SpectrumEstimate& s, double f_lo, double f_hi) {
  SpectralPeak pk;
  std::vector<double> sorted = s.power;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  pk.floor = sorted[sorted.size() / 2];
  for (std::size_t k = 0; k < s.frequency.size(); ++k) {
    if (s.frequency[k] < f_lo || s.frequency[k] > f_hi) continue;
    if (s.power[k] > pk.power) {
      pk.power = s.power[k];
      pk.frequency = s.frequency[k];
    }
  }
  return pk;
}

void write_record_csv(std::ostream& os, const PhotocurrentRecord& rec) {
  if (rec.i2.empty()) {
    io::CsvWriter w(os, {"t", "I_hom1"});
    for (std::size_t i = 0; i < rec.t.size(); ++i) {
      w << rec.t[i] << rec.i1[i];
      w.end_row();
    }
  } else {
    io::CsvWriter w(os, {"t", "I_hom1", "I_hom2"});
    for (std::size_t i = 0; i < rec.t.size(); ++i) {
      w << rec.t[i] << rec.i1[i] << rec.i2[i];
      w.end_row();
    }
  }
}

nlohmann::json record_sidecar(const PhotocurrentRecord& rec) {
  nlohmann::json cfg = {{"dt", rec.dt},
                        {"duration", rec.config.duration},
                        {"seed", rec.seed},
                        {"phi1", rec.config.phi1},
                        {"phi2", rec.config.phi2},
                        {"record_stride", rec.stride},
                        {"record_atomic", rec.config.record_atomic},
                        {"renormalize", rec.config.renormalize},
                        {"truncation_tolerance", rec.config.truncation_tolerance}};
  nlohmann::json j = {{"config", cfg},
                      {"params", to_json(rec.params)},
                      {"n_max", rec.n_max},
                      {"dt", rec.dt},
                      {"stride", rec.stride},
                      {"seed", rec.seed},
                      {"samples", rec.t.size()},
                      {"max_top_population", rec.max_top_population}};
  j["config_hash"] = io::config_hash({{"config", cfg}, {"params", j["params"]}, {"n_max", rec.n_max}});
  return j;
}

void write_spectrum_csv(std::ostream& os, const SpectrumEstimate& s) {
  io::CsvWriter w(os, {"freq", "power"});
  for (std::size_t k = 0; k < s.frequency.size(); ++k) {
    w << s.frequency[k] << s.power[k];
    w.end_row();
  }
}

}  // namespace cqed::trajectories
