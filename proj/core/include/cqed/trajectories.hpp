#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cqed/params.hpp"
#include "cqed/quantum.hpp"

namespace cqed::trajectories {

struct SSEConfig {
  double dt = 0.0;  // 0 selects default_dt
  double duration = 100.0;
  std::uint64_t seed = 0;
  double phi1 = 0.0;  // cavity local-oscillator phase
  double phi2 = 0.0;  // atomic channel
  int record_stride = 1;
  bool record_atomic = false;
  // Debug switch: without it log_norm tracks the raw norm of the linear SSE.
  bool renormalize = true;
  double omega_estimate = 0.0;  // oscillation frequency entering default_dt
  double truncation_tolerance = 1e-8;

  void validate(double resolved_dt) const;
};

// (1/40) / max(kappa, gamma_perp, g0 sqrt(nbar + 1), |Delta_c|, |Delta_a|, omega)
// with nbar the empty-cavity photon number.
double default_dt(const PhysicalParams& p, double omega_estimate = 0.0);

struct PhotocurrentRecord {
  std::vector<double> t;   // end of each averaging window
  std::vector<double> i1;  // stride-averaged dQ1/dt
  std::vector<double> i2;  // empty unless record_atomic
  std::vector<double> observable;  // conditional <O> at t, when requested
  std::uint64_t seed = 0;
  double dt = 0.0;
  int stride = 1;
  int n_max = 0;
  PhysicalParams params;
  SSEConfig config;
  double max_top_population = 0.0;
  double log_norm = 0.0;  // sum of log ||psi|| removed by renormalization
};

// Ground state and vacuum.
quantum::Vec ground_vacuum(const quantum::HilbertConfig& space);

// Homodyne SSE, Euler-Maruyama in the measurement noise with the constant
// non-Hermitian drift applied as an exact step propagator. Requires
// gamma_nr = 0 and a single atom. Throws TruncationFailure when the
// conditional state's top-two population exceeds the tolerance at a sample.
PhotocurrentRecord simulate(const PhysicalParams& p, int n_max, const SSEConfig& cfg);
PhotocurrentRecord simulate(const PhysicalParams& p, int n_max, const SSEConfig& cfg,
                            const quantum::Vec& psi0, const quantum::SpMat* observable = nullptr);

// Starts from ground_vacuum at the policy's initial cutoff and doubles it
// after each TruncationFailure, up to the ceiling.
PhotocurrentRecord simulate(const PhysicalParams& p, const quantum::TruncationPolicy& policy,
                            const SSEConfig& cfg);

struct EnsembleCheck {
  std::vector<double> t;  // starts at 0
  std::vector<double> ensemble_mean;
  std::vector<double> standard_error;
  std::vector<double> master;
  double max_deviation_sigma = 0.0;
  int n_traj = 0;
};

// Trajectory i uses seed cfg.seed + i. Deviations are measured in standard
// errors floored at 1e-8 (1 + |master|), the master-equation integration accuracy. Jobs > 1 splits trajectories across
// threads; the result does not depend on the split.
EnsembleCheck ensemble_check(const PhysicalParams& p, int n_max, const SSEConfig& cfg,
                             int n_traj, const quantum::SpMat& observable,
                             const quantum::Vec& psi0, int jobs = 1);

struct SpectrumEstimate {
  std::vector<double> frequency;  // cycles per unit time
  std::vector<double> power;      // one-sided density
  int segments = 0;
  int segment_length = 0;
  double overlap = 0.0;
  std::string window = "hann";
};

// Welch estimate with a Hann window; the one-sided density integrates to the
// variance of the record.
SpectrumEstimate power_spectrum(const std::vector<double>& samples, double sample_dt,
                                int segment_length, double overlap = 0.5);
SpectrumEstimate power_spectrum(const PhotocurrentRecord& rec, int segment_length,
                                double overlap = 0.5);

struct SpectralPeak {
  double frequency = 0.0;
  double power = 0.0;
  double floor = 0.0;  // median density over the full band
  double ratio() const { return floor > 0.0 ? power / floor : 0.0; }
};
// Largest bin inside [f_lo, f_hi].
SpectralPeak find_peak(const SpectrumEstimate& s, double f_lo, double f_hi);

void write_record_csv(std::ostream& os, const PhotocurrentRecord& rec);
nlohmann::json record_sidecar(const PhotocurrentRecord& rec);
void write_spectrum_csv(std::ostream& os, const SpectrumEstimate& s);

}  // namespace cqed::trajectories
