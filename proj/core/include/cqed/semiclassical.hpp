#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "cqed/params.hpp"

namespace cqed {

// Scaled Maxwell-Bloch state: field x (units of sqrt(n0)), polarization p,
// inversion D.
struct MBState {
  cplx x{};
  cplx p{};
  double d_inv = 1.0;
};

// a1..a5 of lambda^5 + a1 lambda^4 + ... + a5 and the Hopf indicator f.
struct CharCoeffs {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0;
  double f = 0;
  std::array<double, 5> as_array() const { return {a1, a2, a3, a4, a5}; }
};

struct BranchPoint {
  double y = 0.0;
  cplx x_ss{};
  cplx p_ss{};
  double d_ss = 1.0;
  bool stable = false;
  CharCoeffs indicators{};
  std::array<cplx, 5> eigenvalues{};

  MBState state() const { return {x_ss, p_ss, d_ss}; }
};

struct LimitCycle {
  double y = 0.0;
  double amp_max = 0.0;
  double amp_min = 0.0;
  double period = 0.0;
  bool converged = false;
  MBState final_state{};  // last state of the sampling window, for continuation

  double half_amplitude() const { return 0.5 * (amp_max - amp_min); }
};

struct TrajectorySample {
  double t = 0.0;
  MBState s{};
};

struct IntegrationOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
};

struct LimitCycleOptions {
  double settle_time = 0.0;  // <= 0 selects 50 / min(k, 1, gamma)
  double sample_time = 0.0;  // <= 0 selects max(200, 40 / k)
  double sample_dt = 0.01;
  IntegrationOptions tolerances{};
};

// Time derivative of the scaled Maxwell-Bloch equations.
MBState mb_rhs(const MBState& s, const DimensionlessParams& d);

double max_norm(const MBState& s);

// Closed-form drive that sustains a fixed point with |x_ss| = x_mag.
double drive_for_amplitude(const DimensionlessParams& d, double x_mag);

// Fixed point with |x_ss| = x_mag; drive taken from drive_for_amplitude.
// Stability fields are left default; see bifurcation.hpp for classification.
BranchPoint branch_point_at_amplitude(const DimensionlessParams& d, double x_mag);

// All fixed points at drive d.y, sorted by |x_ss|, with stability populated.
std::vector<BranchPoint> steady_states(const DimensionlessParams& d);

// Adaptive Dormand-Prince 5(4) integration with dense output at the given
// sample times (ascending, >= 0). The initial state is taken at t = 0.
std::vector<TrajectorySample> integrate(const DimensionlessParams& d,
                                        const MBState& s0,
                                        std::span<const double> sample_times,
                                        const IntegrationOptions& opt = {});

// Uniform sampling of [0, t_final] at step dt.
std::vector<TrajectorySample> integrate(const DimensionlessParams& d,
                                        const MBState& s0, double t_final,
                                        double dt,
                                        const IntegrationOptions& opt = {});

LimitCycle find_limit_cycle(const DimensionlessParams& d, const MBState& s0,
                            const LimitCycleOptions& opt = {});

void write_trajectory_csv(std::ostream& os,
                          std::span<const TrajectorySample> samples);
void write_branch_csv(std::ostream& os, std::span<const BranchPoint> points);

}  // namespace cqed
