#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "cqed/error.hpp"
#include "cqed/params.hpp"
#include "cqed/semiclassical.hpp"

namespace cqed::quantum {

using SpMat = Eigen::SparseMatrix<cplx>;
using DenseMat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Composite index i = atom * (n_max + 1) + fock, atom 0 = ground, 1 = excited.
struct HilbertConfig {
  int n_max = 1;
  int field_dim() const { return n_max + 1; }
  int dim() const { return 2 * (n_max + 1); }
  int index(int atom, int fock) const { return atom * field_dim() + fock; }
};

struct Operators {
  HilbertConfig space;
  SpMat a, adag;  // identity (x) a_field
  SpMat sm, sp;   // sigma_- = |g><e|, sigma_+
  SpMat sz;       // [sigma_+, sigma_-]
  SpMat id;
};

Operators build_space(int n_max);

// Throws UnsupportedConfiguration unless p.n_atoms == 1.
SpMat hamiltonian(const PhysicalParams& p, const Operators& ops);

// Lindblad generator acting on column-stacked rho: vec(A rho B) = (B^T (x) A) vec(rho).
SpMat liouvillian(const PhysicalParams& p, const Operators& ops);

Vec vec(const DenseMat& rho);
DenseMat unvec(const Vec& v, int dim);

DenseMat field_reduced(const DenseMat& rho, const HilbertConfig& space);
// Total population of the two highest Fock levels.
double top_population(const DenseMat& rho, const HilbertConfig& space);
cplx expect(const SpMat& op, const DenseMat& rho);

// Empty-cavity photon number |E / (kappa (1 + i Theta))|^2 and the starting
// cutoff ceil(4 nbar + 20) derived from it.
double empty_cavity_photons(const PhysicalParams& p);
int initial_cutoff(const PhysicalParams& p);

struct TruncationPolicy {
  int n_max_start = 0;  // <= 0 selects initial_cutoff(p)
  int n_max_ceiling = 256;
  double tolerance = 1e-8;  // bound on top_population
};

struct SteadyState {
  Operators ops;
  DenseMat rho;
  double top_population = 0.0;
  double min_eigenvalue = 0.0;
  double trace_error = 0.0;
  double hermiticity_error = 0.0;  // before symmetrization
  double residual = 0.0;           // max |L vec(rho)|
  double mean_photons = 0.0;
  std::vector<int> cutoffs_tried;
};

// Single solve at a fixed cutoff; no truncation check.
SteadyState steady_state_at(const PhysicalParams& p, int n_max);

// Doubles n_max from the policy start until the top-two population falls
// below tolerance; throws TruncationFailure once the ceiling fails.
SteadyState steady_state(const PhysicalParams& p, const TruncationPolicy& policy = {});

// Tr[O L(rho)] minus the closed moment equations for O = a, sigma_-, sigma_z.
// With the top Fock level empty the truncated algebra reproduces them exactly.
struct MomentResidual {
  cplx field{};
  cplx polarization{};
  cplx inversion{};
  double max_abs() const;
};
MomentResidual moment_residual(const DenseMat& rho, const PhysicalParams& p,
                               const Operators& ops);

struct GridSpec {
  double re_min = -1.0, re_max = 1.0;
  double im_min = -1.0, im_max = 1.0;
  int n_re = 201, n_im = 201;
  // Square [-h, h]^2 with h = 1.5 (sqrt(nbar) + 3).
  static GridSpec automatic(double mean_photons);
  double d_re() const { return (re_max - re_min) / (n_re - 1); }
  double d_im() const { return (im_max - im_min) / (n_im - 1); }
  double re(int i) const { return re_min + i * d_re(); }
  double im(int j) const { return im_min + j * d_im(); }
};

struct QFunctionGrid {
  GridSpec spec;
  std::vector<double> values;  // row-major, index j * n_re + i
  int n_max = 0;
  // Coherent-state mass above n_max at the farthest grid point. The truncated
  // rho has no weight there, so it bounds nothing; it is reported so users can
  // see when the grid reaches beyond the basis.
  double coherent_tail_at_edge = 0.0;
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * spec.n_re + i]; }
  // Riemann sum of Q / pi.
  double normalization() const;
};

QFunctionGrid q_function(const DenseMat& rho, const HilbertConfig& space,
                         const GridSpec& spec);
QFunctionGrid q_function(const SteadyState& ss);

// Strict local maxima of the Gaussian-smoothed grid whose height is at least
// rel_threshold times the smoothed global maximum.
struct ModeReport {
  int count = 0;
  std::vector<cplx> locations;
  std::vector<double> heights;
};
ModeReport find_modes(const QFunctionGrid& q, double sigma_cells = 2.0,
                      double rel_threshold = 0.25);

// Radial profiles from the Q centroid: a ring needs a ridge at r > 0 in every
// direction, rising at least min_contrast above the centre value.
struct RingReport {
  bool is_ring = false;
  cplx center{};
  double mean_radius = 0.0;
  double min_ridge_radius = 0.0;
  double center_value = 0.0;
  double min_ridge_value = 0.0;
};
RingReport detect_ring(const QFunctionGrid& q, int angles = 64,
                       double min_contrast = 1.5);

void write_q_csv(std::ostream& os, const QFunctionGrid& q);
// Little-endian float64 values in row-major order; the sidecar describes it.
void write_q_binary(std::ostream& os, const QFunctionGrid& q);
nlohmann::json q_sidecar(const QFunctionGrid& q, const PhysicalParams& p);

struct CorrelationOptions {
  IntegrationOptions tolerances{};
  double truncation_tolerance = 1e-8;  // top-two population in the frame
};

struct Correlation {
  std::vector<double> tau;
  std::vector<double> g;
  double max_imag = 0.0;  // largest imaginary residue of the trace
  // Health of the propagation frame: top-two population of the displaced
  // steady state and |<Y>| disagreement with the caller's steady state.
  int n_max = 0;
  double frame_top_population = 0.0;
  double mean_mismatch = 0.0;
};

// Symmetrized phase-quadrature autocorrelation by quantum regression,
// propagating (Y rho + rho Y)/2 with the master equation. The propagation runs
// in the Fock basis of b = a - E/(kappa + i Delta_c), where the drive cancels,
// and in the interaction picture of Delta_c b^dag b + Delta_a sigma_+ sigma_-.
// The steady state is re-solved there, doubling the cutoff from an estimate
// of <b^dag b> up to the cutoff of ss.
Correlation autocorrelation_y(const PhysicalParams& p, const SteadyState& ss,
                              std::span<const double> tau,
                              const CorrelationOptions& opt = {});

void write_correlation_csv(std::ostream& os, const Correlation& c);

struct CoherenceFit {
  double t_coh = 0.0;
  double omega = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double residual_norm = 0.0;
};

class FitDegenerate : public NumericError {
 public:
  FitDegenerate(double envelope_time, const std::string& what)
      : NumericError(what), envelope_time_(envelope_time) {}
  double envelope_time() const noexcept { return envelope_time_; }

 private:
  double envelope_time_;
};

// Least-squares fit of A exp(-tau/T) cos(Omega tau + phi) + c. Needs at least
// 50 samples on a uniform grid.
CoherenceFit coherence_time(std::span<const double> g, std::span<const double> tau);

}  // namespace cqed::quantum
