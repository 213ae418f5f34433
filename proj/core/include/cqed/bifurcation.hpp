#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cqed/params.hpp"
#include "cqed/semiclassical.hpp"

namespace cqed {

// Linearization in the ordered basis (dx, dx*, dp, dp*, dD).
using Jacobian5 = Eigen::Matrix<cplx, 5, 5>;

Jacobian5 jacobian(const DimensionlessParams& d, const MBState& fixed_point);
inline Jacobian5 jacobian(const DimensionlessParams& d, const BranchPoint& bp) {
  return jacobian(d, bp.state());
}

// Closed-form characteristic coefficients at a fixed point with field x_ss.
// Throws NumericError if an imaginary residue exceeds 1e-10 relative.
CharCoeffs char_coeffs(const DimensionlessParams& d, cplx x_ss);

double hopf_indicator(double a1, double a2, double a3, double a4, double a5);

struct Stability {
  bool stable = false;
  CharCoeffs indicators{};
  std::array<cplx, 5> eigenvalues{};  // sorted by descending real part
};

// Verdict from a direct eigensolve; a1..a5 and f are exposed as indicators.
Stability stability(const DimensionlessParams& d, const MBState& fixed_point);
inline Stability stability(const DimensionlessParams& d, const BranchPoint& bp) {
  return stability(d, bp.state());
}

// Fills bp.stable, bp.indicators and bp.eigenvalues.
void classify(const DimensionlessParams& d, BranchPoint& bp);

struct SaddleNode {
  double y_c = 0.0;
  double x_mag = 0.0;
  cplx x_ss{};
};

struct AmplitudeRange {
  double lo = 1e-6;
  double hi = 10.0;
  int samples = 2000;
};

std::vector<SaddleNode> find_saddle_nodes(const DimensionlessParams& d,
                                          const AmplitudeRange& range);

enum class Criticality { Supercritical, Subcritical, Marginal };
const char* to_string(Criticality c);

struct HopfPoint {
  double y_c = 0.0;
  double x_mag = 0.0;
  cplx x_ss{};
  double omega = 0.0;
  std::array<cplx, 3> lambda_rest{};
  double eta3 = 0.0;
  Criticality criticality = Criticality::Marginal;
};

struct HopfScan {
  std::vector<HopfPoint> points;
  std::vector<std::string> diagnostics;  // rejected f-roots
};

HopfScan find_hopf(const DimensionlessParams& d, const AmplitudeRange& range);

struct HopfFrequency {
  double omega = 0.0;
  double b2 = 0.0;  // a4 / omega^2
  double b3 = 0.0;  // a5 / omega^2
};

// Throws NumericError on a degenerate Hopf (omega^2 <= 0 or a1 a2 = a3).
HopfFrequency hopf_frequency(const CharCoeffs& c);

// Roots of lambda^3 + a1 lambda^2 + b2 lambda + b3 via Cardano, choosing the
// cube-root branch with the smallest polynomial residual.
std::array<cplx, 3> residual_eigenvalues(const CharCoeffs& c, double omega);

// Eigenvector matrix alpha (columns alpha_i) in closed form and its inverse.
struct EigenBasis {
  std::array<cplx, 5> lambdas{};
  Jacobian5 alpha;
  Jacobian5 beta;
  double condition = 0.0;
};

// lambdas ordered as (i omega, -i omega, l3, l4, l5) at a Hopf point, or any
// spectrum in general. When lambdas[1] == conj(lambdas[0]) the second vector
// is built as the component-swapped conjugate of the first.
EigenBasis eigenvectors(const DimensionlessParams& d, cplx x_ss,
                        const std::array<cplx, 5>& lambdas);

struct Eta3Result {
  double eta3 = 0.0;
  Criticality criticality = Criticality::Marginal;
  cplx b20{};  // b20(1)
  cplx b11{};  // b11(1)
  cplx b21{};  // b21(1)
};

// First Lyapunov coefficient from the quadratic center-manifold reduction.
Eta3Result eta3(const DimensionlessParams& d, const EigenBasis& basis,
                double omega);
Eta3Result eta3(const DimensionlessParams& d, cplx x_ss, double omega,
                const std::array<cplx, 3>& lambda_rest);

nlohmann::json bifurcation_json(std::span<const SaddleNode> saddles,
                                std::span<const HopfPoint> hopfs);

}  // namespace cqed
