#pragma once

#include <complex>

#include <nlohmann/json.hpp>

namespace cqed {

using cplx = std::complex<double>;

// Absolute rates of the single-mode cavity QED master equation. Rates are in
// units where gamma_perp is the natural clock (see to_physical).
struct PhysicalParams {
  double g0 = 0.0;         // atom-field coupling
  double kappa = 0.0;      // cavity field decay rate (photon loss is 2*kappa)
  double gamma_par = 0.0;  // spontaneous emission rate
  double gamma_nr = 0.0;   // non-radiative dephasing
  double delta_a = 0.0;    // omega_a - omega_l
  double delta_c = 0.0;    // omega_c - omega_l
  double drive = 0.0;      // field amplitude E
  int n_atoms = 1;

  double gamma_perp() const { return gamma_par / 2.0 + gamma_nr; }
  void validate() const;
};

// Control vector of the scaled Maxwell-Bloch equations.
struct DimensionlessParams {
  double cooperativity = 0.0;  // C = N g0^2 / (2 kappa gamma_perp)
  double k = 1.0;              // kappa / gamma_perp
  double gamma = 2.0;          // gamma_par / gamma_perp
  double theta = 0.0;          // delta_c / kappa
  double delta = 0.0;          // delta_a / gamma_perp
  double y = 0.0;              // E / (kappa sqrt(n0))

  void validate() const;
  DimensionlessParams with_drive(double drive) const {
    DimensionlessParams d = *this;
    d.y = drive;
    return d;
  }
};

struct CriticalNumbers {
  double n0 = 0.0;      // saturation photon number
  double cap_n0 = 0.0;  // critical atom number
};

DimensionlessParams to_dimensionless(const PhysicalParams& p);
PhysicalParams to_physical(const DimensionlessParams& d, int n_atoms = 1,
                           double gamma_perp_scale = 1.0);
CriticalNumbers critical_numbers(const PhysicalParams& p);

// Converts a scaled field amplitude to the intracavity coherent amplitude.
inline cplx scale_field(cplx x_dimensionless, double n0) {
  return std::sqrt(n0) * x_dimensionless;
}

// Flat JSON objects with exactly the struct field names; unknown or missing
// keys raise InvalidParameter.
nlohmann::json to_json(const PhysicalParams& p);
nlohmann::json to_json(const DimensionlessParams& d);
PhysicalParams physical_from_json(const nlohmann::json& j);
DimensionlessParams dimensionless_from_json(const nlohmann::json& j);

// Parameter sets of the three reference regimes (absorptive bistability,
// supercritical Hopf, subcritical Hopf). Drive is left at y = 0.
namespace presets {
DimensionlessParams absorptive_bistability();
DimensionlessParams supercritical_hopf();
DimensionlessParams subcritical_hopf();
}  // namespace presets

}  // namespace cqed
