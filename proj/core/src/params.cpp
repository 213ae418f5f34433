#include "cqed/params.hpp"

#include <cmath>
#include <set>
#include <string>

#include "cqed/error.hpp"

namespace cqed {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw InvalidParameter(field, what);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void PhysicalParams::validate() const {
  require(finite(g0) && g0 >= 0.0, "g0", "must be finite and >= 0");
  require(finite(kappa) && kappa >= 0.0, "kappa", "must be finite and >= 0");
  require(finite(gamma_par) && gamma_par >= 0.0, "gamma_par",
          "must be finite and >= 0");
  require(finite(gamma_nr) && gamma_nr >= 0.0, "gamma_nr",
          "must be finite and >= 0");
  require(finite(delta_a), "delta_a", "must be finite");
  require(finite(delta_c), "delta_c", "must be finite");
  require(finite(drive), "drive", "must be finite");
  require(n_atoms >= 1, "n_atoms", "must be >= 1");
  require(gamma_perp() > 0.0, "gamma_perp", "gamma_par/2 + gamma_nr must be > 0");
}

void DimensionlessParams::validate() const {
  require(finite(cooperativity) && cooperativity >= 0.0, "cooperativity",
          "must be finite and >= 0");
  require(finite(k) && k > 0.0, "k", "must be finite and > 0");
  require(finite(gamma) && gamma > 0.0, "gamma", "must be > 0");
  require(gamma <= 2.0, "gamma", "gamma > 2 implies negative dephasing");
  require(finite(theta), "theta", "must be finite");
  require(finite(delta), "delta", "must be finite");
  require(finite(y), "y", "must be finite");
}

DimensionlessParams to_dimensionless(const PhysicalParams& p) {
  p.validate();
  require(p.g0 > 0.0, "g0", "must be > 0 for the dimensionless mapping");
  require(p.kappa > 0.0, "kappa", "must be > 0 for the dimensionless mapping");
  const double gp = p.gamma_perp();
  const double n0 = p.gamma_par * gp / (4.0 * p.g0 * p.g0);
  require(n0 > 0.0, "gamma_par", "must be > 0 (n0 vanishes)");

  DimensionlessParams d;
  d.cooperativity = p.n_atoms * p.g0 * p.g0 / (2.0 * p.kappa * gp);
  d.k = p.kappa / gp;
  d.gamma = p.gamma_par / gp;
  d.theta = p.delta_c / p.kappa;
  d.delta = p.delta_a / gp;
  d.y = p.drive / (p.kappa * std::sqrt(n0));
  return d;
}

PhysicalParams to_physical(const DimensionlessParams& d, int n_atoms,
                           double gamma_perp_scale) {
  d.validate();
  require(n_atoms >= 1, "n_atoms", "must be >= 1");
  require(finite(gamma_perp_scale) && gamma_perp_scale > 0.0,
          "gamma_perp_scale", "must be > 0");
  const double gp = gamma_perp_scale;

  PhysicalParams p;
  p.n_atoms = n_atoms;
  p.kappa = d.k * gp;
  p.gamma_par = d.gamma * gp;
  p.gamma_nr = gp * (1.0 - d.gamma / 2.0);
  p.g0 = std::sqrt(2.0 * p.kappa * gp * d.cooperativity / n_atoms);
  p.delta_c = d.theta * p.kappa;
  p.delta_a = d.delta * gp;
  if (p.g0 > 0.0) {
    const double n0 = p.gamma_par * gp / (4.0 * p.g0 * p.g0);
    p.drive = d.y * p.kappa * std::sqrt(n0);
  } else {
    // C = 0: n0 diverges, so y carries no physical drive information.
    p.drive = 0.0;
  }
  return p;
}

CriticalNumbers critical_numbers(const PhysicalParams& p) {
  p.validate();
  require(p.g0 > 0.0, "g0", "critical numbers diverge at g0 = 0");
  const double gp = p.gamma_perp();
  const double g2 = p.g0 * p.g0;
  return {p.gamma_par * gp / (4.0 * g2), 2.0 * gp * p.kappa / g2};
}

nlohmann::json to_json(const PhysicalParams& p) {
  return {{"g0", p.g0},           {"kappa", p.kappa},
          {"gamma_par", p.gamma_par}, {"gamma_nr", p.gamma_nr},
          {"delta_a", p.delta_a}, {"delta_c", p.delta_c},
          {"drive", p.drive},     {"n_atoms", p.n_atoms}};
}

nlohmann::json to_json(const DimensionlessParams& d) {
  return {{"cooperativity", d.cooperativity},
          {"k", d.k},
          {"gamma", d.gamma},
          {"theta", d.theta},
          {"delta", d.delta},
          {"y", d.y}};
}

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw InvalidParameter("json", "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw InvalidParameter(key, "unknown key");
    if (!value.is_number()) throw InvalidParameter(key, "expected a number");
  }
  for (const auto& key : allowed) {
    if (!j.contains(key)) throw InvalidParameter(key, "missing key");
  }
}

}  // namespace

PhysicalParams physical_from_json(const nlohmann::json& j) {
  check_keys(j, {"g0", "kappa", "gamma_par", "gamma_nr", "delta_a", "delta_c",
                 "drive", "n_atoms"});
  PhysicalParams p;
  p.g0 = j.at("g0").get<double>();
  p.kappa = j.at("kappa").get<double>();
  p.gamma_par = j.at("gamma_par").get<double>();
  p.gamma_nr = j.at("gamma_nr").get<double>();
  p.delta_a = j.at("delta_a").get<double>();
  p.delta_c = j.at("delta_c").get<double>();
  p.drive = j.at("drive").get<double>();
  const double n = j.at("n_atoms").get<double>();
  if (n != std::floor(n)) throw InvalidParameter("n_atoms", "must be an integer");
  p.n_atoms = static_cast<int>(n);
  p.validate();
  return p;
}

DimensionlessParams dimensionless_from_json(const nlohmann::json& j) {
  check_keys(j, {"cooperativity", "k", "gamma", "theta", "delta", "y"});
  DimensionlessParams d;
  d.cooperativity = j.at("cooperativity").get<double>();
  d.k = j.at("k").get<double>();
  d.gamma = j.at("gamma").get<double>();
  d.theta = j.at("theta").get<double>();
  d.delta = j.at("delta").get<double>();
  d.y = j.at("y").get<double>();
  d.validate();
  return d;
}

namespace presets {

DimensionlessParams absorptive_bistability() {
  return {10.0, 0.1, 2.0, 0.0, 0.0, 0.0};
}

DimensionlessParams supercritical_hopf() {
  return {50.0, 0.01, 2.0, -600.0, 1.25, 0.0};
}

DimensionlessParams subcritical_hopf() {
  return {200.0, 0.05, 2.0, -55.0, 2.0, 0.0};
}

}  // namespace presets

}  // namespace cqed
