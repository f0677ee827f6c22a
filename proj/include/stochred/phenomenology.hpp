#pragma once

// Closed-form estimates of reduction times and competing rates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stochred/units.hpp"

namespace stochred::phenom {

using units::Quantity;

// Pinned constants (energies in eV).
inline constexpr double kReductionScaleEv = 2.8e6;  // t_R = (2.8 MeV / dE)^2 s
inline constexpr double kProtonMassEv = 938.272e6;
inline constexpr double kElectronMassEv = 0.5110e6;
inline constexpr double kAtomicMassUnitEv = 931.494e6;
inline constexpr double kNitrogenMoleculeEv = 28.0 * kAtomicMassUnitEv;
inline constexpr double kBoltzmannSi = 1.380649e-23;   // J/K
inline constexpr double kProtonMassKg = 1.67262192e-27;

/// t_R = (2.8 MeV / dE)^2 seconds.
inline Quantity t_reduce(const Quantity& delta_e) {
  const double de = delta_e.in(units::kEnergy);
  if (!(de > 0.0)) throw std::invalid_argument("t_reduce: energy spread must be positive");
  const double r = kReductionScaleEv / de;
  return units::seconds(r * r);
}

/// Mass accretion rate per unit area for molecules of rest energy `mass`
/// arriving one per `tau` (time x area: one molecule per cm^2 every tau/cm^2).
inline Quantity mass_rate(const Quantity& mass, const Quantity& tau) {
  mass.require(units::kEnergy);
  tau.require(units::kTimeArea);
  return mass / tau;
}

struct AccretionReduction {
  Quantity t_r;
  double molecules = 0.0;
  bool valid = false;  // at least one molecule accreted within t_R
};

/// t_R = (2.8 MeV s^(1/2) / (A M))^(2/3), from dE = A M t_R.
inline AccretionReduction t_reduce_accretion(const Quantity& area, const Quantity& rate,
                                             const Quantity& molecule_mass) {
  const double a = area.in(units::kArea);
  const double m = rate.in(units::kMassRatePerArea);
  const double mm = molecule_mass.in(units::kEnergy);
  if (!(a > 0.0) || !(m > 0.0) || !(mm > 0.0)) {
    throw std::invalid_argument("t_reduce_accretion: inputs must be positive");
  }
  AccretionReduction r;
  r.t_r = units::seconds(std::cbrt(std::pow(kReductionScaleEv / (a * m), 2.0)));
  r.molecules = a * m * r.t_r.value() / mm;
  r.valid = r.molecules >= 1.0;
  return r;
}

/// Area for which the accretion law gives t_R = t, and the area that
/// accretes one molecule in t; the larger one is required.
struct AreaRequirement {
  Quantity accretion_area;
  Quantity single_molecule_area;
  Quantity required() const {
    return accretion_area.value() >= single_molecule_area.value() ? accretion_area
                                                                  : single_molecule_area;
  }
};

inline AreaRequirement required_area(const Quantity& t, const Quantity& rate,
                                     const Quantity& molecule_mass) {
  const double tt = t.in(units::kTime);
  const double m = rate.in(units::kMassRatePerArea);
  const double mm = molecule_mass.in(units::kEnergy);
  if (!(tt > 0.0) || !(m > 0.0)) throw std::invalid_argument("required_area: bad inputs");
  AreaRequirement r;
  r.accretion_area = units::square_cm(kReductionScaleEv / (m * std::pow(tt, 1.5)));
  r.single_molecule_area = units::square_cm(mm / (m * tt));
  return r;
}

struct Thermal {
  Quantity delta_e;
  Quantity delta_t;
};

/// <dE^2> = k_B T^2 C_V, <dT^2> = k_B T^2 / C_V.
inline Thermal thermal_fluctuation(const Quantity& temperature, const Quantity& heat_capacity) {
  const double t = temperature.in(units::kTemperature);
  const double c = heat_capacity.in(units::kHeatCapacity);
  if (!(t > 0.0) || !(c > 0.0)) {
    throw std::invalid_argument("thermal_fluctuation: T and C_V must be positive");
  }
  const double kt2 = units::kBoltzmannEvPerK * t * t;
  return {units::energy_ev(std::sqrt(kt2 * c)), units::kelvin(std::sqrt(kt2 / c))};
}

/// D = (1/2) x scattering rate.
inline Quantity decoherence_rate(const Quantity& scattering_rate) {
  const double r = scattering_rate.in(units::kInverseTime);
  if (!(r >= 0.0)) throw std::invalid_argument("decoherence_rate: rate must be >= 0");
  return units::per_second(0.5 * r);
}

/// D = N_scatt Re(1 - <S>), |<S>| <= 1.
inline Quantity decoherence_rate(const Quantity& scattering_rate, std::complex<double> s_overlap) {
  const double r = scattering_rate.in(units::kInverseTime);
  if (!(r >= 0.0)) throw std::invalid_argument("decoherence_rate: rate must be >= 0");
  if (std::abs(s_overlap) > 1.0 + 1e-12) {
    throw std::invalid_argument("decoherence_rate: |<S>| must not exceed 1");
  }
  return units::per_second(r * (1.0 - s_overlap.real()));
}

struct ShotNoise {
  double delta_n = 0.0;
  Quantity delta_e;
  Quantity t_r;
};

/// dN = G (N/G)^(1/2) = (N G)^(1/2); dE = dN x carrier mass.
inline ShotNoise shot_noise_energy(double n_charges, double gain, const Quantity& carrier_mass) {
  if (!(n_charges > 0.0) || !(gain > 0.0)) {
    throw std::invalid_argument("shot_noise_energy: N and G must be positive");
  }
  ShotNoise s;
  s.delta_n = std::sqrt(n_charges * gain);
  s.delta_e = units::energy_ev(s.delta_n * carrier_mass.in(units::kEnergy));
  s.t_r = t_reduce(s.delta_e);
  return s;
}

/// Reduction rate over decoherence rate at `area`, given both at the
/// reference area; the ratio scales as area^(1/3).
inline double rate_ratio_at(double ratio_ref, const Quantity& area_ref, const Quantity& area) {
  return ratio_ref * std::cbrt(area.in(units::kArea) / area_ref.in(units::kArea));
}

/// Area at which reduction and decoherence rates are equal.
inline Quantity crossover_area(double ratio_ref, const Quantity& area_ref) {
  if (!(ratio_ref > 0.0)) throw std::invalid_argument("crossover_area: ratio must be > 0");
  return area_ref / (ratio_ref * ratio_ref * ratio_ref);
}

// Accretion environments.

struct ScenarioPreset {
  std::string name;
  std::optional<double> pressure_torr;
  Quantity tau;          // time x area per accreted molecule
  Quantity molecule_mass;
  std::string note;

  Quantity rate() const { return mass_rate(molecule_mass, tau); }
};

// Anchors: one molecule per 3e-24 s cm^2 at 760 Torr, per 3e-8 s cm^2 at 1e-13 Torr.
inline constexpr double kAnchorHighTorr = 760.0;
inline constexpr double kAnchorHighTau = 3e-24;
inline constexpr double kAnchorLowTorr = 1e-13;
inline constexpr double kAnchorLowTau = 3e-8;

/// tau at `torr`, scaled as 1/pressure from the anchor nearest in log pressure.
inline Quantity tau_from_pressure(double torr) {
  if (!(torr > 0.0)) throw std::invalid_argument("pressure must be positive");
  const double lhi = std::abs(std::log(torr / kAnchorHighTorr));
  const double llo = std::abs(std::log(torr / kAnchorLowTorr));
  const double tau = lhi <= llo ? kAnchorHighTau * kAnchorHighTorr / torr
                                : kAnchorLowTau * kAnchorLowTorr / torr;
  return {tau, units::kTimeArea};
}

inline ScenarioPreset pressure_preset(std::string name, double torr, std::string note = {}) {
  return {std::move(name), torr, tau_from_pressure(torr), units::energy_ev(kNitrogenMoleculeEv),
          std::move(note)};
}

/// Protons at number density n (per m^3) and temperature T, arriving with
/// flux n v_rms; v_rms = sqrt(3 k T / m_p).
inline ScenarioPreset proton_gas_preset(std::string name, double n_per_m3, double kelvin) {
  const double v = std::sqrt(3.0 * kBoltzmannSi * kelvin / kProtonMassKg);  // m/s
  const double flux_m2 = n_per_m3 * v;                                     // 1/(m^2 s)
  const double tau_cm2 = 1e4 / flux_m2;                                    // s cm^2
  return {std::move(name), std::nullopt, {tau_cm2, units::kTimeArea},
          units::energy_ev(kProtonMassEv),
          "flux from n*v_rms; velocity factors may overstate it by 2-3x"};
}

inline std::vector<ScenarioPreset> scenario_presets() {
  return {
      {"air-stp", 760.0, {kAnchorHighTau, units::kTimeArea},
       units::energy_ev(kNitrogenMoleculeEv), "N2 at 760 Torr"},
      {"moon", 1e-13, {kAnchorLowTau, units::kTimeArea}, units::energy_ev(kNitrogenMoleculeEv),
       "lunar night surface"},
      pressure_preset("interstellar", 1e-18, "scaled from the 1e-13 Torr anchor"),
      proton_gas_preset("intergalactic", 0.23, 1e4),
  };
}

inline ScenarioPreset find_preset(const std::string& name) {
  for (auto& p : scenario_presets()) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

struct ScenarioRow {
  std::string preset;
  double target_time = 0.0;        // s
  double accretion_area = 0.0;     // cm^2
  double single_molecule_area = 0.0;
  double required_area = 0.0;
  double molecules = 0.0;          // accreted at the required area in target_time
};

inline std::vector<ScenarioRow> scenario_table(const std::vector<double>& target_times = {1e-8,
                                                                                         3e-4}) {
  std::vector<ScenarioRow> rows;
  for (const auto& p : scenario_presets()) {
    for (double t : target_times) {
      const auto req = required_area(units::seconds(t), p.rate(), p.molecule_mass);
      ScenarioRow r;
      r.preset = p.name;
      r.target_time = t;
      r.accretion_area = req.accretion_area.value();
      r.single_molecule_area = req.single_molecule_area.value();
      r.required_area = req.required().value();
      r.molecules = r.required_area * t / p.tau.value();
      rows.push_back(r);
    }
  }
  return rows;
}

inline void write_scenario_csv(std::ostream& os, const std::vector<ScenarioRow>& rows) {
  os << "preset,target_time_s,accretion_area_cm2,single_molecule_area_cm2,required_area_cm2,"
        "molecules\n"
     << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.preset << ',' << r.target_time << ',' << r.accretion_area << ','
       << r.single_molecule_area << ',' << r.required_area << ',' << r.molecules << '\n';
  }
}

// Reference values quoted for the scenarios, with the accepted factor.

struct ReferenceCheck {
  std::string name;
  double computed = 0.0;
  double reference = 0.0;
  std::string unit;
  double factor = 2.0;       // pass if within reference * [1/factor, factor]
  bool upper_bound = false;  // reference is an upper bound ("less than")
  bool pass() const {
    if (!(computed > 0.0) || !std::isfinite(computed)) return false;
    if (upper_bound) return computed <= reference * (1.0 + 1e-9) * factor;
    const double r = computed / reference;
    return r <= factor && r >= 1.0 / factor;
  }
};

inline std::vector<ReferenceCheck> reproduce_checks() {
  using namespace units;
  std::vector<ReferenceCheck> c;
  auto tr = [](double ev) { return t_reduce(energy_ev(ev)).value(); };
  c.push_back({"t_R proton mass", tr(kProtonMassEv), 1e-5, "s"});
  c.push_back({"t_R N2 mass", tr(kNitrogenMoleculeEv), 1e-8, "s"});
  c.push_back({"t_R SQUID 8.6e-6 eV", tr(8.6e-6), 1e23, "s"});
  c.push_back({"t_R fullerene 0.23 eV", tr(0.23), 1.5e14, "s"});
  c.push_back({"t_R Hf-178 2.4 MeV", tr(2.4e6), 1.0, "s"});
  c.push_back({"t_R Ta-180 75 keV", tr(75e3) / 60.0, 23.0, "min"});

  const auto air = find_preset("air-stp");
  const auto acc = t_reduce_accretion(square_cm(1.0), air.rate(), air.molecule_mass);
  c.push_back({"air 1 cm2 t_R", acc.t_r.value(), 5e-19, "s"});
  c.push_back({"air 1 cm2 molecules", acc.molecules, 1.5e5, ""});

  auto area = [](const std::string& preset, double t) {
    const auto p = find_preset(preset);
    return required_area(seconds(t), p.rate(), p.molecule_mass).required().value();
  };
  c.push_back({"moon area t_R=1e-8 s", area("moon", 1e-8), 3.0, "cm2"});
  c.push_back({"interstellar area t_R=1e-8 s", area("interstellar", 1e-8) / 1e4, 30.0, "m2"});
  c.push_back({"intergalactic area t_R=1e-8 s", area("intergalactic", 1e-8) / 1e4, 8e5, "m2"});
  {
    const auto p = find_preset("intergalactic");
    const double a = area("intergalactic", 1e-8);
    c.push_back({"intergalactic protons t_R=1e-8 s", a * 1e-8 / p.tau.value(), 28.0, ""});
  }
  c.push_back({"interstellar area t_R=3e-4 s", area("interstellar", 3e-4), 10.0, "cm2", 2.0,
               true});
  c.push_back({"intergalactic area t_R=3e-4 s", area("intergalactic", 3e-4) / 1e4, 1.0, "m2"});

  const auto th = thermal_fluctuation(kelvin(298.0), parse_quantity("4.18J/K"));
  c.push_back({"water 1 g 298 K dE_rms", th.delta_e.value() / 1e9, 14.0, "GeV", 1.2});

  const auto dec = decoherence_rate(per_second(1e10 * acc.molecules));
  const double red = 1.0 / acc.t_r.value();
  c.push_back({"air decoherence rate D", dec.value(), 0.7e15, "1/s"});
  c.push_back({"air reduction rate", red, 2e18, "1/s"});
  c.push_back({"crossover area", crossover_area(red / dec.value(), square_cm(1.0)).value(),
               4e-11, "cm2"});

  const auto sn = shot_noise_energy(6e7, 1e4, energy_ev(kElectronMassEv));
  c.push_back({"shot noise dN", sn.delta_n, 8e5, ""});
  c.push_back({"shot noise dE", sn.delta_e.value() / 1e9, 4e2, "GeV"});
  c.push_back({"shot noise t_R", sn.t_r.value(), 5e-11, "s"});
  return c;
}

inline void write_checks_csv(std::ostream& os, const std::vector<ReferenceCheck>& checks) {
  os << "name,computed,reference,unit,factor,pass\n" << std::setprecision(17);
  for (const auto& c : checks) {
    os << c.name << ',' << c.computed << ',' << c.reference << ',' << c.unit << ','
       << c.factor << ',' << (c.pass() ? "PASS" : "FAIL") << '\n';
  }
}

}  // namespace stochred::phenom
