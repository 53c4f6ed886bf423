#pragma once

// Physical parameter records and closed-form formulas for a dielectric
// nanosphere in a Gaussian optical tweezer. Everything here is SI and pure.

#include <cmath>
#include <optional>
#include <string>

#include "levitate/constants.hpp"
#include "levitate/error.hpp"

namespace levitate {

template <typename Scalar>
struct BasicParticleSpec {
  Scalar radius{};           // m
  Scalar density{};          // kg/m^3
  Scalar refractive_index{}; // n_p

  void validate(const std::string &path = "particle") const {
    if (!(radius > 0)) throw ConfigError("radius must be > 0", path + ".radius");
    if (!(density > 0)) throw ConfigError("density must be > 0", path + ".density");
    if (!(refractive_index >= 1))
      throw ConfigError("refractive_index must be >= 1", path + ".refractive_index");
  }
};

template <typename Scalar>
struct BasicGasEnvironment {
  Scalar pressure{};                             // Pa
  Scalar temperature{};                          // K
  Scalar gas_molecular_mass = Scalar(4.81e-26);  // kg, effective air molecule

  void validate(const std::string &path = "gas") const {
    if (!(pressure >= 0)) throw ConfigError("pressure must be >= 0", path + ".pressure");
    if (!(temperature > 0)) throw ConfigError("temperature must be > 0", path + ".temperature");
    if (!(gas_molecular_mass > 0))
      throw ConfigError("gas_molecular_mass must be > 0", path + ".gas_molecular_mass");
  }
};

/// Gaussian-beam tweezer. `depth_scale` multiplies the Rayleigh-regime
/// polarisability prefactor; it is 1 for the bare model and is set by
/// calibrate_depth() when the trap is tuned to a measured frequency.
/// `empirical_xi` carries a measured Duffing coefficient (1/m^2) that is
/// reported alongside, never substituted into, the force model.
template <typename Scalar>
struct BasicTrapSpec {
  Scalar wavelength{};           // m
  Scalar waist{};                // m, 1/e^2 intensity radius w0
  Scalar medium_index = Scalar(1);
  Scalar power_high{};           // W
  Scalar power_low{};            // W
  Scalar depth_scale = Scalar(1);
  std::optional<Scalar> empirical_xi;

  Scalar modulation_depth() const { return power_low / power_high; }

  void validate(const std::string &path = "trap") const {
    if (!(wavelength > 0)) throw ConfigError("wavelength must be > 0", path + ".wavelength");
    if (!(waist > 0)) throw ConfigError("waist must be > 0", path + ".waist");
    if (!(medium_index >= 1)) throw ConfigError("medium_index must be >= 1", path + ".medium_index");
    if (!(power_high > 0)) throw ConfigError("power_high must be > 0", path + ".power_high");
    if (!(power_low > 0 && power_low <= power_high))
      throw ConfigError("power_low must satisfy 0 < power_low <= power_high", path + ".power_low");
    if (!(depth_scale > 0)) throw ConfigError("depth_scale must be > 0", path + ".depth_scale");
  }
};

/// Photon-recoil localisation strength. Stored as Lambda (1/(s m^2)).
template <typename Scalar>
struct BasicDecoherenceSpec {
  Scalar lambda_recoil{};

  static BasicDecoherenceSpec from_gamma_over_omega(Scalar ratio, Scalar dx_zpf, Scalar omega) {
    return {ratio * omega / (dx_zpf * dx_zpf)};
  }
  Scalar gamma_over_omega(Scalar dx_zpf, Scalar omega) const {
    return lambda_recoil * dx_zpf * dx_zpf / omega;
  }
};

/// Beam asymmetry factors and particle permittivity entering the recoil
/// estimate. The permittivity is independent of the refractive index.
template <typename Scalar>
struct BasicRecoilGeometry {
  Scalar asymmetry_x = Scalar(1);
  Scalar asymmetry_y = Scalar(1);
  Scalar dielectric_constant = Scalar(2);
};

using ParticleSpec = BasicParticleSpec<double>;
using GasEnvironment = BasicGasEnvironment<double>;
using TrapSpec = BasicTrapSpec<double>;
using DecoherenceSpec = BasicDecoherenceSpec<double>;
using RecoilGeometry = BasicRecoilGeometry<double>;

template <typename Scalar>
Scalar sphere_volume(Scalar radius) {
  return Scalar(4) / Scalar(3) * Scalar(kPi) * radius * radius * radius;
}

template <typename Scalar>
Scalar particle_mass(const BasicParticleSpec<Scalar> &p) {
  return p.density * sphere_volume(p.radius);
}

/// Root-mean-square molecular speed sqrt(3 kB T / m_gas).
template <typename Scalar>
Scalar mean_gas_speed(const BasicGasEnvironment<Scalar> &g) {
  return std::sqrt(Scalar(3) * PhysicalConstants<Scalar>::kB * g.temperature / g.gas_molecular_mass);
}

/// Free-molecular gas damping 64 r^2 P / (m v_gas).
template <typename Scalar>
Scalar gas_damping_rate(const BasicParticleSpec<Scalar> &p, const BasicGasEnvironment<Scalar> &g) {
  return Scalar(64) * p.radius * p.radius * g.pressure / (particle_mass(p) * mean_gas_speed(g));
}

template <typename Scalar>
Scalar clausius_mossotti(Scalar relative_index) {
  const Scalar n2 = relative_index * relative_index;
  return (n2 - Scalar(1)) / (n2 + Scalar(2));
}

template <typename Scalar>
Scalar peak_intensity(const BasicTrapSpec<Scalar> &t, Scalar power) {
  return Scalar(2) * power / (Scalar(kPi) * t.waist * t.waist);
}

/// Gradient-force prefactor 2 pi n_m r^3 / c * CM, times depth_scale (m^3 s).
template <typename Scalar>
Scalar gradient_prefactor(const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p) {
  const Scalar r3 = p.radius * p.radius * p.radius;
  return t.depth_scale * Scalar(2) * Scalar(kPi) * t.medium_index * r3 /
         PhysicalConstants<Scalar>::c *
         clausius_mossotti(p.refractive_index / t.medium_index);
}

/// U0 such that U(x) = -U0 exp(-2 x^2 / w0^2).
template <typename Scalar>
Scalar trap_depth(const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p, Scalar power) {
  return gradient_prefactor(t, p) * peak_intensity(t, power);
}

template <typename Scalar>
Scalar trap_potential(Scalar x, const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p,
                      Scalar power) {
  return -trap_depth(t, p, power) * std::exp(Scalar(-2) * x * x / (t.waist * t.waist));
}

/// Prefactor times dI/dx; equals -dU/dx.
template <typename Scalar>
Scalar gradient_force(Scalar x, const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p,
                      Scalar power) {
  const Scalar w2 = t.waist * t.waist;
  const Scalar dI = peak_intensity(t, power) * (Scalar(-4) * x / w2) * std::exp(Scalar(-2) * x * x / w2);
  return gradient_prefactor(t, p) * dI;
}

/// Harmonic frequency at the focus, sqrt(4 U0 / (m w0^2)) in rad/s.
template <typename Scalar>
Scalar trap_frequency(const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p, Scalar power) {
  return std::sqrt(Scalar(4) * trap_depth(t, p, power) / (particle_mass(p) * t.waist * t.waist));
}

/// Duffing coefficient of the inverted-Gaussian model in the convention
/// F/m = -omega^2 (x + xi x^3).
template <typename Scalar>
Scalar duffing_coefficient(const BasicTrapSpec<Scalar> &t) {
  return Scalar(-2) / (t.waist * t.waist);
}

/// Waist whose inverted-Gaussian model reproduces a (negative) Duffing xi.
template <typename Scalar>
Scalar waist_for_duffing(Scalar xi) {
  if (!(xi < 0)) throw ConfigError("Duffing coefficient must be negative for a Gaussian trap");
  return std::sqrt(Scalar(-2) / xi);
}

/// Returns `t` with depth_scale chosen so trap_frequency(power_high) equals
/// `omega`. Linear in power afterwards, so the sqrt(S) scaling is kept.
template <typename Scalar>
BasicTrapSpec<Scalar> calibrate_depth(BasicTrapSpec<Scalar> t, const BasicParticleSpec<Scalar> &p,
                                      Scalar omega) {
  t.depth_scale = Scalar(1);
  const Scalar bare = trap_frequency(t, p, t.power_high);
  t.depth_scale = (omega / bare) * (omega / bare);
  return t;
}

template <typename Scalar>
Scalar thermal_position_std(Scalar mass, Scalar omega, Scalar temperature) {
  return std::sqrt(PhysicalConstants<Scalar>::kB * temperature / (mass * omega * omega));
}

template <typename Scalar>
Scalar zero_point_fluctuation(Scalar mass, Scalar omega) {
  return std::sqrt(PhysicalConstants<Scalar>::hbar / (Scalar(2) * mass * omega));
}

template <typename Scalar>
Scalar fock_position_std(int n, Scalar mass, Scalar omega) {
  return std::sqrt(Scalar(2 * n + 1)) * zero_point_fluctuation(mass, omega);
}

/// Recoil localisation constant
///   Lambda = 7 pi eps0 / (30 hbar) * (eps_c V E0 / 2 pi)^2 * k0^5,
/// eps_c = 3 (eps - 1)/(eps + 2), E0^2 = 4 P0 / (pi eps0 c w0^2 Ax Ay).
template <typename Scalar>
Scalar recoil_decoherence_constant(const BasicTrapSpec<Scalar> &t, const BasicParticleSpec<Scalar> &p,
                                   Scalar power, const BasicRecoilGeometry<Scalar> &geom) {
  using C = PhysicalConstants<Scalar>;
  const Scalar eps = geom.dielectric_constant;
  const Scalar eps_c = Scalar(3) * (eps - Scalar(1)) / (eps + Scalar(2));
  const Scalar volume = sphere_volume(p.radius);
  const Scalar k0 = Scalar(2) * Scalar(kPi) / t.wavelength;
  const Scalar e0_sq = Scalar(4) * power /
                       (Scalar(kPi) * C::eps0 * C::c * t.waist * t.waist * geom.asymmetry_x * geom.asymmetry_y);
  const Scalar dipole = eps_c * volume / (Scalar(2) * Scalar(kPi));
  const Scalar k5 = k0 * k0 * k0 * k0 * k0;
  return Scalar(7) * Scalar(kPi) * C::eps0 / (Scalar(30) * C::hbar) * dipole * dipole * e0_sq * k5;
}

template <typename Scalar>
Scalar recoil_rate(Scalar lambda_recoil, Scalar dx_zpf) {
  return lambda_recoil * dx_zpf * dx_zpf;
}

} // namespace levitate
