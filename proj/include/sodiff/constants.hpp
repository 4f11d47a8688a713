// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace sodiff {

// CODATA 2018 values in SI, plus conversions to the internal units
// (angstrom, 1/angstrom, meV, radian).
//
// Sign convention: the neutron magnetic moment is negative (antiparallel to
// its spin). It enters only through schwinger_length_fm(), which is therefore
// negative; every spin-rotation sense in the code follows from that sign.
struct PhysicalConstants {
  static constexpr double hbar = 1.054571817e-34;             // J s
  static constexpr double planck = 6.62607015e-34;            // J s
  static constexpr double neutron_mass = 1.67492749804e-27;   // kg
  static constexpr double proton_mass = 1.67262192369e-27;    // kg
  static constexpr double elementary_charge = 1.602176634e-19;  // C
  static constexpr double speed_of_light = 299792458.0;       // m/s
  static constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
  static constexpr double nuclear_magneton = 5.0507837461e-27;     // J/T
  static constexpr double neutron_moment_nuclear = -1.91304273;    // mu_N
  static constexpr double neutron_gyromagnetic_ratio = 1.83247171e8;  // rad/(s T)

  static constexpr double pi = 3.14159265358979323846;

  static constexpr double neutron_moment() {  // J/T, negative
    return neutron_moment_nuclear * nuclear_magneton;
  }

  // hbar^2 / (2 m_n) in meV A^2.
  static constexpr double hbar2_over_2m() {
    return hbar * hbar / (2.0 * neutron_mass) / (1e-3 * elementary_charge) * 1e20;
  }

  // 2 pi hbar^2 / m_n in meV A^2.
  static constexpr double optical_prefactor() { return 4.0 * pi * hbar2_over_2m(); }

  // mu e / (hbar c) per unit charge number, in fm. With mu in nuclear magnetons
  // this is mu[mu_N] * e^2 / (4 pi eps0 * 2 m_p c^2).
  static constexpr double schwinger_length_fm() {
    return neutron_moment_nuclear * elementary_charge * elementary_charge /
           (4.0 * pi * vacuum_permittivity) /
           (2.0 * proton_mass * speed_of_light * speed_of_light) * 1e15;
  }

  static constexpr double energy_meV(double k_inv_angstrom) {
    return hbar2_over_2m() * k_inv_angstrom * k_inv_angstrom;
  }

  static constexpr double wavenumber(double wavelength_angstrom) {
    return 2.0 * pi / wavelength_angstrom;
  }

  // Neutron speed in m/s for a wavelength in angstrom.
  static constexpr double speed(double wavelength_angstrom) {
    return planck / (neutron_mass * wavelength_angstrom * 1e-10);
  }
};

}  // namespace sodiff
