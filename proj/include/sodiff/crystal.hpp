// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sodiff/types.hpp"

namespace sodiff {

// Four-Gaussian isotropic form factor normalized so that f(0) = 1.
struct FormFactor {
  std::array<double, 4> a{};
  std::array<double, 4> b{};
  double c = 0.0;

  // f(|H|) with s = |H| / (4 pi).
  double operator()(double h_magnitude) const;

  // f == 1 everywhere: the site carries no Schwinger strength.
  static FormFactor unity();
};

using FormFactorTable = std::map<std::string, FormFactor>;

struct AtomSite {
  std::string label;
  Vec3 fractional = Vec3::Zero();
  double b_fm = 0.0;
  int Z = 0;
  FormFactor form = FormFactor::unity();
};

class CrystalModel {
 public:
  // Rows of `lattice` are a1, a2, a3 in angstrom.
  CrystalModel(std::string id, const Mat3& lattice, std::vector<AtomSite> sites);

  const std::string& id() const { return id_; }
  const Mat3& lattice() const { return lattice_; }
  const std::vector<AtomSite>& sites() const { return sites_; }
  double volume() const { return volume_; }
  // Rows are b1, b2, b3 with a_i . b_j = 2 pi delta_ij.
  const Mat3& reciprocal_basis() const { return reciprocal_; }
  Vec3 cartesian(const Vec3& fractional) const;

  // Same structure with every Schwinger strength removed.
  CrystalModel without_schwinger() const;
  CrystalModel with_scaled_b(double s) const;

 private:
  std::string id_;
  Mat3 lattice_;
  Mat3 reciprocal_;
  std::vector<AtomSite> sites_;
  double volume_ = 0.0;
};

Vec3 reciprocal_vector(const CrystalModel& crystal, const Miller& hkl);

struct SchwingerAxis {
  Vec3 axis;         // (K x H) / |K x H|
  double magnitude;  // |K x H| / |H|^2
};

// Throws PhysicsError when K or H vanish or are parallel.
SchwingerAxis schwinger_axis(const Vec3& K, const Vec3& H);

// Schwinger strength gamma_j = (mu e / hbar c) Z (1 - f(|H|)) in fm.
double schwinger_strength(const AtomSite& site, double h_magnitude);

// V(H, K) in meV. H is given in the Cartesian frame of the lattice vectors;
// H = 0 returns the spin-diagonal mean optical potential.
SpinorMatrix potential_fourier(const CrystalModel& crystal, const Vec3& H, const Vec3& K);

SpinorMatrix pauli_dot(const Vec3& u);

// Site sums for one reflection, in fm:
//   nuclear   = sum_j b_j exp(i H.r_j)
//   schwinger = sum_j gamma_j exp(i H.r_j)
//   forward   = sum_j b_j
// plus the energy prefactor (2 pi hbar^2/m)/V_cell * 1e-5 (meV per fm).
struct StructureSums {
  cplx nuclear;
  cplx schwinger;
  double forward = 0.0;
  double prefactor = 0.0;
  double h_magnitude = 0.0;
};

StructureSums structure_sums(const CrystalModel& crystal, const Miller& hkl);

// Potentials of one spin channel (s = +1 or -1, eigenvalue of sigma.u) in meV.
// vH multiplies exp(+i H.r) in the forward-beam equation; vmH is its partner.
struct ChannelPotentials {
  double v0 = 0.0;
  cplx vH;
  cplx vmH;
};

// `geometric` is |K x H| / |H|^2; `schwinger_scale` switches the spin-orbit term.
ChannelPotentials channel_potentials(const StructureSums& sums, double geometric, int spin,
                                     double schwinger_scale = 1.0);

FormFactorTable load_form_factors(const std::filesystem::path& path);
CrystalModel load_material(const std::filesystem::path& path, const FormFactorTable& table);

}  // namespace sodiff
