// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sodiff/wavefield.hpp"

namespace sodiff {

// Complex samples on a Cartesian transverse-momentum grid, ky = k theta and
// kz = k rho (1/A). Points with mask == 0 are treated as zero.
struct ComplexImage {
  Axis ky;
  Axis kz;
  std::vector<cplx> values;
  std::vector<std::uint8_t> mask;
  std::size_t index(std::size_t i, std::size_t j) const { return i * kz.n + j; }
};

// Component of one beam. branch < 0 selects the coherent field, 0 or 1 a Laue branch.
// With physical_only the non-physical part of the grid is masked out.
ComplexImage component_image(const WaveGrid& grid, Beam beam, SpinComponent component,
                             int branch = -1, bool physical_only = true);

// conj(psi_plus) * psi_minus with psi_plus the non-flipped and psi_minus the
// flipped component; branch-resolved grids sum the branches incoherently.
ComplexImage interference_image(const WaveGrid& grid, Beam beam, bool physical_only = true);

// Axis about which phi is measured right-handed. About -x, phi runs from +kz
// towards +ky; about +x, from +ky towards +kz.
enum class AzimuthSense { AboutPlusX, AboutMinusX };

struct PolarSampling {
  std::size_t n_r = 128;
  std::size_t n_phi = 256;
  double r_max = 0.0;  // 0 selects the largest circle inscribed in the source grid
  double center_y = 0.0;
  double center_z = 0.0;
  AzimuthSense sense = AzimuthSense::AboutMinusX;
};

class AzimuthalField {
 public:
  AzimuthalField() = default;
  AzimuthalField(const PolarSampling& sampling, double r_max, std::vector<cplx> values);

  // Samples f(r, phi) on the radial nodes r_i = i r_max / (n_r - 1).
  static AzimuthalField from_function(std::size_t n_r, std::size_t n_phi, double r_max,
                                      const std::function<cplx(double, double)>& f);

  std::size_t n_r() const { return sampling_.n_r; }
  std::size_t n_phi() const { return sampling_.n_phi; }
  double r_max() const { return r_max_; }
  double radius(std::size_t i) const;
  double phi(std::size_t j) const;
  // Trapezoid weights including the Jacobian r.
  double radial_weight(std::size_t i) const;
  const PolarSampling& sampling() const { return sampling_; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return values_[i * n_phi() + j]; }
  const std::vector<cplx>& values() const { return values_; }
  // Integral of |psi|^2 r dr dphi.
  double intensity() const;
  // Polar intensity over the Cartesian intensity inside the same disc (1 when built directly).
  double intensity_ratio() const { return intensity_ratio_; }
  void set_intensity_ratio(double r) { intensity_ratio_ = r; }
  bool same_grid(const AzimuthalField& other) const;

 private:
  PolarSampling sampling_;
  double r_max_ = 0.0;
  std::vector<cplx> values_;
  double intensity_ratio_ = 1.0;
};

AzimuthalField resample(const ComplexImage& image, const PolarSampling& sampling);

// Pointwise conj(a) * b on a shared polar grid.
AzimuthalField conjugate_product(const AzimuthalField& a, const AzimuthalField& b);

// psi^l(r_i) = (1/2pi) int psi e^{-i l phi} dphi, for |l| <= n_phi/2 - 1.
std::vector<cplx> aft(const AzimuthalField& field, int ell);

struct OamDistribution {
  int L = 0;
  std::vector<double> p;  // p[l + L]
  double total_intensity = 0.0;
  double residual = 0.0;  // weight outside [-L, L]
  double mean = 0.0;      // mean of the captured distribution

  double at(int ell) const;
  double sum() const;
};

OamDistribution oam_distribution(const AzimuthalField& field, int L = 32);
// Incoherent sum of several fields (e.g. Pendelloesung branches).
OamDistribution oam_distribution(std::span<const AzimuthalField> fields, int L = 32);
OamDistribution interference_distribution(const AzimuthalField& plus, const AzimuthalField& minus,
                                          int L = 32);

// Sum over l of l p[l], in units of hbar.
double oam_expectation(const OamDistribution& dist);
// Spread sqrt(sum l^2 p) of the captured distribution.
double oam_rms(const OamDistribution& dist);

struct LzEstimate {
  double value = 0.0;             // <L_z> in hbar
  double refinement_delta = 0.0;  // Richardson error estimate from halving n_phi, relative
  bool under_resolved = false;
};

// <psi| -i d/dphi |psi> / <psi|psi> with a central-difference stencil of the given
// (even) order, entirely in the sample domain.
LzEstimate oracle_Lz(const AzimuthalField& field, int order = 8);

}  // namespace sodiff
