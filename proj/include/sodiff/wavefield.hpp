// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sodiff/dispersion.hpp"

namespace sodiff {

// Uniform, strictly increasing sample axis.
struct Axis {
  double start = 0.0;
  double stop = 0.0;
  std::size_t n = 1;

  static Axis make(double start, double stop, std::size_t n);
  double at(std::size_t i) const;
  double step() const { return n > 1 ? (stop - start) / static_cast<double>(n - 1) : 0.0; }
  std::vector<double> values() const;
};

enum class SpinComponent { NonFlipped, Flipped };

const char* to_string(SpinComponent c);

// Spinor orthogonal to u (same norm).
Spinor orthogonal_spinor(const Spinor& u);

// Amplitude of psi along the incident spinor (non-flipped) or its orthogonal partner.
cplx spin_component(const Spinor& psi, const Spinor& incident, SpinComponent c);

struct WaveGrid {
  Axis theta;
  Axis rho;
  double wavenumber = 0.0;  // |k0|, 1/A; k_y = k theta, k_z = k rho
  GeometryKind kind = GeometryKind::BraggReflection;
  Spinor incident = Spinor::Zero();
  Vec3 reflected_direction = -Vec3::UnitX();
  std::vector<Spinor> transmitted;
  std::vector<Spinor> reflected;
  std::vector<std::uint8_t> failed;    // 1 where the solver failed (fields are NaN)
  std::vector<std::uint8_t> physical;  // 0 where the incident beam cannot enter the surface
  // Present when the grid was built with branch resolution (Laue only).
  std::vector<std::array<Spinor, 2>> transmitted_branches;
  std::vector<std::array<Spinor, 2>> reflected_branches;
  double max_residual = 0.0;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return theta.n * rho.n; }
  std::size_t index(std::size_t i, std::size_t j) const { return i * rho.n + j; }
  bool has_branches() const { return !transmitted_branches.empty(); }
  const std::vector<Spinor>& field(Beam beam) const {
    return beam == Beam::Transmitted ? transmitted : reflected;
  }
  const std::vector<std::array<Spinor, 2>>& branches(Beam beam) const {
    return beam == Beam::Transmitted ? transmitted_branches : reflected_branches;
  }
  // Spin density matrix at a point; branch-resolved grids sum the branches incoherently.
  SpinorMatrix density(Beam beam, std::size_t idx) const;
  // +1 if the beam travels along +x, -1 along -x.
  int propagation_sense(Beam beam) const;
};

struct ScanOptions {
  unsigned threads = 1;
  bool resolve_branches = false;
};

WaveGrid grid_scan(const ScanGeometry& geometry, const Spinor& u0, const Axis& theta, const Axis& rho,
                   const ScanOptions& options = {});

struct SpinFlipSummary {
  double flipped = 0.0;      // summed flipped intensity
  double non_flipped = 0.0;  // summed non-flipped intensity
  double ratio() const { return non_flipped > 0.0 ? flipped / non_flipped : 0.0; }
  double fraction() const {
    const double t = flipped + non_flipped;
    return t > 0.0 ? flipped / t : 0.0;
  }
};

// Integrated spin-flip statistics over the physical, successfully solved points
// accepted by `include` (all of them when empty).
SpinFlipSummary spin_flip_summary(const WaveGrid& grid, Beam beam,
                                  const std::function<bool(std::size_t, std::size_t)>& include = {});

enum class ScanAxis { Theta, Rho };

struct PolarizationCurve {
  std::string unit = "rad";
  std::vector<double> abscissa;
  std::vector<double> Px, Py, Pz;
  std::vector<double> weight;  // flux summed over the marginalized axis
  std::vector<std::uint8_t> valid;
};

PolarizationCurve polarization_curve(const WaveGrid& grid, Beam beam, ScanAxis axis);

struct PolarizationMap {
  Axis theta;
  Axis rho;
  std::vector<double> Px, Py, Pz;
  std::vector<double> intensity;
  std::vector<std::uint8_t> valid;
};

PolarizationMap polarization_map(const WaveGrid& grid, Beam beam);

struct PhaseMap {
  Axis theta;
  Axis rho;
  std::vector<double> phase;  // wrapped to (-pi, pi]
  std::vector<std::uint8_t> valid;
  std::size_t index(std::size_t i, std::size_t j) const { return i * rho.n + j; }
};

PhaseMap phase_map(const WaveGrid& grid, SpinComponent component, Beam beam);

using Loop = std::vector<std::pair<std::size_t, std::size_t>>;

// Closed rectangle through grid indices around (i0, j0). sense = +1 runs
// counterclockwise in the (theta, rho) plane, i.e. right-handed about +x.
Loop rectangular_loop(std::size_t i0, std::size_t j0, std::size_t half_i, std::size_t half_j,
                      int sense = +1);

// Sum of wrapped phase differences around the loop divided by 2 pi.
int winding_number(const PhaseMap& map, const Loop& loop);

// Long-form CSV: theta_rad, rho_rad, then re/im of the transmitted and reflected
// spinor components (up, down along z).
void write_grid_csv(const WaveGrid& grid, std::ostream& out, int precision = 9);

// Binary grid: 64-byte little-endian header followed by n_theta*n_rho records of
// eight doubles (re/im of T_up, T_down, R_up, R_down).
//   0  char[8]  magic "SODGRID1"
//   8  uint32   version (1)
//  12  uint32   dtype (1 = complex128)
//  16  uint64   n_theta
//  24  uint64   n_rho
//  32  double   theta_start, theta_stop, rho_start, rho_stop
void write_grid_binary(const WaveGrid& grid, std::ostream& out);
WaveGrid read_grid_binary(std::istream& in);

}  // namespace sodiff
