// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <utility>

#include "sodiff/crystal.hpp"
#include "sodiff/types.hpp"

namespace sodiff {

enum class GeometryKind { BraggReflection, LaueTransmission };

const char* to_string(GeometryKind kind);

// One incidence condition. Lab frame: x along the central incident wavevector,
// z vertical, H in the x-y plane.
struct DiffractionGeometry {
  Vec3 k0 = Vec3::UnitX();
  Vec3 H = Vec3::UnitY();
  Vec3 normal = Vec3::UnitX();  // inward surface normal
  GeometryKind kind = GeometryKind::BraggReflection;
  double thickness = 0.0;  // angstrom
  double theta = 0.0;
  double rho = 0.0;

  double wavenumber() const { return k0.norm(); }
  double energy() const;
  double cos_gamma() const { return k0.dot(normal) / k0.norm(); }
  double asymmetry() const { return k0.dot(normal) / (k0 + H).dot(normal); }
  // (|k0+H|^2 - |k0|^2) / |k0|^2, written without the cancelling |k0|^2.
  double deviation() const { return (2.0 * k0.dot(H) + H.squaredNorm()) / k0.squaredNorm(); }
};

// Per spin channel solution of the two-beam secular problem.
struct BranchSolution {
  int spin = +1;
  std::array<cplx, 2> eps{};  // ascending real part, then imaginary part
  std::array<cplx, 2> X{};    // u_i(H) / u_i(0)
  double energy = 0.0;        // meV
  ChannelPotentials pot;
  bool degenerate = false;
};

// Residual of the secular system for root i, relative to its largest term.
double secular_residual(const BranchSolution& s, const DiffractionGeometry& g, int i);

// Throws PhysicsError("forbidden reflection") when vH = 0.
BranchSolution solve_branches(const DiffractionGeometry& geom, const ChannelPotentials& pot,
                              double energy, int spin = +1);

// Refraction-only wavevector correction when the reflection is decoupled.
cplx forward_refraction(double v0, double energy);

struct ChannelAmplitudes {
  std::array<cplx, 2> forward{};    // u_i(0)
  std::array<cplx, 2> reflected{};  // u_i(H) = X_i u_i(0)
  std::array<cplx, 2> log_phase{};  // i kappa eps_i D, so E_i = exp(log_phase_i)
  cplx transmitted_exit;            // forward beam at the rear face
  cplx reflected_exit;              // H beam at its exit face, flux-normalized by |b|^-1/2
  double entrance_residual = 0.0;   // |u1(0)+u2(0)-u0| relative
  double closure_residual = 0.0;    // second boundary condition, relative
};

ChannelAmplitudes bragg_amplitudes(const BranchSolution& s, const DiffractionGeometry& g, cplx u0);
ChannelAmplitudes laue_amplitudes(const BranchSolution& s, const DiffractionGeometry& g, cplx u0);

struct ExitField {
  Spinor transmitted = Spinor::Zero();
  Spinor reflected = Spinor::Zero();  // flux-normalized: R = <psi_H|psi_H>
  double R = 0.0;
  double T = 0.0;
  Vec3 schwinger_axis = Vec3::UnitZ();
  double max_residual = 0.0;
  bool nudged = false;
  // Laue only: per-branch spinors with the spin-averaged branch phase removed.
  std::optional<std::array<Spinor, 2>> transmitted_branches;
  std::optional<std::array<Spinor, 2>> reflected_branches;
};

struct FieldOptions {
  double schwinger_scale = 1.0;
  bool resolve_branches = false;
};

ExitField exit_field(const DiffractionGeometry& geom, const StructureSums& sums, const Spinor& u0,
                     const FieldOptions& options = {});

enum class Alignment { Geometric, Dynamical };

struct GeometrySpec {
  GeometryKind kind = GeometryKind::BraggReflection;
  Miller hkl{1, 1, 0};
  double wavelength = 0.0;   // angstrom; 0 means derive from bragg_angle
  double bragg_angle = 0.0;  // rad; used when wavelength == 0
  double thickness = 0.0;    // angstrom
  double asymmetry_angle = 0.0;  // rad, rotation of the surface normal about z
  Alignment alignment = Alignment::Dynamical;
  double schwinger_scale = 1.0;
};

// Places a reflection in the lab frame and generates per-point geometries over
// rocking (theta) and tilt (rho). With dynamical alignment the crystal is
// rotated so that (theta, rho) = (0, 0) sits at the centre of the dynamical
// region; at backscattering, where no rotation can do this, the wavelength is
// tuned instead.
class ScanGeometry {
 public:
  ScanGeometry(const CrystalModel& crystal, const GeometrySpec& spec);

  DiffractionGeometry at(double theta, double rho) const;
  ExitField evaluate(double theta, double rho, const Spinor& u0, bool resolve_branches = false) const;

  const GeometrySpec& spec() const { return spec_; }
  const StructureSums& sums() const { return sums_; }
  GeometryKind kind() const { return spec_.kind; }
  double wavelength() const { return wavelength_; }
  double nominal_wavelength() const { return nominal_wavelength_; }
  double wavenumber() const { return k_; }
  double energy() const;
  double bragg_angle() const { return bragg_angle_; }
  double crystal_rotation() const { return rotation_; }
  bool backscattering() const { return backscattering_; }
  const Vec3& H() const { return H_; }
  const Vec3& normal() const { return n_; }
  // Direction of the diffracted beam at the grid centre.
  Vec3 reflected_direction() const;

  // Angular width in theta (rad) of the region |eta| <= 1, i.e. the Bragg
  // total-reflection plateau or the Laue excitation region, at rho = 0.
  double darwin_width() const;
  // Dimensionless deviation from the dynamical centre, normalized so that
  // |eta| <= 1 is the total-reflection (Bragg) or excitation (Laue) region.
  double eta(double theta, double rho) const;

 private:
  std::pair<Vec3, Vec3> orient(double rotation) const;
  double center_condition(double k, double rotation) const;
  void place(double rotation);

  GeometrySpec spec_;
  StructureSums sums_;
  double nominal_wavelength_ = 0.0;
  double wavelength_ = 0.0;
  double k_ = 0.0;
  double bragg_angle_ = 0.0;
  double rotation_ = 0.0;
  bool backscattering_ = false;
  Vec3 H_ = Vec3::Zero();
  Vec3 n_ = Vec3::UnitX();
};

}  // namespace sodiff
