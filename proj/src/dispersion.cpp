// SPDX-License-Identifier: Apache-2.0
#include "sodiff/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sodiff/constants.hpp"

namespace sodiff {

namespace {

constexpr double kPi = PhysicalConstants::pi;

bool branch_less(const cplx& a, const cplx& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

Vec3 rotate_z(const Vec3& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return Vec3(c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z());
}

// Rescale amplitudes and residuals by the incident amplitude.
double rel(double num, double scale) { return scale > 0.0 ? num / scale : num; }

}  // namespace

const char* to_string(GeometryKind kind) {
  return kind == GeometryKind::BraggReflection ? "bragg" : "laue";
}

double DiffractionGeometry::energy() const { return PhysicalConstants::energy_meV(k0.norm()); }

cplx forward_refraction(double v0, double energy) { return cplx(-v0 / (2.0 * energy), 0.0); }

double secular_residual(const BranchSolution& s, const DiffractionGeometry& g, int i) {
  const double b = g.asymmetry();
  const double ea = s.energy * g.deviation();
  const cplx y = 2.0 * s.energy * s.eps[i];
  const cplx X = s.X[i];
  const cplx a0 = y + s.pot.v0;
  const cplx aH = y / b + ea + s.pot.v0;
  const double r1 = std::abs(a0 + s.pot.vH * X) / (std::abs(a0) + std::abs(s.pot.vH * X));
  const double r2 = std::abs(s.pot.vmH + aH * X) / (std::abs(s.pot.vmH) + std::abs(aH * X));
  return std::max(r1, r2);
}

BranchSolution solve_branches(const DiffractionGeometry& geom, const ChannelPotentials& pot,
                              double energy, int spin) {
  if (std::abs(pot.vH) == 0.0 || std::abs(pot.vmH) == 0.0) {
    throw PhysicsError("forbidden reflection: V(H) = 0");
  }
  BranchSolution out;
  out.spin = spin;
  out.energy = energy;
  out.pot = pot;

  // With y = 2 E eps the two-beam determinant reads
  //   y^2 + y [b(E alpha + v0) + v0] + b v0 (E alpha + v0) - b vH vmH = 0.
  const double b = geom.asymmetry();
  const double ea = energy * geom.deviation();
  const cplx B = b * (ea + pot.v0) + pot.v0;
  const cplx C = b * pot.v0 * (ea + pot.v0) - b * pot.vH * pot.vmH;
  const cplx disc = std::sqrt(B * B - 4.0 * C);
  const cplx qa = -0.5 * (B + disc);
  const cplx qb = -0.5 * (B - disc);
  const cplx q = std::abs(qa) >= std::abs(qb) ? qa : qb;
  std::array<cplx, 2> y{};
  if (q == cplx(0.0, 0.0)) {
    y = {cplx(0.0), cplx(0.0)};
  } else {
    y = {q, C / q};
  }
  for (auto& yi : y) {
    for (int it = 0; it < 2; ++it) {
      const cplx f = yi * yi + B * yi + C;
      const cplx fp = 2.0 * yi + B;
      if (std::abs(fp) == 0.0) break;
      const cplx step = f / fp;
      if (!(std::abs(step) < std::abs(yi) + std::abs(B))) break;
      yi -= step;
    }
  }
  const double scale = std::abs(B) + std::sqrt(std::abs(C));
  out.degenerate = std::abs(y[0] - y[1]) <= 1e-13 * scale;
  if (branch_less(y[1], y[0])) std::swap(y[0], y[1]);
  for (int i = 0; i < 2; ++i) {
    out.eps[i] = y[i] / (2.0 * energy);
    out.X[i] = -(y[i] + pot.v0) / pot.vH;
  }
  return out;
}

ChannelAmplitudes bragg_amplitudes(const BranchSolution& s, const DiffractionGeometry& g, cplx u0) {
  ChannelAmplitudes out;
  const double kappa = g.wavenumber() / g.cos_gamma();
  const double D = g.thickness;
  for (int i = 0; i < 2; ++i) out.log_phase[i] = cplx(0.0, kappa * D) * s.eps[i];

  if (s.X[0] == s.X[1]) throw PhysicsError("singular Bragg system: X1 = X2");
  // Reference the larger of E_i X_i so that the ratio q never overflows.
  const double m0 = out.log_phase[0].real() + std::log(std::abs(s.X[0]));
  const double m1 = out.log_phase[1].real() + std::log(std::abs(s.X[1]));
  const int a = (m0 >= m1) ? 0 : 1;
  const int c = 1 - a;
  const cplx q = std::exp(out.log_phase[c] - out.log_phase[a]) * s.X[c] / s.X[a];
  if (std::abs(1.0 - q) < 1e-300) throw PhysicsError("singular Bragg system: E1 X1 = E2 X2");

  out.forward[a] = -q / (1.0 - q) * u0;
  out.forward[c] = 1.0 / (1.0 - q) * u0;
  for (int i = 0; i < 2; ++i) out.reflected[i] = s.X[i] * out.forward[i];

  const double inv_sqrt_b = 1.0 / std::sqrt(std::abs(g.asymmetry()));
  // psi0 = E_a u_a + E_c u_c, evaluated as E_c (1 - X_c/X_a) / (1 - q).
  out.transmitted_exit = std::exp(out.log_phase[c]) * (1.0 - s.X[c] / s.X[a]) / (1.0 - q) * u0;
  out.reflected_exit = (s.X[c] - q * s.X[a]) / (1.0 - q) * u0 * inv_sqrt_b;

  const double mag = std::abs(u0);
  out.entrance_residual =
      rel(std::abs(out.forward[0] + out.forward[1] - u0), mag);
  // E_a X_a u_a + E_c X_c u_c = E_a X_a (u_a + q u_c); check the bracket.
  out.closure_residual =
      rel(std::abs(out.forward[a] + q * out.forward[c]),
          std::abs(out.forward[a]) + std::abs(q * out.forward[c]));
  return out;
}

ChannelAmplitudes laue_amplitudes(const BranchSolution& s, const DiffractionGeometry& g, cplx u0) {
  ChannelAmplitudes out;
  const double kappa = g.wavenumber() / g.cos_gamma();
  const double D = g.thickness;
  for (int i = 0; i < 2; ++i) out.log_phase[i] = cplx(0.0, kappa * D) * s.eps[i];
  const cplx dx = s.X[1] - s.X[0];
  if (dx == cplx(0.0)) throw PhysicsError("singular Laue system: X1 = X2");
  out.forward[0] = s.X[1] / dx * u0;
  out.forward[1] = -s.X[0] / dx * u0;
  for (int i = 0; i < 2; ++i) out.reflected[i] = s.X[i] * out.forward[i];
  const double inv_sqrt_b = 1.0 / std::sqrt(std::abs(g.asymmetry()));
  const cplx e0 = std::exp(out.log_phase[0]);
  const cplx e1 = std::exp(out.log_phase[1]);
  out.transmitted_exit = out.forward[0] * e0 + out.forward[1] * e1;
  out.reflected_exit = (out.reflected[0] * e0 + out.reflected[1] * e1) * inv_sqrt_b;
  const double mag = std::abs(u0);
  out.entrance_residual = rel(std::abs(out.forward[0] + out.forward[1] - u0), mag);
  out.closure_residual = rel(std::abs(out.reflected[0] + out.reflected[1]),
                             std::abs(out.reflected[0]) + std::abs(out.reflected[1]));
  return out;
}

namespace {

struct ChannelResult {
  ChannelAmplitudes amp;
  BranchSolution branches;
  bool decoupled = false;
};

ChannelResult solve_channel(const DiffractionGeometry& g, const StructureSums& sums, double geometric,
                            int spin, double schwinger_scale) {
  ChannelResult r;
  const auto pot = channel_potentials(sums, geometric, spin, schwinger_scale);
  const double energy = g.energy();
  if (std::abs(pot.vH) == 0.0) {
    r.decoupled = true;
    const cplx eps = forward_refraction(pot.v0, energy);
    const double kappa = g.wavenumber() / g.cos_gamma();
    r.amp.transmitted_exit = std::exp(cplx(0.0, kappa * g.thickness) * eps);
    r.amp.reflected_exit = 0.0;
    return r;
  }
  r.branches = solve_branches(g, pot, energy, spin);
  r.amp = g.kind == GeometryKind::BraggReflection ? bragg_amplitudes(r.branches, g, 1.0)
                                                  : laue_amplitudes(r.branches, g, 1.0);
  return r;
}

Spinor assemble(cplx a_plus, cplx a_minus, const Spinor& u0, const SpinorMatrix& su) {
  return 0.5 * (a_plus + a_minus) * u0 + 0.5 * (a_plus - a_minus) * (su * u0);
}

}  // namespace

ExitField exit_field(const DiffractionGeometry& geom_in, const StructureSums& sums, const Spinor& u0,
                     const FieldOptions& options) {
  if (!(geom_in.thickness >= 0.0)) throw PhysicsError("negative crystal thickness");
  DiffractionGeometry geom = geom_in;
  ExitField out;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Vec3 axis = Vec3::UnitZ();
    double geometric = 0.0;
    const Vec3 cross = geom.k0.cross(geom.H);
    const double cn = cross.norm();
    if (cn > 1e-15 * geom.k0.norm() * geom.H.norm()) {
      axis = cross / cn;
      geometric = cn / geom.H.squaredNorm();
    }
    const double scale = (geometric == 0.0) ? 0.0 : options.schwinger_scale;
    const auto plus = solve_channel(geom, sums, geometric, +1, scale);
    const auto minus = solve_channel(geom, sums, geometric, -1, scale);
    const bool degenerate = (!plus.decoupled && plus.branches.degenerate) ||
                            (!minus.decoupled && minus.branches.degenerate);
    if (degenerate && attempt < 3) {
      const double nudge = 64.0 * std::numeric_limits<double>::epsilon() * (1 << (4 * attempt));
      spdlog::warn("degenerate dispersion roots at theta={}, rho={}; nudging theta by {}",
                   geom_in.theta, geom_in.rho, nudge);
      geom.k0 = rotate_z(geom_in.k0, nudge);
      geom.theta = geom_in.theta + nudge;
      out.nudged = true;
      continue;
    }
    const SpinorMatrix su = pauli_dot(axis);
    out.schwinger_axis = axis;
    out.transmitted = assemble(plus.amp.transmitted_exit, minus.amp.transmitted_exit, u0, su);
    out.reflected = assemble(plus.amp.reflected_exit, minus.amp.reflected_exit, u0, su);
    out.T = out.transmitted.squaredNorm();
    out.R = out.reflected.squaredNorm();
    for (const auto* ch : {&plus, &minus}) {
      out.max_residual = std::max({out.max_residual, ch->amp.entrance_residual, ch->amp.closure_residual});
    }
    if (options.resolve_branches) {
      if (geom.kind != GeometryKind::LaueTransmission) {
        throw PhysicsError("branch-resolved fields are defined for Laue geometry only");
      }
      if (plus.decoupled || minus.decoupled) {
        throw PhysicsError("branch-resolved fields need a coupled reflection");
      }
      std::array<Spinor, 2> tb;
      std::array<Spinor, 2> rb;
      const double inv_sqrt_b = 1.0 / std::sqrt(std::abs(geom.asymmetry()));
      for (int i = 0; i < 2; ++i) {
        // Branch i of both channels shares the Pendelloesung phase; remove its mean.
        const cplx mean = 0.5 * (plus.amp.log_phase[i] + minus.amp.log_phase[i]);
        const cplx ep = std::exp(plus.amp.log_phase[i] - mean);
        const cplx em = std::exp(minus.amp.log_phase[i] - mean);
        tb[i] = assemble(plus.amp.forward[i] * ep, minus.amp.forward[i] * em, u0, su);
        rb[i] = assemble(plus.amp.reflected[i] * ep * inv_sqrt_b,
                         minus.amp.reflected[i] * em * inv_sqrt_b, u0, su);
      }
      out.transmitted_branches = tb;
      out.reflected_branches = rb;
    }
    return out;
  }
  return out;
}

// ---------------------------------------------------------------------------

ScanGeometry::ScanGeometry(const CrystalModel& crystal, const GeometrySpec& spec) : spec_(spec) {
  if (!(spec.thickness > 0.0) || !std::isfinite(spec.thickness)) {
    throw PhysicsError("crystal thickness must be positive");
  }
  sums_ = structure_sums(crystal, spec.hkl);
  const double scale = std::abs(sums_.forward);
  if (std::abs(sums_.nuclear) <= 1e-9 * scale && std::abs(sums_.schwinger) <= 1e-9 * scale) {
    throw PhysicsError(fmt::format("forbidden reflection ({} {} {})", spec.hkl.h, spec.hkl.k, spec.hkl.l));
  }
  const double hm = sums_.h_magnitude;
  if (spec.wavelength > 0.0) {
    nominal_wavelength_ = spec.wavelength;
  } else if (spec.bragg_angle > 0.0 && spec.bragg_angle <= kPi / 2 + 1e-12) {
    nominal_wavelength_ = 4.0 * kPi * std::sin(spec.bragg_angle) / hm;
  } else {
    throw PhysicsError("geometry needs a positive wavelength or a Bragg angle in (0, 90] deg");
  }
  const double sin_b = nominal_wavelength_ * hm / (4.0 * kPi);
  if (sin_b > 1.0 + 1e-6) {
    throw PhysicsError("wavelength " + std::to_string(nominal_wavelength_) +
                       " A exceeds 2d; the reflection cannot be excited");
  }
  backscattering_ = sin_b >= 1.0 - 1e-9;
  bragg_angle_ = backscattering_ ? kPi / 2 : std::asin(sin_b);
  wavelength_ = nominal_wavelength_;
  k_ = 2.0 * kPi / wavelength_;
  place(0.0);

  if (spec.alignment == Alignment::Dynamical) {
    using boost::math::tools::toms748_solve;
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t iters = 200;
    if (backscattering_) {
      auto f = [&](double k) { return center_condition(k, 0.0); };
      const double k_lo = 0.5 * hm * (1.0 - 1e-3);
      const double k_hi = 0.5 * hm * (1.0 + 1e-3);
      const double f_lo = f(k_lo);
      const double f_hi = f(k_hi);
      if (f_lo * f_hi > 0.0) throw PhysicsError("cannot bracket the dynamical wavelength");
      auto [lo, hi] = toms748_solve(f, k_lo, k_hi, f_lo, f_hi, tol, iters);
      k_ = 0.5 * (lo + hi);
      wavelength_ = 2.0 * kPi / k_;
    } else {
      auto f = [&](double rot) { return center_condition(k_, rot); };
      double step = 1e-7;
      double lo = -step;
      double hi = step;
      double f_lo = f(lo);
      double f_hi = f(hi);
      while (f_lo * f_hi > 0.0 && step < 0.05) {
        step *= 2.0;
        lo = -step;
        hi = step;
        f_lo = f(lo);
        f_hi = f(hi);
      }
      if (f_lo * f_hi > 0.0) throw PhysicsError("cannot bracket the dynamical crystal rotation");
      auto [a, b] = toms748_solve(f, lo, hi, f_lo, f_hi, tol, iters);
      rotation_ = 0.5 * (a + b);
    }
    place(rotation_);
  }

  const DiffractionGeometry centre = at(0.0, 0.0);
  const double b = centre.asymmetry();
  if (spec.kind == GeometryKind::BraggReflection && !(b < 0.0)) {
    throw PhysicsError("Bragg geometry requires a negative asymmetry factor");
  }
  if (spec.kind == GeometryKind::LaueTransmission && !(b > 0.0)) {
    throw PhysicsError("Laue geometry requires a positive asymmetry factor");
  }
}

std::pair<Vec3, Vec3> ScanGeometry::orient(double rotation) const {
  const double hm = sums_.h_magnitude;
  const double tb = bragg_angle_;
  const Vec3 H = hm * Vec3(-std::sin(tb), std::cos(tb), 0.0);
  Vec3 n = spec_.kind == GeometryKind::BraggReflection ? Vec3(-H / hm)
                                                       : Vec3(std::cos(tb), std::sin(tb), 0.0);
  n = rotate_z(n, spec_.asymmetry_angle);
  return {rotate_z(H, rotation), rotate_z(n, rotation)};
}

void ScanGeometry::place(double rotation) { std::tie(H_, n_) = orient(rotation); }

double ScanGeometry::center_condition(double k, double rotation) const {
  DiffractionGeometry g;
  g.k0 = k * Vec3::UnitX();
  std::tie(g.H, g.normal) = orient(rotation);
  const double v0 = sums_.prefactor * sums_.forward;
  const double b = g.asymmetry();
  return b * (g.energy() * g.deviation() + v0) - v0;
}

double ScanGeometry::energy() const { return PhysicalConstants::energy_meV(k_); }

DiffractionGeometry ScanGeometry::at(double theta, double rho) const {
  DiffractionGeometry g;
  g.k0 = k_ * Vec3(std::cos(theta) * std::cos(rho), std::sin(theta) * std::cos(rho), std::sin(rho));
  g.H = H_;
  g.normal = n_;
  g.kind = spec_.kind;
  g.thickness = spec_.thickness;
  g.theta = theta;
  g.rho = rho;
  return g;
}

ExitField ScanGeometry::evaluate(double theta, double rho, const Spinor& u0, bool resolve_branches) const {
  FieldOptions opt;
  opt.schwinger_scale = spec_.schwinger_scale;
  opt.resolve_branches = resolve_branches;
  return exit_field(at(theta, rho), sums_, u0, opt);
}

Vec3 ScanGeometry::reflected_direction() const {
  return (k_ * Vec3::UnitX() + H_).normalized();
}

double ScanGeometry::eta(double theta, double rho) const {
  const DiffractionGeometry g = at(theta, rho);
  const double v0 = sums_.prefactor * sums_.forward;
  const double vh = sums_.prefactor * std::abs(sums_.nuclear);
  const double b = g.asymmetry();
  return (b * (g.energy() * g.deviation() + v0) - v0) / (2.0 * std::sqrt(std::abs(b)) * vh);
}

double ScanGeometry::darwin_width() const {
  boost::math::tools::eps_tolerance<double> tol(48);
  auto solve = [&](auto f, double lo, double hi) {
    std::uintmax_t iters = 200;
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
    return 0.5 * (a + b);
  };
  // Locate the centre of the dynamical region along theta.
  double centre = 0.0;
  if (std::abs(eta(0.0, 0.0)) >= 1.0) {
    auto f = [&](double t) { return eta(t, 0.0); };
    double s = 1e-7;
    while (f(-s) * f(s) > 0.0) {
      s *= 2.0;
      if (s > 0.5) throw PhysicsError("dynamical region not reachable by rocking");
    }
    centre = solve(f, -s, s);
  }
  auto edge = [&](double sign) {
    auto f = [&](double t) { return std::abs(eta(t, 0.0)) - 1.0; };
    double step = 1e-9;
    double prev = centre;
    double t = centre + sign * step;
    int guard = 0;
    while (f(t) < 0.0) {
      prev = t;
      step *= 1.5;
      t = centre + sign * step;
      if (++guard > 200) throw PhysicsError("dynamical region edge not found");
    }
    return solve(f, std::min(prev, t), std::max(prev, t));
  };
  return edge(+1.0) - edge(-1.0);
}

}  // namespace sodiff
