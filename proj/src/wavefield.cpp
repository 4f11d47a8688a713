// SPDX-License-Identifier: Apache-2.0
#include "sodiff/wavefield.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sodiff/constants.hpp"

namespace sodiff {

namespace {
constexpr double kPi = PhysicalConstants::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMagic[8] = {'S', 'O', 'D', 'G', 'R', 'I', 'D', '1'};

const SpinorMatrix& pauli(int i) {
  static const std::array<SpinorMatrix, 3> m = [] {
    std::array<SpinorMatrix, 3> s;
    s[0] << 0, 1, 1, 0;
    s[1] << 0, cplx(0, -1), cplx(0, 1), 0;
    s[2] << 1, 0, 0, -1;
    return s;
  }();
  return m[i];
}

double expectation(const SpinorMatrix& rho, int i) { return (rho * pauli(i)).trace().real(); }

}  // namespace

Axis Axis::make(double start, double stop, std::size_t n) {
  if (n < 1) throw ConfigError("axis needs at least one point");
  if (!std::isfinite(start) || !std::isfinite(stop)) throw ConfigError("axis bounds must be finite");
  if (n > 1 && !(stop > start)) throw ConfigError("axis range must be strictly increasing");
  return Axis{start, stop, n};
}

double Axis::at(std::size_t i) const {
  if (n == 1) return start;
  // Symmetric evaluation keeps mirrored axes exactly antisymmetric.
  const double t = static_cast<double>(i) / static_cast<double>(n - 1);
  return start * (1.0 - t) + stop * t;
}

std::vector<double> Axis::values() const {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = at(i);
  return v;
}

const char* to_string(SpinComponent c) {
  return c == SpinComponent::Flipped ? "flipped" : "non-flipped";
}

Spinor orthogonal_spinor(const Spinor& u) {
  return Spinor(std::conj(u[1]), -std::conj(u[0]));
}

cplx spin_component(const Spinor& psi, const Spinor& incident, SpinComponent c) {
  const Spinor basis = c == SpinComponent::NonFlipped ? incident : orthogonal_spinor(incident);
  return basis.dot(psi);  // Eigen's dot conjugates the left operand
}

SpinorMatrix WaveGrid::density(Beam beam, std::size_t idx) const {
  if (has_branches()) {
    const auto& b = branches(beam)[idx];
    return b[0] * b[0].adjoint() + b[1] * b[1].adjoint();
  }
  const Spinor& psi = field(beam)[idx];
  return psi * psi.adjoint();
}

int WaveGrid::propagation_sense(Beam beam) const {
  if (beam == Beam::Transmitted) return +1;
  return reflected_direction.x() >= 0.0 ? +1 : -1;
}

WaveGrid grid_scan(const ScanGeometry& geometry, const Spinor& u0, const Axis& theta, const Axis& rho,
                   const ScanOptions& options) {
  WaveGrid grid;
  grid.theta = theta;
  grid.rho = rho;
  grid.wavenumber = geometry.wavenumber();
  grid.kind = geometry.kind();
  grid.incident = u0;
  grid.reflected_direction = geometry.reflected_direction();
  const std::size_t n = grid.size();
  grid.transmitted.assign(n, Spinor::Zero());
  grid.reflected.assign(n, Spinor::Zero());
  grid.failed.assign(n, 0);
  grid.physical.assign(n, 1);
  if (options.resolve_branches) {
    grid.transmitted_branches.assign(n, {Spinor::Zero(), Spinor::Zero()});
    grid.reflected_branches.assign(n, {Spinor::Zero(), Spinor::Zero()});
  }
  std::vector<double> residual(n, 0.0);
  const Spinor nan_spinor(cplx(kNaN, kNaN), cplx(kNaN, kNaN));

  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t idx = first; idx < n; idx += stride) {
      const std::size_t i = idx / rho.n;
      const std::size_t j = idx % rho.n;
      const double t = theta.at(i);
      const double r = rho.at(j);
      const DiffractionGeometry g = geometry.at(t, r);
      const double exit_dot = (g.k0 + g.H).dot(g.normal);
      const bool enters = g.k0.dot(g.normal) > 0.0;
      const bool exits = geometry.kind() == GeometryKind::BraggReflection ? exit_dot < 0.0 : exit_dot > 0.0;
      grid.physical[idx] = (enters && exits) ? 1 : 0;
      try {
        const ExitField f = geometry.evaluate(t, r, u0, options.resolve_branches);
        grid.transmitted[idx] = f.transmitted;
        grid.reflected[idx] = f.reflected;
        residual[idx] = f.max_residual;
        if (options.resolve_branches) {
          grid.transmitted_branches[idx] = *f.transmitted_branches;
          grid.reflected_branches[idx] = *f.reflected_branches;
        }
      } catch (const PhysicsError& e) {
        grid.failed[idx] = 1;
        grid.transmitted[idx] = nan_spinor;
        grid.reflected[idx] = nan_spinor;
        if (options.resolve_branches) {
          grid.transmitted_branches[idx] = {nan_spinor, nan_spinor};
          grid.reflected_branches[idx] = {nan_spinor, nan_spinor};
        }
        spdlog::debug("grid point theta={} rho={} failed: {}", t, r, e.what());
      }
    }
  };

  const unsigned threads = std::max(1u, options.threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
    for (auto& th : pool) th.join();
  }
  for (double r : residual) grid.max_residual = std::max(grid.max_residual, r);
  const auto failures = std::count(grid.failed.begin(), grid.failed.end(), std::uint8_t{1});
  if (failures > 0) spdlog::warn("{} of {} grid points failed and were set to NaN", failures, n);

  grid.metadata["geometry"] = to_string(geometry.kind());
  grid.metadata["hkl"] = fmt::format("{} {} {}", geometry.spec().hkl.h, geometry.spec().hkl.k,
                                     geometry.spec().hkl.l);
  grid.metadata["wavelength_A"] = fmt::format("{:.10g}", geometry.wavelength());
  grid.metadata["thickness_A"] = fmt::format("{:.10g}", geometry.spec().thickness);
  grid.metadata["crystal_rotation_rad"] = fmt::format("{:.10g}", geometry.crystal_rotation());
  grid.metadata["branches"] = options.resolve_branches ? "incoherent" : "coherent";
  return grid;
}

SpinFlipSummary spin_flip_summary(const WaveGrid& grid, Beam beam,
                                  const std::function<bool(std::size_t, std::size_t)>& include) {
  SpinFlipSummary s;
  const Spinor keep = grid.incident;
  const Spinor flip = orthogonal_spinor(grid.incident);
  for (std::size_t i = 0; i < grid.theta.n; ++i) {
    for (std::size_t j = 0; j < grid.rho.n; ++j) {
      const std::size_t idx = grid.index(i, j);
      if (grid.failed[idx] || !grid.physical[idx]) continue;
      if (include && !include(i, j)) continue;
      const SpinorMatrix rho = grid.density(beam, idx);
      s.non_flipped += (keep.adjoint() * rho * keep)(0, 0).real();
      s.flipped += (flip.adjoint() * rho * flip)(0, 0).real();
    }
  }
  return s;
}

PolarizationCurve polarization_curve(const WaveGrid& grid, Beam beam, ScanAxis axis) {
  PolarizationCurve c;
  const Axis& a = axis == ScanAxis::Theta ? grid.theta : grid.rho;
  const Axis& other = axis == ScanAxis::Theta ? grid.rho : grid.theta;
  c.unit = "rad";
  c.abscissa = a.values();
  c.Px.assign(a.n, kNaN);
  c.Py.assign(a.n, kNaN);
  c.Pz.assign(a.n, kNaN);
  c.weight.assign(a.n, 0.0);
  c.valid.assign(a.n, 0);
  for (std::size_t p = 0; p < a.n; ++p) {
    SpinorMatrix acc = SpinorMatrix::Zero();
    for (std::size_t q = 0; q < other.n; ++q) {
      const std::size_t idx = axis == ScanAxis::Theta ? grid.index(p, q) : grid.index(q, p);
      if (grid.failed[idx] || !grid.physical[idx]) continue;
      acc += grid.density(beam, idx);
    }
    const double w = acc.trace().real();
    c.weight[p] = w;
    if (w > 1e-300) {
      c.Px[p] = expectation(acc, 0) / w;
      c.Py[p] = expectation(acc, 1) / w;
      c.Pz[p] = expectation(acc, 2) / w;
      c.valid[p] = 1;
    }
  }
  return c;
}

PolarizationMap polarization_map(const WaveGrid& grid, Beam beam) {
  PolarizationMap m;
  m.theta = grid.theta;
  m.rho = grid.rho;
  const std::size_t n = grid.size();
  m.Px.assign(n, kNaN);
  m.Py.assign(n, kNaN);
  m.Pz.assign(n, kNaN);
  m.intensity.assign(n, 0.0);
  m.valid.assign(n, 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (grid.failed[idx]) continue;
    const SpinorMatrix rho = grid.density(beam, idx);
    const double w = rho.trace().real();
    m.intensity[idx] = w;
    if (w > 1e-300) {
      m.Px[idx] = expectation(rho, 0) / w;
      m.Py[idx] = expectation(rho, 1) / w;
      m.Pz[idx] = expectation(rho, 2) / w;
      m.valid[idx] = 1;
    }
  }
  return m;
}

PhaseMap phase_map(const WaveGrid& grid, SpinComponent component, Beam beam) {
  PhaseMap m;
  m.theta = grid.theta;
  m.rho = grid.rho;
  const std::size_t n = grid.size();
  m.phase.assign(n, kNaN);
  m.valid.assign(n, 0);
  const auto& f = grid.field(beam);
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (grid.failed[idx]) continue;
    const cplx a = spin_component(f[idx], grid.incident, component);
    if (std::abs(a) < 1e-300) continue;
    double ph = std::arg(a);
    if (ph <= -kPi) ph += 2.0 * kPi;
    m.phase[idx] = ph;
    m.valid[idx] = 1;
  }
  return m;
}

Loop rectangular_loop(std::size_t i0, std::size_t j0, std::size_t half_i, std::size_t half_j, int sense) {
  if (half_i == 0 || half_j == 0 || half_i > i0 || half_j > j0) {
    throw std::invalid_argument("rectangular loop leaves the grid or is empty");
  }
  Loop loop;
  const std::size_t i_lo = i0 - half_i, i_hi = i0 + half_i;
  const std::size_t j_lo = j0 - half_j, j_hi = j0 + half_j;
  for (std::size_t i = i_lo; i < i_hi; ++i) loop.emplace_back(i, j_lo);
  for (std::size_t j = j_lo; j < j_hi; ++j) loop.emplace_back(i_hi, j);
  for (std::size_t i = i_hi; i > i_lo; --i) loop.emplace_back(i, j_hi);
  for (std::size_t j = j_hi; j > j_lo; --j) loop.emplace_back(i_lo, j);
  if (sense < 0) std::reverse(loop.begin(), loop.end());
  return loop;
}

int winding_number(const PhaseMap& map, const Loop& loop) {
  if (loop.size() < 3) throw std::invalid_argument("winding loop needs at least three points");
  double total = 0.0;
  for (std::size_t p = 0; p < loop.size(); ++p) {
    const auto [i, j] = loop[p];
    const auto [ni, nj] = loop[(p + 1) % loop.size()];
    if (i >= map.theta.n || j >= map.rho.n || ni >= map.theta.n || nj >= map.rho.n) {
      throw std::invalid_argument("winding loop leaves the grid");
    }
    const std::size_t a = map.index(i, j);
    const std::size_t b = map.index(ni, nj);
    if (!map.valid[a] || !map.valid[b]) throw PhysicsError("winding loop crosses a masked point");
    total += std::remainder(map.phase[b] - map.phase[a], 2.0 * kPi);
  }
  return static_cast<int>(std::lround(total / (2.0 * kPi)));
}

void write_grid_csv(const WaveGrid& grid, std::ostream& out, int precision) {
  out << "theta_rad,rho_rad,T_up_re,T_up_im,T_down_re,T_down_im,R_up_re,R_up_im,R_down_re,R_down_im\n";
  for (std::size_t i = 0; i < grid.theta.n; ++i) {
    for (std::size_t j = 0; j < grid.rho.n; ++j) {
      const std::size_t idx = grid.index(i, j);
      const Spinor& t = grid.transmitted[idx];
      const Spinor& r = grid.reflected[idx];
      out << fmt::format("{:.{}g},{:.{}g}", grid.theta.at(i), precision, grid.rho.at(j), precision);
      for (const cplx v : {t[0], t[1], r[0], r[1]}) {
        out << fmt::format(",{:.{}g},{:.{}g}", v.real(), precision, v.imag(), precision);
      }
      out << '\n';
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary grid I/O assumes little endian");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated binary grid");
  return v;
}

}  // namespace

void write_grid_binary(const WaveGrid& grid, std::ostream& out) {
  out.write(kMagic, 8);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, grid.theta.n);
  put<std::uint64_t>(out, grid.rho.n);
  put<double>(out, grid.theta.start);
  put<double>(out, grid.theta.stop);
  put<double>(out, grid.rho.start);
  put<double>(out, grid.rho.stop);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    for (const cplx v : {grid.transmitted[idx][0], grid.transmitted[idx][1], grid.reflected[idx][0],
                         grid.reflected[idx][1]}) {
      put<double>(out, v.real());
      put<double>(out, v.imag());
    }
  }
  if (!out) throw IoError("failed writing binary grid");
}

WaveGrid read_grid_binary(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a binary grid file");
  const auto version = get<std::uint32_t>(in);
  const auto dtype = get<std::uint32_t>(in);
  if (version != 1 || dtype != 1) throw IoError("unsupported binary grid version or dtype");
  WaveGrid g;
  g.theta.n = get<std::uint64_t>(in);
  g.rho.n = get<std::uint64_t>(in);
  g.theta.start = get<double>(in);
  g.theta.stop = get<double>(in);
  g.rho.start = get<double>(in);
  g.rho.stop = get<double>(in);
  const std::size_t n = g.size();
  g.transmitted.resize(n);
  g.reflected.resize(n);
  g.failed.assign(n, 0);
  g.physical.assign(n, 1);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::array<cplx, 4> v;
    for (auto& c : v) {
      const double re = get<double>(in);
      const double im = get<double>(in);
      c = cplx(re, im);
    }
    g.transmitted[idx] = Spinor(v[0], v[1]);
    g.reflected[idx] = Spinor(v[2], v[3]);
    if (!std::isfinite(v[0].real())) g.failed[idx] = 1;
  }
  return g;
}

}  // namespace sodiff
