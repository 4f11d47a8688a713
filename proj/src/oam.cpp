// SPDX-License-Identifier: Apache-2.0
#include "sodiff/oam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include <fftw3.h>
#include <spdlog/spdlog.h>

#include "sodiff/constants.hpp"

namespace sodiff {

namespace {

constexpr double kPi = PhysicalConstants::pi;
std::mutex fftw_planner_mutex;

ComplexImage empty_image(const WaveGrid& grid) {
  ComplexImage img;
  const double k = grid.wavenumber;
  img.ky = Axis{k * grid.theta.start, k * grid.theta.stop, grid.theta.n};
  img.kz = Axis{k * grid.rho.start, k * grid.rho.stop, grid.rho.n};
  img.values.assign(grid.size(), cplx(0.0));
  img.mask.assign(grid.size(), 0);
  return img;
}

bool usable(const WaveGrid& grid, std::size_t idx, bool physical_only) {
  return !grid.failed[idx] && (!physical_only || grid.physical[idx]);
}

// FFT of every ring, normalized by 1/n_phi so that entry m is psi^l for l = m or m - n_phi.
std::vector<cplx> ring_spectrum(const AzimuthalField& field) {
  const int n = static_cast<int>(field.n_phi());
  const int rings = static_cast<int>(field.n_r());
  std::vector<cplx> in = field.values();
  std::vector<cplx> out(in.size());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex);
    plan = fftw_plan_many_dft(1, &n, rings, reinterpret_cast<fftw_complex*>(in.data()), nullptr, 1, n,
                              reinterpret_cast<fftw_complex*>(out.data()), nullptr, 1, n, FFTW_FORWARD,
                              FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  const double inv = 1.0 / n;
  for (auto& v : out) v *= inv;
  return out;
}

std::size_t mode_slot(int ell, std::size_t n_phi) {
  return ell >= 0 ? static_cast<std::size_t>(ell) : static_cast<std::size_t>(ell + static_cast<int>(n_phi));
}

void check_mode(int ell, std::size_t n_phi) {
  const int nyq = static_cast<int>(n_phi / 2) - 1;
  if (std::abs(ell) > nyq) {
    throw std::invalid_argument("mode " + std::to_string(ell) + " beyond the azimuthal Nyquist limit " +
                                std::to_string(nyq));
  }
}

}  // namespace

ComplexImage component_image(const WaveGrid& grid, Beam beam, SpinComponent component, int branch,
                             bool physical_only) {
  if (branch >= 0 && (!grid.has_branches() || branch > 1)) {
    throw std::invalid_argument("grid has no branch " + std::to_string(branch));
  }
  ComplexImage img = empty_image(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (!usable(grid, idx, physical_only)) continue;
    const Spinor& psi = branch < 0 ? grid.field(beam)[idx] : grid.branches(beam)[idx][branch];
    img.values[idx] = spin_component(psi, grid.incident, component);
    img.mask[idx] = 1;
  }
  return img;
}

ComplexImage interference_image(const WaveGrid& grid, Beam beam, bool physical_only) {
  ComplexImage img = empty_image(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (!usable(grid, idx, physical_only)) continue;
    cplx acc = 0.0;
    if (grid.has_branches()) {
      for (const Spinor& psi : grid.branches(beam)[idx]) {
        acc += std::conj(spin_component(psi, grid.incident, SpinComponent::NonFlipped)) *
               spin_component(psi, grid.incident, SpinComponent::Flipped);
      }
    } else {
      const Spinor& psi = grid.field(beam)[idx];
      acc = std::conj(spin_component(psi, grid.incident, SpinComponent::NonFlipped)) *
            spin_component(psi, grid.incident, SpinComponent::Flipped);
    }
    img.values[idx] = acc;
    img.mask[idx] = 1;
  }
  return img;
}

AzimuthalField::AzimuthalField(const PolarSampling& sampling, double r_max, std::vector<cplx> values)
    : sampling_(sampling), r_max_(r_max), values_(std::move(values)) {
  if (sampling_.n_r < 2 || sampling_.n_phi < 4) throw std::invalid_argument("polar grid too small");
  if (!(r_max_ > 0.0)) throw std::invalid_argument("polar grid radius must be positive");
  if (values_.size() != sampling_.n_r * sampling_.n_phi) {
    throw std::invalid_argument("polar sample count does not match the grid");
  }
}

AzimuthalField AzimuthalField::from_function(std::size_t n_r, std::size_t n_phi, double r_max,
                                             const std::function<cplx(double, double)>& f) {
  PolarSampling s;
  s.n_r = n_r;
  s.n_phi = n_phi;
  s.r_max = r_max;
  std::vector<cplx> v(n_r * n_phi);
  for (std::size_t i = 0; i < n_r; ++i) {
    const double r = r_max * static_cast<double>(i) / static_cast<double>(n_r - 1);
    for (std::size_t j = 0; j < n_phi; ++j) {
      v[i * n_phi + j] = f(r, 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n_phi));
    }
  }
  return AzimuthalField(s, r_max, std::move(v));
}

double AzimuthalField::radius(std::size_t i) const {
  return r_max_ * static_cast<double>(i) / static_cast<double>(n_r() - 1);
}

double AzimuthalField::phi(std::size_t j) const {
  return 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n_phi());
}

double AzimuthalField::radial_weight(std::size_t i) const {
  const double dr = r_max_ / static_cast<double>(n_r() - 1);
  const double end = (i == 0 || i + 1 == n_r()) ? 0.5 : 1.0;
  return end * dr * radius(i);
}

double AzimuthalField::intensity() const {
  const double dphi = 2.0 * kPi / static_cast<double>(n_phi());
  double total = 0.0;
  for (std::size_t i = 0; i < n_r(); ++i) {
    double ring = 0.0;
    for (std::size_t j = 0; j < n_phi(); ++j) ring += std::norm((*this)(i, j));
    total += radial_weight(i) * ring * dphi;
  }
  return total;
}

bool AzimuthalField::same_grid(const AzimuthalField& o) const {
  return n_r() == o.n_r() && n_phi() == o.n_phi() && r_max_ == o.r_max_ &&
         sampling_.center_y == o.sampling_.center_y && sampling_.center_z == o.sampling_.center_z &&
         sampling_.sense == o.sampling_.sense;
}

AzimuthalField resample(const ComplexImage& image, const PolarSampling& sampling) {
  const Axis& ay = image.ky;
  const Axis& az = image.kz;
  if (ay.n < 2 || az.n < 2) throw std::invalid_argument("resampling needs a 2D source grid");
  const double cy = sampling.center_y;
  const double cz = sampling.center_z;
  double r_max = sampling.r_max;
  if (r_max <= 0.0) {
    r_max = std::min({cy - ay.start, ay.stop - cy, cz - az.start, az.stop - cz});
    if (!(r_max > 0.0)) throw std::invalid_argument("polar centre lies outside the source grid");
  }
  const double dy = ay.step();
  const double dz = az.step();
  auto sample = [&](std::size_t i, std::size_t j) -> cplx {
    const std::size_t idx = image.index(i, j);
    return image.mask[idx] ? image.values[idx] : cplx(0.0);
  };
  auto bilinear = [&](double y, double z) -> cplx {
    const double fy = (y - ay.start) / dy;
    const double fz = (z - az.start) / dz;
    if (fy < 0.0 || fz < 0.0 || fy > static_cast<double>(ay.n - 1) || fz > static_cast<double>(az.n - 1)) {
      return 0.0;
    }
    std::size_t i = std::min(static_cast<std::size_t>(fy), ay.n - 2);
    std::size_t j = std::min(static_cast<std::size_t>(fz), az.n - 2);
    const double ty = fy - static_cast<double>(i);
    const double tz = fz - static_cast<double>(j);
    return (1 - ty) * (1 - tz) * sample(i, j) + ty * (1 - tz) * sample(i + 1, j) +
           (1 - ty) * tz * sample(i, j + 1) + ty * tz * sample(i + 1, j + 1);
  };

  const std::size_t nr = sampling.n_r;
  const std::size_t np = sampling.n_phi;
  if (nr < 2 || np < 4) throw std::invalid_argument("polar grid too small");
  std::vector<cplx> v(nr * np);
  for (std::size_t i = 0; i < nr; ++i) {
    const double r = r_max * static_cast<double>(i) / static_cast<double>(nr - 1);
    for (std::size_t j = 0; j < np; ++j) {
      const double phi = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(np);
      double y, z;
      if (sampling.sense == AzimuthSense::AboutMinusX) {
        y = cy + r * std::sin(phi);
        z = cz + r * std::cos(phi);
      } else {
        y = cy + r * std::cos(phi);
        z = cz + r * std::sin(phi);
      }
      v[i * np + j] = bilinear(y, z);
    }
  }
  PolarSampling s = sampling;
  s.r_max = r_max;
  AzimuthalField field(s, r_max, std::move(v));

  double cart = 0.0;
  for (std::size_t i = 0; i < ay.n; ++i) {
    for (std::size_t j = 0; j < az.n; ++j) {
      const double y = ay.at(i) - cy;
      const double z = az.at(j) - cz;
      if (y * y + z * z <= r_max * r_max) cart += std::norm(sample(i, j));
    }
  }
  cart *= dy * dz;
  field.set_intensity_ratio(cart > 0.0 ? field.intensity() / cart : 1.0);
  return field;
}

AzimuthalField conjugate_product(const AzimuthalField& a, const AzimuthalField& b) {
  if (!a.same_grid(b)) throw std::invalid_argument("fields live on different polar grids");
  std::vector<cplx> v(a.values().size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::conj(a.values()[k]) * b.values()[k];
  return AzimuthalField(a.sampling(), a.r_max(), std::move(v));
}

std::vector<cplx> aft(const AzimuthalField& field, int ell) {
  check_mode(ell, field.n_phi());
  const auto spec = ring_spectrum(field);
  const std::size_t slot = mode_slot(ell, field.n_phi());
  std::vector<cplx> out(field.n_r());
  for (std::size_t i = 0; i < field.n_r(); ++i) out[i] = spec[i * field.n_phi() + slot];
  return out;
}

double OamDistribution::at(int ell) const {
  if (std::abs(ell) > L) return 0.0;
  return p[static_cast<std::size_t>(ell + L)];
}

double OamDistribution::sum() const { return std::accumulate(p.begin(), p.end(), 0.0); }

OamDistribution oam_distribution(std::span<const AzimuthalField> fields, int L) {
  if (fields.empty()) throw std::invalid_argument("no fields for the OAM distribution");
  const std::size_t np = fields.front().n_phi();
  check_mode(L, np);
  OamDistribution d;
  d.L = L;
  d.p.assign(static_cast<std::size_t>(2 * L + 1), 0.0);
  double total = 0.0;
  for (const auto& field : fields) {
    if (!field.same_grid(fields.front())) throw std::invalid_argument("fields live on different polar grids");
    const auto spec = ring_spectrum(field);
    for (std::size_t i = 0; i < field.n_r(); ++i) {
      const double w = 2.0 * kPi * field.radial_weight(i);
      for (std::size_t m = 0; m < np; ++m) {
        const double e = w * std::norm(spec[i * np + m]);
        total += e;
        int ell = static_cast<int>(m);
        if (ell > static_cast<int>(np / 2)) ell -= static_cast<int>(np);
        if (std::abs(ell) <= L) d.p[static_cast<std::size_t>(ell + L)] += e;
      }
    }
  }
  if (!(total > 0.0)) throw PhysicsError("OAM distribution of a field with zero intensity");
  for (auto& v : d.p) v /= total;
  d.total_intensity = total;
  const double captured = d.sum();
  d.residual = std::max(0.0, 1.0 - captured);
  double m = 0.0;
  for (int ell = -L; ell <= L; ++ell) m += ell * d.at(ell);
  d.mean = captured > 0.0 ? m / captured : 0.0;
  return d;
}

OamDistribution oam_distribution(const AzimuthalField& field, int L) {
  return oam_distribution(std::span<const AzimuthalField>(&field, 1), L);
}

OamDistribution interference_distribution(const AzimuthalField& plus, const AzimuthalField& minus, int L) {
  return oam_distribution(conjugate_product(plus, minus), L);
}

double oam_expectation(const OamDistribution& dist) {
  double m = 0.0;
  for (int ell = -dist.L; ell <= dist.L; ++ell) m += ell * dist.at(ell);
  return m;
}

double oam_rms(const OamDistribution& dist) {
  double s = 0.0;
  for (int ell = -dist.L; ell <= dist.L; ++ell) s += static_cast<double>(ell) * ell * dist.at(ell);
  const double c = dist.sum();
  return c > 0.0 ? std::sqrt(s / c) : 0.0;
}

namespace {

// Central-difference weights c_k (k = 1..m) for the first derivative, order 2m.
std::vector<double> central_weights(int m) {
  std::vector<double> c(static_cast<std::size_t>(m));
  for (int k = 1; k <= m; ++k) {
    // (-1)^(k+1) (m!)^2 / (k (m-k)! (m+k)!), via lgamma to stay finite for any m.
    const double lg = 2.0 * std::lgamma(m + 1.0) - std::lgamma(m - k + 1.0) - std::lgamma(m + k + 1.0);
    c[static_cast<std::size_t>(k - 1)] = ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(lg) / k;
  }
  return c;
}

// Returns (numerator, denominator) of <L_z> using every `stride`-th azimuthal node.
std::pair<double, double> lz_sums(const AzimuthalField& f, int order, std::size_t stride) {
  const std::size_t np = f.n_phi() / stride;
  const int m = order / 2;
  const auto c = central_weights(m);
  const double dphi = 2.0 * kPi / static_cast<double>(np);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < f.n_r(); ++i) {
    const double w = f.radial_weight(i);
    if (w == 0.0) continue;
    double ring_num = 0.0;
    double ring_den = 0.0;
    for (std::size_t j = 0; j < np; ++j) {
      cplx deriv = 0.0;
      for (int k = 1; k <= m; ++k) {
        const std::size_t jp = ((j + k) % np) * stride;
        const std::size_t jm = ((j + np - (k % np)) % np) * stride;
        deriv += c[static_cast<std::size_t>(k - 1)] * (f(i, jp) - f(i, jm));
      }
      deriv /= dphi;
      const cplx psi = f(i, j * stride);
      // Re(conj(psi) * (-i) dpsi); the imaginary part vanishes in the exact sum.
      ring_num += (std::conj(psi) * cplx(0.0, -1.0) * deriv).real();
      ring_den += std::norm(psi);
    }
    num += w * ring_num;
    den += w * ring_den;
  }
  return {num, den};
}

}  // namespace

LzEstimate oracle_Lz(const AzimuthalField& field, int order) {
  if (order < 2 || order % 2 != 0) throw std::invalid_argument("stencil order must be even and >= 2");
  if (static_cast<std::size_t>(order) >= field.n_phi()) throw std::invalid_argument("stencil wider than the ring");
  const auto [num, den] = lz_sums(field, order, 1);
  if (!(den > 0.0)) throw PhysicsError("L_z oracle on a field with zero intensity");
  LzEstimate est;
  est.value = num / den;
  // Without a coarser ring to compare against, the estimate cannot be certified.
  est.refinement_delta = std::numeric_limits<double>::infinity();
  if (field.n_phi() % 2 == 0 && static_cast<std::size_t>(order) < field.n_phi() / 2) {
    const auto [cn, cd] = lz_sums(field, order, 2);
    const double coarse = cd > 0.0 ? cn / cd : est.value;
    est.refinement_delta = std::abs(est.value - coarse) / (std::pow(2.0, order) - 1.0) /
                           std::max(std::abs(est.value), 1.0);
  }
  est.under_resolved = est.refinement_delta > 1e-3;
  if (est.under_resolved) {
    spdlog::warn("L_z oracle under-resolved: refinement delta {:.3g}", est.refinement_delta);
  }
  return est;
}

}  // namespace sodiff
