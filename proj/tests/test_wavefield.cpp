// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <sstream>

#include "sodiff/wavefield.hpp"
#include "support.hpp"

using namespace sodiff;
using doctest::Approx;

namespace {

WaveGrid small_grid(GeometryKind kind, double schwinger, unsigned threads, bool branches = false) {
  GeometrySpec g;
  g.kind = kind;
  g.wavelength = 2.0;
  g.thickness = 1e6;
  g.schwinger_scale = schwinger;
  ScanGeometry sg(test::quartz(), g);
  const double w = sg.darwin_width();
  ScanOptions opt;
  opt.threads = threads;
  opt.resolve_branches = branches;
  return grid_scan(sg, test::spin_x(), Axis::make(-3 * w, 3 * w, 24), Axis::make(-0.01, 0.01, 17), opt);
}

PhaseMap vortex_map(int charge, std::size_t n) {
  PhaseMap m;
  m.theta = Axis::make(-1.0, 1.0, n);
  m.rho = Axis::make(-1.0, 1.0, n);
  m.phase.resize(n * n);
  m.valid.assign(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.phase[m.index(i, j)] = std::arg(std::polar(1.0, charge * std::atan2(m.rho.at(j), m.theta.at(i))));
    }
  }
  return m;
}

}  // namespace

TEST_SUITE("wavefield") {
  TEST_CASE("axis construction") {
    const Axis a = Axis::make(-1.0, 1.0, 5);
    CHECK(a.step() == Approx(0.5));
    CHECK(a.at(4) == Approx(1.0));
    CHECK(a.values().size() == 5);
    CHECK(Axis::make(0.3, 0.3, 1).at(0) == 0.3);
    CHECK_THROWS_AS(Axis::make(1.0, 1.0, 4), ConfigError);
    CHECK_THROWS_AS(Axis::make(0.0, 1.0, 0), ConfigError);
  }

  TEST_CASE("spin components decompose the spinor") {
    const Spinor u = test::spin_x();
    const Spinor m = orthogonal_spinor(u);
    CHECK(std::abs(u.dot(m)) < 1e-15);
    const Spinor psi(cplx(0.3, -0.2), cplx(-0.1, 0.7));
    const double sum = std::norm(spin_component(psi, u, SpinComponent::NonFlipped)) +
                       std::norm(spin_component(psi, u, SpinComponent::Flipped));
    CHECK(sum == Approx(psi.squaredNorm()).epsilon(1e-14));
  }

  TEST_CASE("winding number of synthetic vortices") {
    for (int q : {-2, -1, 0, 1, 3}) {
      const PhaseMap m = vortex_map(q, 41);
      for (std::size_t h : {3, 10, 19}) {
        CHECK(winding_number(m, rectangular_loop(20, 20, h, h, +1)) == q);
        CHECK(winding_number(m, rectangular_loop(20, 20, h, h, -1)) == -q);
      }
    }
    PhaseMap m = vortex_map(1, 41);
    CHECK(winding_number(m, rectangular_loop(30, 30, 5, 5)) == 0);  // loop not enclosing the core
    m.valid[m.index(15, 20)] = 0;
    CHECK_THROWS_AS(winding_number(m, rectangular_loop(20, 20, 5, 5)), PhysicsError);
    CHECK_THROWS(rectangular_loop(3, 3, 5, 5));
  }

  TEST_CASE("grid scans are independent of the thread count") {
    const auto a = small_grid(GeometryKind::BraggReflection, 1.0, 1);
    const auto b = small_grid(GeometryKind::BraggReflection, 1.0, 4);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a.transmitted[k] == b.transmitted[k]);
      CHECK(a.reflected[k] == b.reflected[k]);
    }
    CHECK(a.max_residual < 1e-12);
  }

  TEST_CASE("grid flux is conserved") {
    for (auto kind : {GeometryKind::BraggReflection, GeometryKind::LaueTransmission}) {
      const auto g = small_grid(kind, 1.0, 2);
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!g.physical[k]) continue;
        CHECK(std::abs(g.transmitted[k].squaredNorm() + g.reflected[k].squaredNorm() - 1.0) < 1e-10);
      }
    }
  }

  TEST_CASE("branch-resolved densities keep the flux of each branch") {
    const auto g = small_grid(GeometryKind::LaueTransmission, 1.0, 2, true);
    REQUIRE(g.has_branches());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = g.density(Beam::Transmitted, k).trace().real();
      CHECK(t >= 0.0);
      CHECK(t <= 1.0 + 1e-12);
    }
  }

  TEST_CASE("without spin-orbit coupling the polarization is unchanged") {
    const auto g = small_grid(GeometryKind::BraggReflection, 0.0, 2);
    for (Beam b : {Beam::Reflected, Beam::Transmitted}) {
      const auto c = polarization_curve(g, b, ScanAxis::Theta);
      for (std::size_t i = 0; i < c.abscissa.size(); ++i) {
        REQUIRE(c.valid[i]);
        CHECK(c.Px[i] == Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(c.Py[i]) < 1e-12);
        CHECK(std::abs(c.Pz[i]) < 1e-12);
      }
      CHECK(spin_flip_summary(g, b).ratio() < 1e-24);
    }
  }

  TEST_CASE("polarization vectors are bounded") {
    const auto g = small_grid(GeometryKind::BraggReflection, 1.0, 2);
    const auto m = polarization_map(g, Beam::Reflected);
    for (std::size_t k = 0; k < m.Px.size(); ++k) {
      if (!m.valid[k]) continue;
      CHECK(m.Px[k] * m.Px[k] + m.Py[k] * m.Py[k] + m.Pz[k] * m.Pz[k] <= 1.0 + 1e-12);
    }
  }

  TEST_CASE("binary grid round trip") {
    const auto g = small_grid(GeometryKind::BraggReflection, 1.0, 1);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_grid_binary(g, ss);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 64 + g.size() * 8 * sizeof(double));
    CHECK(bytes.substr(0, 8) == "SODGRID1");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    CHECK(version == 1);
    const auto back = read_grid_binary(ss);
    CHECK(back.theta.n == g.theta.n);
    CHECK(back.rho.stop == g.rho.stop);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(back.reflected[k] == g.reflected[k]);
    std::stringstream junk("NOTAGRID and more bytes to pad the header out to sixty four bytes........");
    CHECK_THROWS(read_grid_binary(junk));
  }

  TEST_CASE("csv grid layout") {
    const auto g = small_grid(GeometryKind::BraggReflection, 1.0, 1);
    std::ostringstream os;
    write_grid_csv(g, os, 9);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("theta_rad,rho_rad,T_up_re", 0) == 0);
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == g.size());
  }
}
