// SPDX-License-Identifier: Apache-2.0
#include "sodiff/crystal.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "sodiff/constants.hpp"

namespace sodiff {

namespace {
constexpr double kTwoPi = 2.0 * PhysicalConstants::pi;
}

double FormFactor::operator()(double h_magnitude) const {
  const double s = h_magnitude / (2.0 * kTwoPi);
  const double s2 = s * s;
  double num = c;
  double den = c;
  for (int i = 0; i < 4; ++i) {
    num += a[i] * std::exp(-b[i] * s2);
    den += a[i];
  }
  return den == 0.0 ? 1.0 : num / den;
}

FormFactor FormFactor::unity() {
  FormFactor f;
  f.c = 1.0;
  return f;
}

CrystalModel::CrystalModel(std::string id, const Mat3& lattice, std::vector<AtomSite> sites)
    : id_(std::move(id)), lattice_(lattice), sites_(std::move(sites)) {
  volume_ = std::abs(lattice_.row(0).dot(lattice_.row(1).cross(lattice_.row(2))));
  const double scale = lattice_.cwiseAbs().maxCoeff();
  if (!(volume_ > 1e-12 * scale * scale * scale) || !std::isfinite(volume_)) {
    throw PhysicsError("degenerate lattice: cell volume " + std::to_string(volume_));
  }
  // a_i . b_j = 2 pi delta_ij  =>  B = 2 pi (A^-1)^T with vectors as rows.
  reciprocal_ = kTwoPi * lattice_.inverse().transpose();
}

Vec3 CrystalModel::cartesian(const Vec3& fractional) const {
  return lattice_.transpose() * fractional;
}

CrystalModel CrystalModel::without_schwinger() const {
  auto sites = sites_;
  for (auto& s : sites) s.Z = 0;
  return CrystalModel(id_, lattice_, std::move(sites));
}

CrystalModel CrystalModel::with_scaled_b(double s) const {
  auto sites = sites_;
  for (auto& site : sites) site.b_fm *= s;
  return CrystalModel(id_, lattice_, std::move(sites));
}

Vec3 reciprocal_vector(const CrystalModel& crystal, const Miller& hkl) {
  if (hkl.is_zero()) throw PhysicsError("reciprocal vector requested for hkl = (0,0,0)");
  return crystal.reciprocal_basis().transpose() * hkl.as_vector();
}

SchwingerAxis schwinger_axis(const Vec3& K, const Vec3& H) {
  const double kn = K.norm();
  const double hn = H.norm();
  if (kn == 0.0 || hn == 0.0) throw PhysicsError("Schwinger axis undefined for a zero vector");
  const Vec3 cross = K.cross(H);
  const double cn = cross.norm();
  if (cn <= 1e-15 * kn * hn) throw PhysicsError("Schwinger axis undefined: K parallel to H");
  return {cross / cn, cn / (hn * hn)};
}

double schwinger_strength(const AtomSite& site, double h_magnitude) {
  return PhysicalConstants::schwinger_length_fm() * site.Z * (1.0 - site.form(h_magnitude));
}

SpinorMatrix pauli_dot(const Vec3& u) {
  SpinorMatrix m;
  m << cplx(u.z(), 0.0), cplx(u.x(), -u.y()), cplx(u.x(), u.y()), cplx(-u.z(), 0.0);
  return m;
}

SpinorMatrix potential_fourier(const CrystalModel& crystal, const Vec3& H, const Vec3& K) {
  const double pref = PhysicalConstants::optical_prefactor() / crystal.volume() * 1e-5;
  const double hn = H.norm();
  SpinorMatrix sum = SpinorMatrix::Zero();
  SpinorMatrix spin = SpinorMatrix::Zero();
  if (hn > 0.0) spin = pauli_dot(K.cross(H) / (hn * hn));
  const SpinorMatrix one = SpinorMatrix::Identity();
  for (const auto& site : crystal.sites()) {
    const Vec3 r = crystal.cartesian(site.fractional);
    const cplx phase = std::polar(1.0, H.dot(r));
    SpinorMatrix term = site.b_fm * one;
    if (hn > 0.0) term -= cplx(0.0, 2.0 * schwinger_strength(site, hn)) * spin;
    sum += term * phase;
  }
  return pref * sum;
}

StructureSums structure_sums(const CrystalModel& crystal, const Miller& hkl) {
  StructureSums out;
  const Vec3 hv = hkl.as_vector();
  out.h_magnitude = reciprocal_vector(crystal, hkl).norm();
  out.prefactor = PhysicalConstants::optical_prefactor() / crystal.volume() * 1e-5;
  for (const auto& site : crystal.sites()) {
    const cplx phase = std::polar(1.0, kTwoPi * hv.dot(site.fractional));
    out.nuclear += site.b_fm * phase;
    out.schwinger += schwinger_strength(site, out.h_magnitude) * phase;
    out.forward += site.b_fm;
  }
  return out;
}

ChannelPotentials channel_potentials(const StructureSums& sums, double geometric, int spin,
                                     double schwinger_scale) {
  ChannelPotentials p;
  p.v0 = sums.prefactor * sums.forward;
  const cplx spin_term = cplx(0.0, 2.0 * spin * schwinger_scale * geometric) * sums.schwinger;
  p.vH = sums.prefactor * (sums.nuclear - spin_term);
  p.vmH = std::conj(p.vH);
  return p;
}

namespace {

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& what) {
  throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T read_field(std::istringstream& in, const std::filesystem::path& path, int line,
             const char* name) {
  T value{};
  if (!(in >> value)) parse_fail(path, line, std::string("expected numeric field '") + name + "'");
  return value;
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

FormFactorTable load_form_factors(const std::filesystem::path& path) {
  auto in = open_text(path);
  FormFactorTable table;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream line(strip_comment(raw));
    std::string label;
    if (!(line >> label)) continue;
    FormFactor f;
    for (int i = 0; i < 4; ++i) {
      f.a[i] = read_field<double>(line, path, line_no, "a");
      f.b[i] = read_field<double>(line, path, line_no, "b");
    }
    f.c = read_field<double>(line, path, line_no, "c");
    std::string extra;
    if (line >> extra) parse_fail(path, line_no, "trailing field '" + extra + "'");
    if (table.count(label)) parse_fail(path, line_no, "duplicate label '" + label + "'");
    table.emplace(label, f);
  }
  if (table.empty()) throw ConfigError(path.string() + ": no form-factor entries");
  return table;
}

CrystalModel load_material(const std::filesystem::path& path, const FormFactorTable& table) {
  auto in = open_text(path);
  std::string id;
  std::vector<Vec3> lattice;
  std::vector<AtomSite> sites;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream line(strip_comment(raw));
    std::string key;
    if (!(line >> key)) continue;
    if (key == "material") {
      if (!(line >> id)) parse_fail(path, line_no, "material needs an identifier");
    } else if (key == "lattice") {
      if (lattice.size() == 3) parse_fail(path, line_no, "more than three lattice vectors");
      Vec3 v;
      for (int i = 0; i < 3; ++i) v[i] = read_field<double>(line, path, line_no, "lattice");
      lattice.push_back(v);
    } else if (key == "site") {
      AtomSite s;
      if (!(line >> s.label)) parse_fail(path, line_no, "site needs a label");
      for (int i = 0; i < 3; ++i) s.fractional[i] = read_field<double>(line, path, line_no, "xyz");
      s.b_fm = read_field<double>(line, path, line_no, "b");
      s.Z = read_field<int>(line, path, line_no, "Z");
      if (s.Z < 0) parse_fail(path, line_no, "negative Z");
      auto it = table.find(s.label);
      if (it == table.end()) {
        if (s.Z != 0) parse_fail(path, line_no, "no form factor for label '" + s.label + "'");
      } else {
        s.form = it->second;
      }
      sites.push_back(s);
    } else {
      parse_fail(path, line_no, "unknown keyword '" + key + "'");
    }
    std::string extra;
    if (line >> extra) parse_fail(path, line_no, "trailing field '" + extra + "'");
  }
  if (lattice.size() != 3) throw ConfigError(path.string() + ": need exactly three lattice lines");
  if (sites.empty()) throw ConfigError(path.string() + ": no sites");
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.row(i) = lattice[i].transpose();
  return CrystalModel(id.empty() ? path.stem().string() : id, m, std::move(sites));
}

}  // namespace sodiff
