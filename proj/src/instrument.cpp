// SPDX-License-Identifier: Apache-2.0
#include "sodiff/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_fit.h>
#include <gsl/gsl_matrix.h>
#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_vector.h>

#include "sodiff/constants.hpp"

namespace sodiff {

namespace {
constexpr double kPi = PhysicalConstants::pi;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool uniform(const std::vector<double>& x) {
  if (x.size() < 2) return false;
  const double h = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
  if (!(h > 0.0)) return false;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs((x[i] - x[i - 1]) - h) > 1e-6 * h) return false;
  }
  return true;
}

}  // namespace

std::vector<double> ResolutionKernel::weights(double h) const {
  if (!(sigma > 0.0)) throw std::invalid_argument("resolution sigma must be positive");
  if (!(h > 0.0)) throw std::invalid_argument("grid step must be positive");
  const auto half = static_cast<std::size_t>(std::floor(truncation * sigma / h));
  std::vector<double> w(2 * half + 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double x = (static_cast<double>(k) - static_cast<double>(half)) * h;
    w[k] = std::exp(-0.5 * x * x / (sigma * sigma));
    sum += w[k];
  }
  for (auto& v : w) v /= sum;
  return w;
}

std::vector<double> smear(const std::vector<double>& values, const ResolutionKernel& kernel, double h) {
  if (kernel.sigma < h * (1.0 - 1e-12)) {
    throw std::invalid_argument("kernel under-resolved: sigma is smaller than the grid step");
  }
  const auto w = kernel.weights(h);
  const auto n = static_cast<long>(values.size());
  const long half = static_cast<long>(w.size() / 2);
  if (half >= n) throw std::invalid_argument("kernel support exceeds the curve length");
  // Half-sample symmetric reflection: ... v1 v0 | v0 v1 ... v_{n-1} | v_{n-1} v_{n-2} ...
  auto reflect = [n](long i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> out(values.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -half; k <= half; ++k) acc += w[static_cast<std::size_t>(k + half)] * values[reflect(i - k)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

PolarizationCurve convolve_resolution(const PolarizationCurve& curve, const ResolutionKernel& kernel) {
  if (!uniform(curve.abscissa)) throw std::invalid_argument("convolution needs a uniform abscissa");
  const double h = (curve.abscissa.back() - curve.abscissa.front()) / static_cast<double>(curve.abscissa.size() - 1);
  const std::size_t n = curve.abscissa.size();
  std::vector<double> I(n), px(n), py(n), pz(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = curve.valid.empty() || curve.valid[i];
    I[i] = ok ? curve.weight[i] : 0.0;
    px[i] = ok ? curve.Px[i] * I[i] : 0.0;
    py[i] = ok ? curve.Py[i] * I[i] : 0.0;
    pz[i] = ok ? curve.Pz[i] * I[i] : 0.0;
  }
  PolarizationCurve out = curve;
  out.weight = smear(I, kernel, h);
  const auto sx = smear(px, kernel, h);
  const auto sy = smear(py, kernel, h);
  const auto sz = smear(pz, kernel, h);
  out.valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = out.weight[i];
    if (w > 1e-300) {
      out.Px[i] = sx[i] / w;
      out.Py[i] = sy[i] / w;
      out.Pz[i] = sz[i] / w;
      out.valid[i] = 1;
    } else {
      out.Px[i] = out.Py[i] = out.Pz[i] = std::nan("");
    }
  }
  return out;
}

double angle_unit_factor(const std::string& unit) {
  if (unit == "rad") return 1.0;
  if (unit == "deg") return kPi / 180.0;
  if (unit == "arcsec") return kPi / 180.0 / 3600.0;
  throw ConfigError("unknown angle unit '" + unit + "' (expected rad, deg or arcsec)");
}

MeasuredScan ingest_scan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  MeasuredScan scan;
  std::string raw;
  int line_no = 0;
  bool have_unit = false;
  std::vector<std::string> columns;
  auto fail = [&](const std::string& what) -> void {
    throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) scan.metadata[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
      continue;
    }
    const auto cells = split_csv(line);
    if (!have_unit) {
      if (cells.size() != 2 || cells[0] != "abscissa_unit") fail("first line must be 'abscissa_unit,<unit>'");
      scan.unit = cells[1];
      angle_unit_factor(scan.unit);
      have_unit = true;
      continue;
    }
    if (columns.empty()) {
      columns = cells;
      if (columns.size() < 2 || columns.size() > 3 || columns[0] != "x" || columns[1] != "value" ||
          (columns.size() == 3 && columns[2] != "sigma")) {
        fail("column header must be 'x,value' or 'x,value,sigma'");
      }
      continue;
    }
    if (cells.size() != columns.size()) {
      fail("expected " + std::to_string(columns.size()) + " cells, found " + std::to_string(cells.size()));
    }
    std::array<double, 3> v{};
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      try {
        v[c] = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size() || !std::isfinite(v[c])) {
        fail("column '" + columns[c] + "' is not a finite number: '" + cells[c] + "'");
      }
    }
    if (columns.size() == 3 && !(v[2] > 0.0)) fail("sigma must be positive");
    scan.x.push_back(v[0] * angle_unit_factor(scan.unit));
    scan.value.push_back(v[1]);
    if (columns.size() == 3) scan.sigma.push_back(v[2]);
  }
  if (!have_unit) throw ConfigError(path.string() + ": empty scan file");
  if (columns.empty()) throw ConfigError(path.string() + ": missing column header");
  if (scan.x.empty()) throw ConfigError(path.string() + ": no data rows");
  return scan;
}

double FitResult::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw std::out_of_range("no fit parameter '" + name + "'");
}

double FitResult::uncertainty(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return std::sqrt(covariance[i][i]);
  }
  throw std::out_of_range("no fit parameter '" + name + "'");
}

double gaussian_derivative(double x, double A, double x0, double w, double c) {
  const double d = x - x0;
  return A * d * std::exp(-0.5 * d * d / (w * w)) + c;
}

namespace {

struct FitData {
  const MeasuredScan* scan;
};

double point_weight(const MeasuredScan& s, std::size_t i) { return s.sigma.empty() ? 1.0 : 1.0 / s.sigma[i]; }

int gd_residual(const gsl_vector* p, void* data, gsl_vector* f) {
  const auto& s = *static_cast<FitData*>(data)->scan;
  const double A = gsl_vector_get(p, 0), x0 = gsl_vector_get(p, 1), w = gsl_vector_get(p, 2),
               c = gsl_vector_get(p, 3);
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    gsl_vector_set(f, i, (gaussian_derivative(s.x[i], A, x0, w, c) - s.value[i]) * point_weight(s, i));
  }
  return GSL_SUCCESS;
}

int gd_jacobian(const gsl_vector* p, void* data, gsl_matrix* J) {
  const auto& s = *static_cast<FitData*>(data)->scan;
  const double A = gsl_vector_get(p, 0), x0 = gsl_vector_get(p, 1), w = gsl_vector_get(p, 2);
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double d = s.x[i] - x0;
    const double e = std::exp(-0.5 * d * d / (w * w));
    const double k = point_weight(s, i);
    gsl_matrix_set(J, i, 0, k * d * e);
    gsl_matrix_set(J, i, 1, k * A * e * (d * d / (w * w) - 1.0));
    gsl_matrix_set(J, i, 2, k * A * d * d * d / (w * w * w) * e);
    gsl_matrix_set(J, i, 3, k);
  }
  return GSL_SUCCESS;
}

}  // namespace

FitResult fit_gaussian_derivative(const MeasuredScan& scan) {
  const std::size_t n = scan.x.size();
  if (n < 5) throw std::invalid_argument("Gaussian-derivative fit needs at least five points");
  if (!scan.sigma.empty() && scan.sigma.size() != n) throw std::invalid_argument("sigma count mismatch");

  // Start values: the extrema of a Gaussian derivative sit at x0 -+ w.
  const auto [mn, mx] = std::minmax_element(scan.value.begin(), scan.value.end());
  const double x_min = scan.x[static_cast<std::size_t>(mn - scan.value.begin())];
  const double x_max = scan.x[static_cast<std::size_t>(mx - scan.value.begin())];
  const auto [lo, hi] = std::minmax_element(scan.x.begin(), scan.x.end());
  const double span = *hi - *lo;
  double w0 = 0.5 * std::abs(x_max - x_min);
  if (!(w0 > 0.0)) w0 = span / 4.0;
  w0 = std::clamp(w0, span / (4.0 * static_cast<double>(n)), span);
  double c0 = 0.0;
  for (double v : scan.value) c0 += v;
  c0 /= static_cast<double>(n);
  const double sign = x_max > x_min ? 1.0 : -1.0;
  const double A0 = sign * (*mx - *mn) / (2.0 * w0 * std::exp(-0.5));
  const double x00 = 0.5 * (x_max + x_min);

  FitData data{&scan};
  gsl_multifit_nlinear_fdf fdf;
  fdf.f = gd_residual;
  fdf.df = gd_jacobian;
  fdf.fvv = nullptr;
  fdf.n = n;
  fdf.p = 4;
  fdf.params = &data;
  gsl_multifit_nlinear_parameters params = gsl_multifit_nlinear_default_parameters();
  params.scale = gsl_multifit_nlinear_scale_more;
  gsl_multifit_nlinear_workspace* ws =
      gsl_multifit_nlinear_alloc(gsl_multifit_nlinear_trust, &params, n, 4);
  double start[4] = {A0 == 0.0 ? 1e-12 : A0, x00, w0, c0};
  gsl_vector_view x = gsl_vector_view_array(start, 4);
  gsl_multifit_nlinear_init(&x.vector, &fdf, ws);

  gsl_error_handler_t* old = gsl_set_error_handler_off();
  int info = 0;
  const std::size_t max_iter = 500;
  const int status = gsl_multifit_nlinear_driver(max_iter, 1e-12, 1e-12, 1e-14, nullptr, nullptr, &info, ws);
  gsl_set_error_handler(old);

  FitResult r;
  r.names = {"amplitude", "center", "width", "baseline"};
  r.iterations = gsl_multifit_nlinear_niter(ws);
  const gsl_vector* best = gsl_multifit_nlinear_position(ws);
  for (std::size_t i = 0; i < 4; ++i) r.values.push_back(gsl_vector_get(best, i));
  r.values[2] = std::abs(r.values[2]);
  const gsl_vector* f = gsl_multifit_nlinear_residual(ws);
  double chi2 = 0.0;
  gsl_blas_ddot(f, f, &chi2);
  r.chi2 = chi2;
  r.dof = n - 4;

  gsl_matrix* covar = gsl_matrix_alloc(4, 4);
  gsl_multifit_nlinear_covar(gsl_multifit_nlinear_jac(ws), 0.0, covar);
  // Without per-point sigmas the scatter of the residuals sets the scale.
  const double scale = scan.sigma.empty() ? (r.dof > 0 ? chi2 / static_cast<double>(r.dof) : 0.0) : 1.0;
  r.covariance.assign(4, std::vector<double>(4));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) r.covariance[i][j] = scale * gsl_matrix_get(covar, i, j);
  }
  gsl_matrix_free(covar);
  gsl_multifit_nlinear_free(ws);

  const bool finite = std::all_of(r.values.begin(), r.values.end(), [](double v) { return std::isfinite(v); });
  r.converged = status == GSL_SUCCESS && finite;
  if (!r.converged) {
    throw PhysicsError("Gaussian-derivative fit did not converge after " + std::to_string(r.iterations) +
                       " iterations (chi2 = " + std::to_string(chi2) + ", status: " + gsl_strerror(status) + ")");
  }
  return r;
}

FitResult linear_fit(const MeasuredScan& scan) {
  const std::size_t n = scan.x.size();
  if (n < 2) throw std::invalid_argument("linear fit needs at least two points");
  double c0 = 0, c1 = 0, cov00 = 0, cov01 = 0, cov11 = 0, chisq = 0;
  gsl_error_handler_t* old = gsl_set_error_handler_off();
  int status;
  if (scan.sigma.empty()) {
    status = gsl_fit_linear(scan.x.data(), 1, scan.value.data(), 1, n, &c0, &c1, &cov00, &cov01, &cov11, &chisq);
  } else {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (scan.sigma[i] * scan.sigma[i]);
    status = gsl_fit_wlinear(scan.x.data(), 1, w.data(), 1, scan.value.data(), 1, n, &c0, &c1, &cov00, &cov01,
                             &cov11, &chisq);
  }
  gsl_set_error_handler(old);
  if (status != GSL_SUCCESS) throw PhysicsError(std::string("linear fit failed: ") + gsl_strerror(status));
  FitResult r;
  r.names = {"slope", "intercept"};
  r.values = {c1, c0};
  r.covariance = {{cov11, cov01}, {cov01, cov00}};
  r.converged = true;
  r.chi2 = chisq;
  r.dof = n - 2;
  r.iterations = 1;
  return r;
}

double CoilModel::coil_field() const {
  if (guide_field == 0.0) return flip_angle * speed / (gyromagnetic_ratio * path_length);
  // The coil field is transverse to the guide field, so they add in quadrature.
  const double total = guide_field + flip_angle * speed / (gyromagnetic_ratio * path_length);
  return std::sqrt(total * total - guide_field * guide_field);
}

double CoilModel::guide_amplification() const {
  if (guide_field == 0.0) return 1.0;
  if (!(speed > 0.0 && path_length > 0.0 && gyromagnetic_ratio > 0.0)) {
    throw std::invalid_argument("guide-field coil model needs speed, path length and gyromagnetic ratio");
  }
  // Inside the coil the spin precesses in |B_c + B_g|; calibration fixes
  // |B_c + B_g| - B_g = flip v / (gamma L), and a path change dL adds
  // gamma |B_c + B_g| dL / v of phase.
  const double excess = flip_angle * speed / (gyromagnetic_ratio * path_length);
  return (guide_field + excess) / excess;
}

CoilModel thermal_coil(double tilt, double guide_field) {
  CoilModel m;
  m.tilt = tilt;
  m.guide_field = guide_field;
  m.speed = PhysicalConstants::speed(1.8);
  m.gyromagnetic_ratio = PhysicalConstants::neutron_gyromagnetic_ratio;
  // Path length at which a 1 mT guide field enlarges the divergence phase thirtyfold.
  m.path_length = 29.0 * m.flip_angle * m.speed / (m.gyromagnetic_ratio * 1e-3);
  return m;
}

double coil_tilt_phase(const CoilModel& model, double alpha) {
  const double t = model.tilt;
  if (!(std::abs(t) < kPi / 2) || !(std::abs(t - alpha) < kPi / 2)) {
    throw std::domain_error("coil tilt and divergence must stay within 90 degrees of the beam");
  }
  const double base = model.flip_angle * (1.0 / std::cos(t) - 1.0 / std::cos(t - alpha));
  return base * model.guide_amplification();
}

}  // namespace sodiff
